#pragma once

// Path-constraint collection over primitive transaction inputs, branch
// flipping, and a bounded reference solver behind a pluggable interface.

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <string>
#include <vector>

#include "tgfuzz/rng.hpp"
#include "tgfuzz/sym.hpp"
#include "tgfuzz/vm.hpp"

namespace tgfuzz {

enum class ConstraintKind : std::uint8_t { BranchCond, NoOverflow, CastInRange, VecIndexInBounds };

const char* constraint_kind_name(ConstraintKind k);

struct Constraint {
    ConstraintKind kind = ConstraintKind::BranchCond;
    /// Boolean expression; the constraint holds when it evaluates to `expected`.
    SymRef expr;
    bool expected = true;
    FunctionId function = 0;
    std::uint32_t pc = 0;
    std::uint32_t call_index = 0;
    /// BranchCond only: whether the jump was taken on the concrete run.
    bool taken = false;

    bool holds(const std::vector<U256>& inputs) const { return (sym_eval(*expr, inputs) != 0) == expected; }
};

struct PathCondition {
    std::vector<Constraint> constraints;
    std::vector<InputVar> inputs;

    std::vector<U256> current_values() const;
};

/// Variable id -> value; variables not mentioned keep their current value.
struct Assignment {
    std::map<std::uint32_t, U256> values;
    friend bool operator==(const Assignment&, const Assignment&) = default;
};

enum class SolveStatus : std::uint8_t { Sat, Unsat, Unknown };
const char* solve_status_name(SolveStatus s);

struct SolveResult {
    SolveStatus status = SolveStatus::Unknown;
    Assignment assignment;
};

class TraceDivergence : public std::logic_error {
    using std::logic_error::logic_error;
};

class BindingMiss : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

class Solver {
public:
    virtual ~Solver() = default;
    virtual std::string name() const = 0;
    /// `inputs` supplies widths and current values for every variable the constraints mention.
    virtual SolveResult solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                              std::uint64_t budget, Rng& rng) = 0;
};

constexpr std::uint64_t kDefaultSolverBudget = 10000;

/// Isolation / binary search, then interval propagation, then seeded random search.
class ReferenceSolver : public Solver {
public:
    std::string name() const override { return "reference"; }
    SolveResult solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                      std::uint64_t budget, Rng& rng) override;
};

/// Random search only (no isolation or propagation); useful as a baseline.
class RandomSolver : public Solver {
public:
    std::string name() const override { return "random"; }
    SolveResult solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                      std::uint64_t budget, Rng& rng) override;
};

/// "reference" or "random"; throws std::invalid_argument otherwise.
std::unique_ptr<Solver> make_solver(const std::string& name);

/// Convenience wrapper around ReferenceSolver.
SolveResult solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                  std::uint64_t budget = kDefaultSolverBudget, std::uint64_t seed = 0);

/// Observer that records constraints while a transaction runs.
/// Loop bodies are unrolled at most kMaxConstraintsPerSite times per (site, call, direction);
/// the whole path condition is capped at kMaxConstraints. A failing guard is always kept.
constexpr std::size_t kMaxConstraintsPerSite = 8;
constexpr std::size_t kMaxConstraints = 1024;

class ConstraintCollector : public ExecObserver {
public:
    void on_step(const StepInfo& step) override;
    std::vector<Constraint> constraints;

private:
    std::map<std::tuple<FunctionId, std::uint32_t, std::uint32_t, bool>, std::size_t> per_site_;
};

struct Collected {
    ExecResult result;
    PathCondition path;
};

/// Runs the transaction with symbolic inputs and returns the path condition.
/// Throws TraceDivergence when a recorded constraint does not hold concretely.
Collected collect_constraints(const Transaction& txn, const Program& program, const WorldState& state,
                              std::uint64_t gas_limit = kDefaultGasLimit, std::vector<ExecObserver*> extra = {});

struct FlipResult {
    SolveStatus status = SolveStatus::Unknown;
    Assignment assignment;
    /// Indices into the path condition of the negated constraints.
    std::vector<std::size_t> flipped;
    /// Exactly what was handed to the solver.
    std::vector<Constraint> submitted;
};

/// Indices eligible for flipping: branch conditions, plus a trailing guard that failed.
std::vector<std::size_t> flip_candidates(const PathCondition& pc);

/// Negates one or two randomly chosen candidates (preferring arms not yet in `coverage`)
/// and solves the prefix. `targets` overrides the random choice.
FlipResult flip_and_solve(const PathCondition& pc, Rng& rng, Solver& solver,
                          std::uint64_t budget = kDefaultSolverBudget, const CoverageMap* coverage = nullptr,
                          std::optional<std::vector<std::size_t>> targets = std::nullopt);

/// Writes the assignment into the literal bindings (and the aligned trace, if any).
Transaction apply_assignment(const Transaction& txn, const std::vector<InputVar>& inputs, const Assignment& a);

/// One constraint per line: `<kind> <function>@<pc> <expected> <expr>`.
std::string dump_constraints(const PathCondition& pc, const Program& program);

}  // namespace tgfuzz
