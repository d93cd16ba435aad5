#pragma once

// Reference interpreter for the bytecode: runtime values with a symbolic
// shadow, the object pool (world state), genesis loading and coverage.

#include <atomic>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuzz/pool.hpp"
#include "tgfuzz/program.hpp"
#include "tgfuzz/sym.hpp"
#include "tgfuzz/transaction.hpp"

namespace tgfuzz {

struct Value {
    enum class Kind : std::uint8_t { Int, Bool, Vec, Struct, Ref };
    Kind kind = Kind::Int;
    Prim prim = Prim::U64;
    U256 num = 0;
    /// Vector elements or struct fields.
    std::vector<Value> elems;
    /// Struct: full concrete type. Vec: element type.
    TypeTag type;
    ObjectId object = 0;
    bool mut_ref = false;
    SymRef sym;

    static Value integer(Prim p, U256 v, SymRef sym = nullptr);
    static Value boolean(bool b, SymRef sym = nullptr);
    static Value vec(TypeTag element, std::vector<Value> elems = {});
    static Value structure(TypeTag type, std::vector<Value> fields);
    static Value ref(ObjectId id, bool mut);

    bool truthy() const { return num != 0; }
    std::string to_string() const;
    /// Equality of contents, ignoring symbolic shadows.
    bool same(const Value& other) const;
};

struct PoolObject {
    ObjectId id = 0;
    TypeTag type;
    Ownership ownership = Ownership::SenderOwned;
    Value value;
};

struct Event {
    U256 tag = 0;
    std::vector<U256> payload;
    FunctionId function = 0;
    std::uint32_t pc = 0;
};

class WorldState {
public:
    std::map<ObjectId, PoolObject> objects;
    ObjectId next_id = 1;

    PoolView view() const;
    ObjectId add(TypeTag type, Ownership ownership, Value value);
    /// Sender balance per coin type argument, from a recursive scan of sender-owned objects.
    std::map<TypeTag, U256> sender_balances() const;
};

class GenesisError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Parses a genesis document (JSON) and runs every module initializer of the
/// target package once. Throws GenesisError.
WorldState load_genesis(const std::string& json_text, const Program& program);
WorldState load_genesis_file(const std::string& path, const Program& program);
/// Genesis with no objects, initializers still run.
WorldState empty_genesis(const Program& program);

/// Fresh copy of the genesis world for one transaction.
inline WorldState reset_state(const WorldState& genesis) { return genesis; }

enum class ExecStatus : std::uint8_t { Success, Abort, OutOfGas };

enum class AbortKind : std::uint8_t {
    Explicit,
    ArithmeticOverflow,
    DivisionByZero,
    ShiftOverflow,
    CastOutOfRange,
    VectorBounds,
    /// Ill-formed input to the interpreter (e.g. a transaction that does not validate).
    Invariant,
};

const char* exec_status_name(ExecStatus s);
const char* abort_kind_name(AbortKind k);

struct AbortInfo {
    AbortKind kind = AbortKind::Explicit;
    U256 code = 0;
    FunctionId function = 0;
    std::uint32_t pc = 0;
    std::uint32_t call_index = 0;
    std::string message;
};

/// (function, pc, taken) packed into one key.
using CoverageKey = std::uint64_t;
inline CoverageKey coverage_key(FunctionId f, std::uint32_t pc, bool taken) {
    return (static_cast<std::uint64_t>(f) << 33) | (static_cast<std::uint64_t>(pc) << 1) | (taken ? 1u : 0u);
}
inline FunctionId coverage_function(CoverageKey k) { return static_cast<FunctionId>(k >> 33); }
inline std::uint32_t coverage_pc(CoverageKey k) { return static_cast<std::uint32_t>((k >> 1) & 0xFFFFFFFFu); }
inline bool coverage_taken(CoverageKey k) { return (k & 1u) != 0; }

/// One top-level literal input the interpreter turned into a symbolic variable.
struct InputVar {
    std::uint32_t call = 0;
    std::uint32_t arg = 0;
    /// Element index within a literal vector, 0 for scalars.
    std::uint32_t element = 0;
    Prim prim = Prim::U64;
    U256 value = 0;
};

struct ExecResult {
    ExecStatus status = ExecStatus::Success;
    std::optional<AbortInfo> abort;
    /// Sorted, unique arms hit (aborted runs still report what they reached).
    std::vector<CoverageKey> coverage;
    std::uint64_t gas_used = 0;
    std::map<TypeTag, U256> balance_before;
    std::map<TypeTag, U256> balance_after;
    std::vector<Event> events;
    std::vector<InputVar> inputs;
    /// Number of calls that ran to completion.
    std::uint32_t calls_completed = 0;
};

/// What the observer sees after each instruction is decoded. For operations
/// that abort, the callback fires before the abort with `aborted` set.
struct StepInfo {
    FunctionId function = 0;
    std::uint32_t pc = 0;
    std::uint32_t call_index = 0;
    std::uint32_t depth = 0;
    const Instruction* ins = nullptr;
    const Value* lhs = nullptr;
    const Value* rhs = nullptr;
    const Value* result = nullptr;
    /// Conditional branches: whether the jump was taken.
    bool taken = false;
    bool aborted = false;
};

class ExecObserver {
public:
    virtual ~ExecObserver() = default;
    virtual void on_step(const StepInfo& step) = 0;
};

constexpr std::uint64_t kDefaultGasLimit = 100000;

struct ExecOptions {
    std::uint64_t gas_limit = kDefaultGasLimit;
    /// Attach input variables and arithmetic shadows.
    bool symbolic = true;
    std::vector<ExecObserver*> observers;
};

/// Executes against a private copy of `genesis`. The final world is written to `final_state` when given.
ExecResult execute(const Transaction& txn, const Program& program, const WorldState& genesis,
                   const ExecOptions& options = {}, WorldState* final_state = nullptr);

/// Shared, thread-safe set of branch arms hit so far.
class CoverageMap {
public:
    explicit CoverageMap(const Program& program);

    /// Merges a run's coverage; returns the number of arms that were new.
    std::size_t record(const std::vector<CoverageKey>& keys);
    bool contains(CoverageKey key) const;
    std::size_t covered() const { return covered_.load(); }
    std::size_t total() const { return total_; }
    std::vector<CoverageKey> snapshot() const;

private:
    std::optional<std::size_t> slot(CoverageKey key) const;

    std::map<CoverageKey, std::size_t> index_;
    std::unique_ptr<std::atomic<std::uint8_t>[]> bits_;
    std::size_t total_ = 0;
    std::atomic<std::size_t> covered_{0};
};

/// Convenience wrapper: true when the run hit an arm the map had not seen.
inline bool record_coverage(const ExecResult& result, CoverageMap& map) { return map.record(result.coverage) > 0; }

}  // namespace tgfuzz
