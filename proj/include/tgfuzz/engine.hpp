#pragma once

// The fuzzing campaign: configuration, action scheduling, corpus admission,
// workers and the output directory.

#include <array>
#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuzz/concolic.hpp"
#include "tgfuzz/oracles.hpp"
#include "tgfuzz/synth.hpp"
#include "tgfuzz/vm.hpp"

namespace tgfuzz {

class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ActionWeights {
    double generate = 0.2;
    double mutate = 0.6;
    double concolic = 0.2;
};

struct CampaignConfig {
    std::string package_path;
    /// Empty: no genesis objects (initializers still run).
    std::string genesis_path;
    std::uint64_t seed = 0;
    /// 0 with no time limit means zero iterations.
    std::uint64_t iterations = 1000;
    /// Seconds; 0 disables the wall-clock limit.
    double time_limit = 0;
    std::uint64_t gas_limit = kDefaultGasLimit;
    ActionWeights weights;
    /// Values, Extend, Insert, Remove.
    std::array<double, 4> mutator_weights{0.3, 0.3, 0.2, 0.2};
    std::uint64_t concolic_budget = kDefaultSolverBudget;
    std::string solver = "reference";
    OracleConfig oracles;
    std::map<std::string, std::string> renames;
    std::uint32_t workers = 1;
    bool no_typegraph = false;
    bool no_typeparams = false;
    bool no_concolic = false;
    bool dump_constraints = false;
    std::string out_dir;
    /// Stop as soon as every listed oracle has produced a finding.
    std::set<OracleId> stop_on;
    /// Print a stats line every second to stderr.
    bool print_stats = false;

    /// Throws ConfigError when a limit or weight is out of range.
    void check() const;
    /// Weights after ablations, normalized to sum to 1.
    ActionWeights effective_weights() const;
};

/// Reads a JSON campaign file; relative paths resolve against its directory.
CampaignConfig load_campaign_config(const std::string& path);

struct Seed {
    Transaction txn;
    std::vector<CoverageKey> coverage;
    std::uint64_t iteration = 0;
    std::uint64_t fuzzed = 0;
    /// Recomputed on every admission: sum over arms of 1 / (seeds covering the arm).
    double rarity = 1.0;

    double energy() const { return rarity / (1.0 + static_cast<double>(fuzzed)); }
};

struct Action {
    enum class Kind : std::uint8_t { Generate, Mutate, Concolic };
    Kind kind = Kind::Generate;
    std::size_t seed = 0;
    std::vector<Mutator> mutators;
};

const char* action_name(Action::Kind k);

/// Empty corpus forces Generate; otherwise weighted by `weights`, seed chosen by energy.
Action select_action(const std::vector<Seed>& corpus, Rng& rng, const ActionWeights& weights,
                     const std::array<double, 4>& mutator_weights);

struct ReportedFinding {
    Finding finding;
    std::uint64_t iteration = 0;
    std::uint32_t worker = 0;
};

struct CampaignReport {
    std::uint64_t iterations = 0;
    std::uint64_t executions = 0;
    std::uint64_t rejected = 0;
    std::uint64_t synthesis_failures = 0;
    std::array<std::uint64_t, 3> actions{0, 0, 0};
    std::array<std::uint64_t, 3> concolic_outcomes{0, 0, 0};
    std::size_t covered = 0;
    std::size_t total_arms = 0;
    std::size_t corpus_size = 0;
    std::vector<ReportedFinding> findings;
    /// First iteration at which the goal predicate held.
    std::optional<std::uint64_t> goal_iteration;
    double seconds = 0;

    double coverage_ratio() const { return total_arms == 0 ? 0.0 : static_cast<double>(covered) / total_arms; }
    double exec_per_second() const { return seconds > 0 ? static_cast<double>(executions) / seconds : 0.0; }
    std::size_t count(OracleId id, const std::string& qualifier = {}) const;
    /// Deterministic JSON summary (no timing).
    std::string to_json(const Program& program) const;
};

using GoalPredicate = std::function<bool(const Transaction&, const ExecResult&)>;

struct CampaignResult {
    CampaignReport report;
    std::vector<Seed> corpus;
};

/// Throws ConfigError before the loop when the package, genesis or config is unusable.
CampaignResult run_campaign(const CampaignConfig& cfg, GoalPredicate goal = {});

/// Same, against an already loaded program and genesis.
CampaignResult run_campaign(const CampaignConfig& cfg, std::shared_ptr<const Program> program,
                            const WorldState& genesis, GoalPredicate goal = {});

/// Writes report.json, findings.jsonl, witnesses/, corpus/, coverage.txt and timing.json.
void write_output(const std::string& dir, const CampaignConfig& cfg, const CampaignResult& result,
                  const Program& program);

}  // namespace tgfuzz
