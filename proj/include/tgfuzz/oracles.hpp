#pragma once

// Bug oracles: runtime checks over the instruction stream, the sender
// balance check, and contract-defined violation events.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tgfuzz/vm.hpp"

namespace tgfuzz {

enum class OracleId : std::uint8_t {
    InfiniteLoop, PrecisionLoss, UnnecessaryCast, UnnecessaryBool, ShlOverflow, EarningProfits, Custom,
};
constexpr std::size_t kOracleCount = 7;

enum class Severity : std::uint8_t { Critical, Major, Medium };

const char* oracle_name(OracleId id);
std::optional<OracleId> oracle_from_name(std::string_view name);
const char* severity_name(Severity s);
Severity default_severity(OracleId id);

struct Finding {
    OracleId oracle = OracleId::Custom;
    Severity severity = Severity::Medium;
    /// PrecisionLoss: "lossy" or "amplified". Custom: the registered oracle name.
    std::string qualifier;
    bool has_site = false;
    FunctionId function = 0;
    std::uint32_t pc = 0;
    std::string detail;
    /// Replay text of the transaction that triggered the finding (filled by the engine).
    std::string witness;

    /// Dedup key: oracle, qualifier and site.
    std::string key(const Program& program) const;
    std::string title() const;
};

struct OracleConfig {
    std::array<bool, kOracleCount> enabled{true, true, true, true, true, true, true};
    /// Report only amplified precision loss.
    bool precision_amplified_only = false;
    /// Traversals of a branch site with unchanged operands needed before an out-of-gas run is flagged.
    std::uint32_t infinite_loop_threshold = 16;
    /// Event tag -> oracle name for contract-side violation reports.
    std::map<U256, std::string> custom_tags;

    bool on(OracleId id) const { return enabled[static_cast<std::size_t>(id)]; }
    /// Throws std::invalid_argument when a threshold is not positive.
    void check() const;
};

/// Watches the instruction stream; call finish() once the run has ended.
class RuntimeOracles : public ExecObserver {
public:
    explicit RuntimeOracles(const OracleConfig& cfg) : cfg_(cfg) {}
    void on_step(const StepInfo& step) override;
    std::vector<Finding> finish(const ExecResult& result);

private:
    struct LoopSite {
        std::uint64_t traversals = 0;
        std::pair<U256, U256> operands;
        bool changed = false;
    };
    struct LastCmp {
        FunctionId function = 0;
        std::uint32_t pc = 0;
        std::pair<U256, U256> operands;
    };

    void add(OracleId id, std::string qualifier, const StepInfo& s, std::string detail);

    const OracleConfig& cfg_;
    std::vector<Finding> findings_;
    std::map<std::tuple<int, std::string, FunctionId, std::uint32_t>, bool> seen_;
    std::map<std::pair<FunctionId, std::uint32_t>, LoopSite> loops_;
    std::map<std::uint32_t, LastCmp> last_cmp_;
};

/// Replays `txn` with the runtime oracles attached.
std::vector<Finding> check_runtime_oracles(const Transaction& txn, const Program& program, const WorldState& genesis,
                                           const OracleConfig& cfg, std::uint64_t gas_limit = kDefaultGasLimit,
                                           ExecResult* result = nullptr);

std::optional<Finding> check_earning_profits(const ExecResult& result);

std::vector<Finding> check_custom_events(const ExecResult& result, const std::map<U256, std::string>& registry);

/// Keeps the first finding per key, preserving order.
std::vector<Finding> dedup_findings(std::vector<Finding> findings, const Program& program);

}  // namespace tgfuzz
