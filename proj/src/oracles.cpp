#include "tgfuzz/oracles.hpp"

#include <functional>
#include <set>
#include <sstream>

namespace tgfuzz {

const char* oracle_name(OracleId id) {
    switch (id) {
    case OracleId::InfiniteLoop: return "InfiniteLoop";
    case OracleId::PrecisionLoss: return "PrecisionLoss";
    case OracleId::UnnecessaryCast: return "UnnecessaryCast";
    case OracleId::UnnecessaryBool: return "UnnecessaryBool";
    case OracleId::ShlOverflow: return "ShlOverflow";
    case OracleId::EarningProfits: return "EarningProfits";
    case OracleId::Custom: return "Custom";
    }
    return "?";
}

std::optional<OracleId> oracle_from_name(std::string_view name) {
    for (std::size_t i = 0; i < kOracleCount; ++i)
        if (name == oracle_name(static_cast<OracleId>(i))) return static_cast<OracleId>(i);
    return std::nullopt;
}

const char* severity_name(Severity s) {
    switch (s) {
    case Severity::Critical: return "critical";
    case Severity::Major: return "major";
    case Severity::Medium: return "medium";
    }
    return "?";
}

Severity default_severity(OracleId id) {
    if (id == OracleId::EarningProfits) return Severity::Critical;
    if (id == OracleId::ShlOverflow) return Severity::Major;
    return Severity::Medium;
}

std::string Finding::title() const {
    std::string t = oracle_name(oracle);
    if (!qualifier.empty()) t += "(" + qualifier + ")";
    return t;
}

std::string Finding::key(const Program& program) const {
    std::string k = title();
    if (has_site) k += " " + program.function(function).qualified + "@" + std::to_string(pc);
    return k;
}

void OracleConfig::check() const {
    if (infinite_loop_threshold == 0) throw std::invalid_argument("infinite-loop threshold must be positive");
}

namespace {

std::pair<U256, U256> operand_pair(const Value* a, const Value* b) {
    auto one = [](const Value* v) -> U256 {
        if (!v) return 0;
        if (v->kind == Value::Kind::Int || v->kind == Value::Kind::Bool) return v->num;
        return U256(std::hash<std::string>{}(v->to_string()));
    };
    return {one(a), one(b)};
}

bool literal_bool(const Value* v) {
    return v && v->sym && v->sym->op == SymOp::Const && v->sym->prim == Prim::Bool && v->sym->literal;
}

// Only truncations from the same top-level call count; results handed to a later call start clean.
bool lossy(const Value* v, std::uint32_t call) {
    return v && v->sym && v->sym->lossy_call == static_cast<std::int32_t>(call);
}

}  // namespace

void RuntimeOracles::add(OracleId id, std::string qualifier, const StepInfo& s, std::string detail) {
    auto key = std::make_tuple(static_cast<int>(id), qualifier, s.function, s.pc);
    if (seen_.count(key)) return;
    seen_[key] = true;
    Finding f;
    f.oracle = id;
    f.severity = default_severity(id);
    f.qualifier = std::move(qualifier);
    f.has_site = true;
    f.function = s.function;
    f.pc = s.pc;
    f.detail = std::move(detail);
    findings_.push_back(std::move(f));
}

void RuntimeOracles::on_step(const StepInfo& s) {
    const Opcode op = s.ins->op;
    switch (op) {
    case Opcode::Div:
        if (!s.aborted && cfg_.on(OracleId::PrecisionLoss) && !cfg_.precision_amplified_only && s.rhs->num != 0 &&
            s.lhs->num % s.rhs->num != 0) {
            std::ostringstream d;
            d << s.lhs->num << " / " << s.rhs->num << " discards remainder " << s.lhs->num % s.rhs->num;
            add(OracleId::PrecisionLoss, "lossy", s, d.str());
        }
        break;
    case Opcode::Mul:
        if (!s.aborted && cfg_.on(OracleId::PrecisionLoss) && (lossy(s.lhs, s.call_index) || lossy(s.rhs, s.call_index)))
            add(OracleId::PrecisionLoss, "amplified", s, "multiplication of a value already truncated by division");
        break;
    case Opcode::Cast:
        if (cfg_.on(OracleId::UnnecessaryCast) && s.lhs->prim == s.ins->type.prim())
            add(OracleId::UnnecessaryCast, "", s, std::string("cast of ") + prim_name(s.lhs->prim) + " to itself");
        break;
    case Opcode::Eq:
    case Opcode::Neq:
        if (cfg_.on(OracleId::UnnecessaryBool) && (literal_bool(s.lhs) || literal_bool(s.rhs)))
            add(OracleId::UnnecessaryBool, "", s, "comparison against a boolean literal");
        break;
    case Opcode::Shl:
        if (!s.aborted && cfg_.on(OracleId::ShlOverflow)) {
            const unsigned w = prim_bits(s.lhs->prim);
            const unsigned k = static_cast<unsigned>(s.rhs->num);
            if (k > 0 && k < w && (s.lhs->num >> (w - k)) != 0) {
                std::ostringstream d;
                d << s.lhs->num << " << " << k << " drops nonzero high bits of a " << prim_name(s.lhs->prim);
                add(OracleId::ShlOverflow, "", s, d.str());
            }
        }
        break;
    default: break;
    }

    if (!cfg_.on(OracleId::InfiniteLoop)) return;
    if (op == Opcode::Eq || op == Opcode::Neq || op == Opcode::Lt || op == Opcode::Le || op == Opcode::Gt ||
        op == Opcode::Ge) {
        last_cmp_[s.depth] = {s.function, s.pc, operand_pair(s.lhs, s.rhs)};
    } else if (op == Opcode::BrTrue || op == Opcode::BrFalse) {
        std::pair<U256, U256> operands = operand_pair(s.lhs, nullptr);
        auto it = last_cmp_.find(s.depth);
        if (it != last_cmp_.end() && it->second.function == s.function && it->second.pc + 1 == s.pc)
            operands = it->second.operands;
        LoopSite& site = loops_[{s.function, s.pc}];
        if (site.traversals == 0) site.operands = operands;
        else if (site.operands != operands) site.changed = true;
        ++site.traversals;
    }
}

std::vector<Finding> RuntimeOracles::finish(const ExecResult& result) {
    if (cfg_.on(OracleId::InfiniteLoop) && result.status == ExecStatus::OutOfGas) {
        for (const auto& [site, info] : loops_) {
            if (info.changed || info.traversals < cfg_.infinite_loop_threshold) continue;
            StepInfo s;
            s.function = site.first;
            s.pc = site.second;
            add(OracleId::InfiniteLoop, "", s,
                "branch condition operands unchanged over " + std::to_string(info.traversals) +
                    " traversals before running out of gas");
        }
    }
    return findings_;
}

std::vector<Finding> check_runtime_oracles(const Transaction& txn, const Program& program, const WorldState& genesis,
                                           const OracleConfig& cfg, std::uint64_t gas_limit, ExecResult* result) {
    RuntimeOracles oracles(cfg);
    ExecOptions opts;
    opts.gas_limit = gas_limit;
    opts.observers.push_back(&oracles);
    ExecResult r = execute(txn, program, genesis, opts);
    auto out = oracles.finish(r);
    if (result) *result = std::move(r);
    return out;
}

std::optional<Finding> check_earning_profits(const ExecResult& result) {
    if (result.status != ExecStatus::Success) return std::nullopt;
    for (const auto& [coin, after] : result.balance_after) {
        auto it = result.balance_before.find(coin);
        const U256 before = it == result.balance_before.end() ? U256(0) : it->second;
        if (after > before) {
            Finding f;
            f.oracle = OracleId::EarningProfits;
            f.severity = default_severity(f.oracle);
            std::ostringstream d;
            d << "sender balance of Coin<" << coin.to_string() << "> grew from " << before << " to " << after;
            f.detail = d.str();
            return f;
        }
    }
    return std::nullopt;
}

std::vector<Finding> check_custom_events(const ExecResult& result, const std::map<U256, std::string>& registry) {
    std::vector<Finding> out;
    std::set<std::tuple<U256, FunctionId, std::uint32_t>> seen;
    for (const auto& ev : result.events) {
        auto it = registry.find(ev.tag);
        if (it == registry.end()) continue;
        if (!seen.insert({ev.tag, ev.function, ev.pc}).second) continue;
        Finding f;
        f.oracle = OracleId::Custom;
        f.severity = default_severity(f.oracle);
        f.qualifier = it->second;
        f.has_site = true;
        f.function = ev.function;
        f.pc = ev.pc;
        std::ostringstream d;
        d << "violation event " << ev.tag;
        if (!ev.payload.empty()) {
            d << " payload";
            for (const auto& p : ev.payload) d << ' ' << p;
        }
        f.detail = d.str();
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<Finding> dedup_findings(std::vector<Finding> findings, const Program& program) {
    std::vector<Finding> out;
    std::set<std::string> keys;
    for (auto& f : findings)
        if (keys.insert(f.key(program)).second) out.push_back(std::move(f));
    return out;
}

}  // namespace tgfuzz
