#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "differential.hpp"
#include "support.hpp"
#include "tgfuzz/concolic.hpp"
#include "tgfuzz/engine.hpp"
#include "tgfuzz/synth.hpp"
#include "tgfuzz/type_graph.hpp"

using namespace tgfuzz;
using namespace tgfuzz::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct BenchSpec {
    const char* dir;
    const char* pkg;
    const char* genesis;
};

const std::vector<BenchSpec> kBenchmarks = {
    {"loan", "pool.pkg", ""},        {"flash", "flash.pkg", "genesis.json"},  {"cetus", "clmm.pkg", "genesis.json"},
    {"nemo", "market.pkg", "genesis.json"}, {"clz", "bits.pkg", ""},      {"starswap", "boost.pkg", ""},
    {"starswap_control", "boost.pkg", ""},  {"tick", "position.pkg", "genesis.json"},
    {"custom", "market.pkg", "genesis.json"}, {"loops", "loops.pkg", ""},
};

/// Campaigns already run, kept so the determinism check can run them again.
struct Recorded {
    std::string name;
    CampaignConfig cfg;
    CampaignResult result;
    std::shared_ptr<const Program> program;
    GoalPredicate goal;
};
std::vector<Recorded> g_recorded;

CampaignResult campaign(const std::string& name, const CampaignConfig& cfg, GoalPredicate goal = {},
                        std::shared_ptr<const Program> program = nullptr) {
    if (!program) program = std::make_shared<const Program>(load_package_file(cfg.package_path));
    WorldState genesis = cfg.genesis_path.empty() ? empty_genesis(*program) : load_genesis_file(cfg.genesis_path, *program);
    auto r = run_campaign(cfg, program, genesis, goal);
    g_recorded.push_back({name, cfg, r, program, goal});
    return r;
}

CampaignConfig bench_config(const std::string& dir) {
    auto cfg = load_campaign_config(bench_path(dir + "/campaign.cfg"));
    cfg.print_stats = false;
    cfg.workers = 1;
    return cfg;
}

std::vector<std::string> call_names(const Transaction& t, const Program& prog) {
    std::vector<std::string> out;
    for (const auto& c : t.calls) out.push_back(prog.function(c.function).qualified);
    return out;
}

bool contains(const std::vector<std::string>& v, const std::string& s) { return std::find(v.begin(), v.end(), s) != v.end(); }

/// loan at i and repay at j > i consuming both of loan's results, with identical type arguments.
bool loan_then_repay(const Transaction& t, const Program& prog) {
    for (std::size_t j = 0; j < t.calls.size(); ++j) {
        const auto& repay = t.calls[j];
        if (prog.function(repay.function).qualified != "pool::repay") continue;
        const auto& a = repay.args;
        if (a.size() != 2 || a[0].kind != ArgBinding::Kind::Result || a[1].kind != ArgBinding::Kind::Result) continue;
        if (a[0].call != a[1].call || a[0].output != 0 || a[1].output != 1) continue;
        const auto& loan = t.calls[a[0].call];
        if (prog.function(loan.function).qualified == "pool::loan" && loan.type_args == repay.type_args) return true;
    }
    return false;
}

/// Holds for any executed transaction that runs loan then repay on loan's own results.
GoalPredicate round_trip_goal(std::shared_ptr<const Program> prog) {
    return [prog](const Transaction& t, const ExecResult& r) {
        return r.status == ExecStatus::Success && loan_then_repay(t, *prog);
    };
}

std::optional<std::uint32_t> first_branch(const Program& prog, const std::string& fn) {
    const auto& body = prog.function(*prog.find_function(fn)).decl->body;
    for (std::uint32_t pc = 0; pc < body.size(); ++pc)
        if (body[pc].op == Opcode::BrTrue || body[pc].op == Opcode::BrFalse) return pc;
    return std::nullopt;
}

Verdict transaction_validity() {
    const auto t0 = Clock::now();
    std::uint64_t checked = 0, violations = 0, skipped = 0;
    std::string first;
    std::vector<std::pair<Bench, std::unique_ptr<TypeGraph>>> loaded;
    for (const auto& b : kBenchmarks) {
        Bench bench = load_bench(b.dir, b.pkg, b.genesis);
        auto g = std::make_unique<TypeGraph>(build_type_graph(*bench.program));
        loaded.emplace_back(std::move(bench), std::move(g));
    }
    auto check = [&](const Transaction& t, const Bench& b, const PoolView& pool) {
        ++checked;
        if (auto err = validate(t, *b.program, pool)) {
            if (violations++ == 0) first = err->to_string();
        }
    };
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        for (const auto& [b, g] : loaded) {
            auto ctx = make_context(*g, b.genesis.view());
            Rng rng(seed);
            Transaction t;
            try {
                t = generate(ctx, rng);
            } catch (const std::exception&) {
                ++skipped;
                continue;
            }
            check(t, b, ctx.pool);
            for (Mutator m : {Mutator::Values, Mutator::Extend, Mutator::Insert, Mutator::Remove}) {
                t = apply_mutator(m, t, ctx, rng);
                check(t, b, ctx.pool);
            }
        }
    }
    const double secs = since(t0);
    std::ostringstream d;
    d << checked << " transactions from 10000 seeds x " << kBenchmarks.size() << " benchmarks, " << violations
      << " violations, " << skipped << " synthesis failures, " << secs << " s";
    if (violations) d << "; first: " << first;
    return {violations == 0 && checked > 0 && secs < 60, d.str()};
}

Verdict motivating_example() {
    std::ostringstream d;
    bool pass = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = bench_config("loan");
        cfg.seed = seed;
        cfg.iterations = 1000;
        const auto t0 = Clock::now();
        auto prog = std::make_shared<const Program>(load_package_file(cfg.package_path));
        auto r = campaign("loan seed " + std::to_string(seed), cfg, round_trip_goal(prog), prog);
        const auto at = r.report.goal_iteration;
        const double secs = since(t0);
        pass &= at.has_value() && secs < 10;
        d << "seed " << seed << ": " << (at ? "iteration " + std::to_string(*at) : std::string("not found")) << " ("
          << secs << " s); ";
    }
    return {pass, d.str()};
}

Verdict concolic_example() {
    const auto t0 = Clock::now();
    auto b = flash_bench();
    const auto seed = txn(b, "call flash::loan<flash::USDC> 1000000000u64\n"
                             "call flash::split_coin<flash::USDC> @1 5u64\n"
                             "call flash::repay<flash::USDC> r1.0 r0.1\n");
    auto c = collect_constraints(seed, *b.program, b.genesis);
    std::optional<std::size_t> target;
    for (std::size_t i = 0; i < c.path.constraints.size(); ++i) {
        const auto& con = c.path.constraints[i];
        if (con.kind == ConstraintKind::BranchCond && b.program->function(con.function).qualified == "flash::repay")
            target = i;
    }
    if (!target) return {false, "repay assert missing from the path condition"};
    std::size_t sym1 = 0, sym2 = 0;
    for (std::size_t i = 0; i < c.path.inputs.size(); ++i) {
        if (c.path.inputs[i].call == 0) sym1 = i;
        if (c.path.inputs[i].call == 1) sym2 = i;
    }
    ReferenceSolver solver;
    for (int attempt = 1; attempt <= 10; ++attempt) {
        Rng rng(static_cast<std::uint64_t>(attempt));
        auto f = flip_and_solve(c.path, rng, solver, kDefaultSolverBudget, nullptr, std::vector<std::size_t>{*target});
        if (f.status != SolveStatus::Sat) continue;
        auto values = c.path.current_values();
        for (const auto& [k, v] : f.assignment.values) values[k] = v;
        const U256 s1 = values[sym1], s2 = values[sym2];
        auto next = apply_assignment(seed, c.path.inputs, f.assignment);
        auto r = execute(next, *b.program, b.genesis);
        const auto& con = c.path.constraints[*target];
        const auto key = coverage_key(con.function, con.pc, !con.taken);
        const bool reached = std::binary_search(r.coverage.begin(), r.coverage.end(), key);
        const double secs = since(t0);
        std::ostringstream d;
        d << "SYM1=" << s1 << " SYM2=" << s2 << " after " << attempt << " solver invocation(s), replay "
          << exec_status_name(r.status) << (reached ? ", post-assert path reached" : ", assert not passed") << ", " << secs
          << " s";
        return {s2 == s1 + s1 / 1000 && reached && secs < 5, d.str()};
    }
    return {false, "no assignment within 10 solver invocations"};
}

Verdict cetus_reproduction() {
    std::ostringstream d;
    auto shl = bench_config("cetus");
    shl.iterations = 100000000;
    shl.time_limit = 60;
    shl.stop_on = {OracleId::ShlOverflow};
    auto t0 = Clock::now();
    auto a = campaign("cetus shl", shl);
    const double shl_secs = since(t0);
    const bool shl_ok = a.report.count(OracleId::ShlOverflow) > 0 && shl_secs < 60;
    d << "ShlOverflow " << (shl_ok ? "after " : "missing after ") << shl_secs << " s (iteration " << a.report.iterations
      << "); ";

    auto profit = bench_config("cetus");
    profit.iterations = 100000000;
    profit.time_limit = 600;
    profit.stop_on = {OracleId::EarningProfits};
    t0 = Clock::now();
    auto r = campaign("cetus profit", profit);
    const double profit_secs = since(t0);
    const auto& prog = *g_recorded.back().program;
    bool profit_ok = false;
    for (const auto& rf : r.report.findings) {
        if (rf.finding.oracle != OracleId::EarningProfits) continue;
        auto names = call_names(parse_transaction(rf.finding.witness, prog), prog);
        profit_ok = contains(names, "clmm::add_liquidity") && contains(names, "clmm::repay_liquidity") && profit_secs < 600;
        d << "EarningProfits after " << profit_secs << " s (iteration " << rf.iteration << ", " << names.size()
          << " calls)";
    }
    if (!r.report.count(OracleId::EarningProfits)) d << "EarningProfits missing after " << profit_secs << " s";
    return {shl_ok && profit_ok, d.str()};
}

Verdict nemo_reproduction() {
    auto cfg = bench_config("nemo");
    cfg.iterations = 100000000;
    cfg.time_limit = 1800;
    const auto t0 = Clock::now();
    auto r = campaign("nemo", cfg);
    const double secs = since(t0);
    const auto& prog = *g_recorded.back().program;
    for (const auto& rf : r.report.findings) {
        if (rf.finding.oracle != OracleId::EarningProfits) continue;
        auto names = call_names(parse_transaction(rf.finding.witness, prog), prog);
        const bool repaid = contains(names, "market::repay") || contains(names, "market::repay_with_pt");
        const bool ok = names.size() <= 12 && contains(names, "market::borrow") && repaid &&
                        contains(names, "market::calculate_amount_by_price") && secs < 1800;
        std::ostringstream d;
        d << "EarningProfits at iteration " << rf.iteration << " after " << secs << " s, witness of " << names.size()
          << " calls:";
        for (const auto& n : names) d << " " << n;
        return {ok, d.str()};
    }
    return {false, "no EarningProfits finding after " + std::to_string(secs) + " s"};
}

Verdict false_positive_avoidance() {
    auto cfg = bench_config("clz");
    cfg.iterations = 10000;
    auto r = campaign("clz", cfg);
    const auto n = r.report.count(OracleId::ShlOverflow);
    std::ostringstream d;
    d << n << " ShlOverflow findings in " << r.report.iterations << " iterations, coverage " << r.report.covered << "/"
      << r.report.total_arms;
    return {n == 0 && r.report.iterations == 10000, d.str()};
}

Verdict precision_loss() {
    auto r = campaign("starswap", bench_config("starswap"));
    const auto& prog = *g_recorded.back().program;
    std::set<std::string> sites;
    for (const auto& rf : r.report.findings)
        if (rf.finding.oracle == OracleId::PrecisionLoss && rf.finding.qualifier == "amplified")
            sites.insert(prog.function(rf.finding.function).qualified + "@" + std::to_string(rf.finding.pc));
    auto control = campaign("starswap_control", bench_config("starswap_control"));
    const auto ctrl = control.report.count(OracleId::PrecisionLoss, "amplified");
    const std::set<std::string> want{"boost::update_boost_factor@11", "boost::calculate_boost_weight@4"};
    std::ostringstream d;
    d << "amplified sites:";
    for (const auto& s : sites) d << " " << s;
    d << "; control amplified findings: " << ctrl;
    return {sites == want && ctrl == 0, d.str()};
}

Verdict ablations() {
    std::ostringstream d;
    bool pass = true;
    int ntg_found = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = bench_config("loan");
        cfg.seed = seed;
        cfg.iterations = 1000;
        cfg.no_typegraph = true;
        auto prog = std::make_shared<const Program>(load_package_file(cfg.package_path));
        auto r = campaign("loan ntg seed " + std::to_string(seed), cfg, round_trip_goal(prog), prog);
        ntg_found += r.report.goal_iteration.has_value();
    }
    pass &= ntg_found == 0;
    d << "--no-typegraph found loan+repay on " << ntg_found << "/5 seeds; ";

    int nce_passed = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = bench_config("flash");
        cfg.seed = seed;
        cfg.iterations = 10000;
        cfg.no_concolic = true;
        auto prog = std::make_shared<const Program>(load_package_file(cfg.package_path));
        const auto pc = first_branch(*prog, "flash::repay");
        if (!pc) return {false, "flash::repay has no assert branch"};
        const auto settled = coverage_key(*prog->find_function("flash::repay"), *pc, true);
        auto r = campaign("flash nce seed " + std::to_string(seed), cfg,
                          [settled](const Transaction&, const ExecResult& res) {
                              return std::binary_search(res.coverage.begin(), res.coverage.end(), settled);
                          },
                          prog);
        nce_passed += r.report.goal_iteration.has_value();
    }
    pass &= nce_passed == 0;
    d << "--no-concolic passed the repay assert on " << nce_passed << "/5 seeds";
    return {pass, d.str()};
}

Verdict differential() {
    const auto t0 = Clock::now();
    auto r = run_differential(100000, 2024);
    const double secs = since(t0);
    std::ostringstream d;
    d << r.checked << " operand pairs over 6 widths, " << r.mismatches.size() << " mismatches, " << secs << " s";
    if (!r.mismatches.empty()) d << "; first: " << r.mismatches[0];
    return {r.mismatches.empty() && r.checked == 600000 && secs < 120, d.str()};
}

std::map<std::string, std::string> output_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "timing.json") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / ("tgfuzz_acceptance_" + std::to_string(::getpid()));
    std::size_t same = 0;
    std::vector<std::string> differing;
    const auto recorded = g_recorded;
    for (std::size_t i = 0; i < recorded.size(); ++i) {
        const auto& rec = recorded[i];
        WorldState genesis = rec.cfg.genesis_path.empty() ? empty_genesis(*rec.program)
                                                           : load_genesis_file(rec.cfg.genesis_path, *rec.program);
        auto again = run_campaign(rec.cfg, rec.program, genesis, rec.goal);
        const fs::path a = root / std::to_string(i) / "a", b = root / std::to_string(i) / "b";
        write_output(a.string(), rec.cfg, rec.result, *rec.program);
        write_output(b.string(), rec.cfg, again, *rec.program);
        if (output_files(a) == output_files(b)) ++same;
        else differing.push_back(rec.name);
    }
    fs::remove_all(root);
    std::ostringstream d;
    d << same << "/" << recorded.size() << " campaigns rerun with byte-identical reports and corpora";
    for (const auto& n : differing) d << "; differs: " << n;
    return {differing.empty() && !recorded.empty(), d.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
        {"transaction validity", transaction_validity},
        {"motivating example", motivating_example},
        {"concolic worked example", concolic_example},
        {"cetus reproduction", cetus_reproduction},
        {"nemo reproduction", nemo_reproduction},
        {"false-positive avoidance", false_positive_avoidance},
        {"precision loss across functions", precision_loss},
        {"ablations", ablations},
        {"interpreter differential", differential},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << (i + 1) << " " << criteria[i].first << ": " << v.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
