#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tgfuzz/engine.hpp"

using namespace tgfuzz;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFinding = 3;

struct Loaded {
    CampaignConfig cfg;
    std::shared_ptr<const Program> program;
    WorldState genesis;
};

Loaded load(const CampaignConfig& cfg) {
    Loaded l;
    l.cfg = cfg;
    try {
        l.program = std::make_shared<const Program>(load_package_file(cfg.package_path));
    } catch (const ParseError& e) {
        throw ConfigError(cfg.package_path + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) +
                          ": " + e.what());
    } catch (const VerifyError& e) {
        throw ConfigError(cfg.package_path + ": in " + e.function() + " at instruction " +
                          std::to_string(e.instruction()) + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    try {
        l.genesis = cfg.genesis_path.empty() ? empty_genesis(*l.program)
                                             : load_genesis_file(cfg.genesis_path, *l.program);
    } catch (const GenesisError& e) {
        throw ConfigError(std::string("genesis: ") + e.what());
    }
    return l;
}

void print_findings(const std::vector<Finding>& findings, const Program& program) {
    for (const auto& f : findings)
        std::cout << "finding " << f.key(program) << " [" << severity_name(f.severity) << "] " << f.detail << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Type-graph guided fuzzer for typed transaction contracts"};
    app.require_subcommand(1);

    std::string config_path;
    std::optional<std::uint64_t> seed, iterations, gas_limit, concolic_budget;
    std::optional<double> time_limit;
    std::optional<std::uint32_t> workers;
    std::optional<std::string> solver, out_dir;
    bool no_typegraph = false, no_typeparams = false, no_concolic = false, dump_constraints = false;
    bool fail_on_finding = false, quiet = false;

    auto* fuzz = app.add_subcommand("fuzz", "Run a fuzzing campaign");
    fuzz->add_option("config", config_path, "Campaign config file")->required();
    fuzz->add_option("--seed", seed, "RNG seed");
    fuzz->add_option("--iterations", iterations, "Iteration limit");
    fuzz->add_option("--time", time_limit, "Wall-clock limit in seconds");
    fuzz->add_option("--gas-limit", gas_limit, "Gas limit per transaction");
    fuzz->add_option("--workers", workers, "Worker threads");
    fuzz->add_flag("--no-typegraph", no_typegraph, "Structure-unaware havoc instead of type-graph synthesis");
    fuzz->add_flag("--no-typeparams", no_typeparams, "Only non-generic functions");
    fuzz->add_flag("--no-concolic", no_concolic, "Disable concolic mutation");
    fuzz->add_option("--concolic-budget", concolic_budget, "Solver trials per concolic step");
    fuzz->add_option("--solver", solver, "Solver backend (reference, random)");
    fuzz->add_flag("--dump-constraints", dump_constraints, "Write constraints.txt to the output directory");
    fuzz->add_flag("--fail-on-finding", fail_on_finding, "Exit with status 3 when anything is found");
    fuzz->add_option("--out", out_dir, "Output directory");
    fuzz->add_flag("--quiet", quiet, "No stats lines");

    std::string seed_file;
    auto* replay = app.add_subcommand("replay", "Execute one transaction and report");
    replay->add_option("config", config_path, "Campaign config file")->required();
    replay->add_option("transaction", seed_file, "Transaction file (replay format)")->required();
    replay->add_option("--gas-limit", gas_limit, "Gas limit");
    replay->add_flag("--dump-constraints", dump_constraints, "Print the path condition");
    replay->add_flag("--fail-on-finding", fail_on_finding, "Exit with status 3 when anything is found");

    auto* typegraph = app.add_subcommand("typegraph", "Print the type graph in DOT format");
    typegraph->add_option("config", config_path, "Campaign config file")->required();
    typegraph->add_flag("--no-typeparams", no_typeparams, "Only non-generic functions");

    auto* validate_cmd = app.add_subcommand("validate", "Parse and verify the package and genesis");
    validate_cmd->add_option("config", config_path, "Campaign config file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        CampaignConfig cfg = load_campaign_config(config_path);
        if (seed) cfg.seed = *seed;
        if (iterations) cfg.iterations = *iterations;
        if (time_limit) cfg.time_limit = *time_limit;
        if (gas_limit) cfg.gas_limit = *gas_limit;
        if (workers) cfg.workers = *workers;
        if (concolic_budget) cfg.concolic_budget = *concolic_budget;
        if (solver) cfg.solver = *solver;
        if (out_dir) cfg.out_dir = *out_dir;
        cfg.no_typegraph |= no_typegraph;
        cfg.no_typeparams |= no_typeparams;
        cfg.no_concolic |= no_concolic;
        cfg.dump_constraints |= dump_constraints;
        cfg.check();

        if (*validate_cmd) {
            Loaded l = load(cfg);
            std::cout << "ok: " << l.program->function_count() << " functions, " << l.program->datatypes().size()
                      << " datatypes, " << l.genesis.objects.size() << " genesis objects\n";
            return kExitOk;
        }

        if (*typegraph) {
            Loaded l = load(cfg);
            write_dot(build_type_graph(*l.program, TypeGraphOptions{cfg.no_typeparams}), std::cout);
            return kExitOk;
        }

        if (*replay) {
            Loaded l = load(cfg);
            std::ifstream in(seed_file);
            if (!in) throw ConfigError("cannot open " + seed_file);
            std::stringstream ss;
            ss << in.rdbuf();
            Transaction txn;
            try {
                txn = parse_transaction(ss.str(), *l.program);
            } catch (const ParseError& e) {
                throw ConfigError(seed_file + ":" + std::to_string(e.line()) + ": " + e.what());
            }
            if (auto err = validate(txn, *l.program, l.genesis.view())) throw ConfigError("ill-typed: " + err->to_string());
            Collected c = collect_constraints(txn, *l.program, l.genesis, cfg.gas_limit);
            ExecResult r;
            auto findings = check_runtime_oracles(txn, *l.program, l.genesis, cfg.oracles, cfg.gas_limit, &r);
            if (cfg.oracles.on(OracleId::EarningProfits))
                if (auto f = check_earning_profits(r)) findings.push_back(*f);
            if (cfg.oracles.on(OracleId::Custom))
                for (auto& f : check_custom_events(r, cfg.oracles.custom_tags)) findings.push_back(f);
            std::cout << "status " << exec_status_name(r.status);
            if (r.abort)
                std::cout << " " << abort_kind_name(r.abort->kind) << " code " << r.abort->code << " at "
                          << l.program->function(r.abort->function).qualified << "@" << r.abort->pc << " (call "
                          << r.abort->call_index << ")";
            std::cout << "\ngas " << r.gas_used << "\n";
            for (auto k : r.coverage)
                std::cout << "arm " << l.program->function(coverage_function(k)).qualified << "@" << coverage_pc(k)
                          << " " << (coverage_taken(k) ? "taken" : "fallthrough") << "\n";
            for (const auto& [coin, v] : r.balance_before) std::cout << "balance_before " << coin.to_string() << " " << v << "\n";
            for (const auto& [coin, v] : r.balance_after) std::cout << "balance_after " << coin.to_string() << " " << v << "\n";
            for (const auto& ev : r.events) {
                std::cout << "event " << ev.tag;
                for (const auto& p : ev.payload) std::cout << " " << p;
                std::cout << "\n";
            }
            print_findings(findings, *l.program);
            if (cfg.dump_constraints) std::cout << tgfuzz::dump_constraints(c.path, *l.program);
            return fail_on_finding && !findings.empty() ? kExitFinding : kExitOk;
        }

        cfg.print_stats = !quiet;
        Loaded l = load(cfg);
        if (cfg.out_dir.empty()) cfg.out_dir = "tgfuzz-out";
        CampaignResult result = run_campaign(cfg, l.program, l.genesis);
        write_output(cfg.out_dir, cfg, result, *l.program);
        const auto& rep = result.report;
        std::cout << "iterations " << rep.iterations << ", executions " << rep.executions << ", coverage "
                  << rep.covered << "/" << rep.total_arms << ", corpus " << rep.corpus_size << ", findings "
                  << rep.findings.size() << "\n";
        for (const auto& rf : rep.findings)
            std::cout << "  " << rf.finding.key(*l.program) << " (iteration " << rf.iteration << ")\n";
        std::cout << "output written to " << cfg.out_dir << "\n";
        return fail_on_finding && !rep.findings.empty() ? kExitFinding : kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const GenesisError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
}
