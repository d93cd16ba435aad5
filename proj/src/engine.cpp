#include "tgfuzz/engine.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace tgfuzz {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- configuration --------------------------------------------------------

void CampaignConfig::check() const {
    if (package_path.empty()) throw ConfigError("campaign has no package");
    if (gas_limit == 0) throw ConfigError("gas limit must be positive");
    if (workers == 0) throw ConfigError("worker count must be positive");
    if (time_limit < 0) throw ConfigError("time limit must not be negative");
    for (double w : {weights.generate, weights.mutate, weights.concolic})
        if (w < 0 || !std::isfinite(w)) throw ConfigError("action weights must be non-negative");
    if (std::abs(weights.generate + weights.mutate + weights.concolic - 1.0) > 1e-6)
        throw ConfigError("action weights must sum to 1");
    double m = 0;
    for (double w : mutator_weights) {
        if (w < 0 || !std::isfinite(w)) throw ConfigError("mutator weights must be non-negative");
        m += w;
    }
    if (m <= 0) throw ConfigError("at least one mutator weight must be positive");
    if (concolic_budget == 0) throw ConfigError("concolic budget must be positive");
    try {
        oracles.check();
        make_solver(solver);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

ActionWeights CampaignConfig::effective_weights() const {
    ActionWeights w = weights;
    if (no_concolic) w.concolic = 0;
    const double total = w.generate + w.mutate + w.concolic;
    if (total <= 0) return {1, 0, 0};
    return {w.generate / total, w.mutate / total, w.concolic / total};
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace

CampaignConfig load_campaign_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{"package", "genesis", "seed", "iterations", "time", "gas_limit",
                                             "weights", "mutators", "concolic_budget", "solver", "oracles",
                                             "renames", "workers", "ablation", "out", "dump_constraints"};
    for (const auto& [k, _] : j.items())
        if (!known.count(k)) throw ConfigError("unknown config field '" + k + "'");

    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? p : (base / p).string(); };

    CampaignConfig c;
    c.package_path = resolve(get_or<std::string>(j, "package", ""));
    c.genesis_path = resolve(get_or<std::string>(j, "genesis", ""));
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.iterations = get_or<std::uint64_t>(j, "iterations", c.iterations);
    c.time_limit = get_or<double>(j, "time", c.time_limit);
    c.gas_limit = get_or<std::uint64_t>(j, "gas_limit", c.gas_limit);
    c.concolic_budget = get_or<std::uint64_t>(j, "concolic_budget", c.concolic_budget);
    c.solver = get_or<std::string>(j, "solver", c.solver);
    c.workers = get_or<std::uint32_t>(j, "workers", c.workers);
    c.dump_constraints = get_or<bool>(j, "dump_constraints", false);
    if (j.contains("out")) c.out_dir = resolve(j["out"].get<std::string>());
    if (j.contains("weights")) {
        const json& w = j["weights"];
        c.weights.generate = get_or<double>(w, "generate", c.weights.generate);
        c.weights.mutate = get_or<double>(w, "mutate", c.weights.mutate);
        c.weights.concolic = get_or<double>(w, "concolic", c.weights.concolic);
    }
    if (j.contains("mutators")) {
        const json& m = j["mutators"];
        for (std::size_t i = 0; i < 4; ++i)
            c.mutator_weights[i] = get_or<double>(m, mutator_name(static_cast<Mutator>(i)), c.mutator_weights[i]);
    }
    if (j.contains("ablation")) {
        const json& a = j["ablation"];
        c.no_typegraph = get_or<bool>(a, "no_typegraph", false);
        c.no_typeparams = get_or<bool>(a, "no_typeparams", false);
        c.no_concolic = get_or<bool>(a, "no_concolic", false);
    }
    if (j.contains("oracles")) {
        const json& o = j["oracles"];
        for (const auto& name : get_or<std::vector<std::string>>(o, "disabled", {})) {
            auto id = oracle_from_name(name);
            if (!id) throw ConfigError("unknown oracle '" + name + "'");
            c.oracles.enabled[static_cast<std::size_t>(*id)] = false;
        }
        c.oracles.precision_amplified_only = get_or<bool>(o, "precision_amplified_only", false);
        c.oracles.infinite_loop_threshold = get_or<std::uint32_t>(o, "infinite_loop_threshold", 16);
        if (o.contains("custom")) {
            for (const auto& [tag, name] : o["custom"].items()) {
                try {
                    c.oracles.custom_tags[parse_u256_literal(tag)] = name.get<std::string>();
                } catch (const std::exception& e) {
                    throw ConfigError("custom oracle tag '" + tag + "': " + e.what());
                }
            }
        }
        for (const auto& name : get_or<std::vector<std::string>>(o, "stop_on", {})) {
            auto id = oracle_from_name(name);
            if (!id) throw ConfigError("unknown oracle '" + name + "'");
            c.stop_on.insert(*id);
        }
    }
    if (j.contains("renames")) c.renames = get_or<std::map<std::string, std::string>>(j, "renames", {});
    c.check();
    return c;
}

// ---- scheduling -----------------------------------------------------------

const char* action_name(Action::Kind k) {
    switch (k) {
    case Action::Kind::Generate: return "generate";
    case Action::Kind::Mutate: return "mutate";
    case Action::Kind::Concolic: return "concolic";
    }
    return "?";
}

Action select_action(const std::vector<Seed>& corpus, Rng& rng, const ActionWeights& weights,
                     const std::array<double, 4>& mutator_weights) {
    Action a;
    if (corpus.empty()) return a;
    const std::size_t k = rng.weighted({weights.generate, weights.mutate, weights.concolic});
    if (k == 0 || k == 3) return a;
    a.kind = k == 1 ? Action::Kind::Mutate : Action::Kind::Concolic;
    std::vector<double> energy;
    energy.reserve(corpus.size());
    for (const auto& s : corpus) energy.push_back(s.energy());
    a.seed = rng.weighted(energy);
    if (a.seed >= corpus.size()) a.seed = rng.below(corpus.size());
    if (a.kind == Action::Kind::Mutate) {
        const std::vector<double> mw(mutator_weights.begin(), mutator_weights.end());
        do {
            a.mutators.push_back(static_cast<Mutator>(rng.weighted(mw)));
        } while (a.mutators.size() < 3 && rng.chance(0.5));
    }
    return a;
}

std::size_t CampaignReport::count(OracleId id, const std::string& qualifier) const {
    std::size_t n = 0;
    for (const auto& f : findings)
        if (f.finding.oracle == id && (qualifier.empty() || f.finding.qualifier == qualifier)) ++n;
    return n;
}

namespace {

std::string site_of(const Finding& f, const Program& program) {
    if (!f.has_site) return "transaction";
    return program.function(f.function).qualified + "@" + std::to_string(f.pc);
}

}  // namespace

std::string CampaignReport::to_json(const Program& program) const {
    json j;
    j["iterations"] = iterations;
    j["executions"] = executions;
    j["rejected"] = rejected;
    j["synthesis_failures"] = synthesis_failures;
    j["actions"] = {{"generate", actions[0]}, {"mutate", actions[1]}, {"concolic", actions[2]}};
    j["concolic"] = {{"sat", concolic_outcomes[0]}, {"unsat", concolic_outcomes[1]}, {"unknown", concolic_outcomes[2]}};
    std::ostringstream ratio;
    ratio << std::fixed << std::setprecision(6) << coverage_ratio();
    j["coverage"] = {{"covered", covered}, {"total", total_arms}, {"ratio", ratio.str()}};
    j["corpus_size"] = corpus_size;
    json per = json::object();
    json list = json::array();
    for (const auto& rf : findings) {
        const Finding& f = rf.finding;
        per[f.title()] = per.value(f.title(), 0) + 1;
        list.push_back({{"oracle", oracle_name(f.oracle)},
                        {"qualifier", f.qualifier},
                        {"severity", severity_name(f.severity)},
                        {"site", site_of(f, program)},
                        {"detail", f.detail},
                        {"iteration", rf.iteration}});
    }
    j["findings"] = list;
    j["per_oracle"] = per;
    if (goal_iteration) j["goal_iteration"] = *goal_iteration;
    return j.dump(2) + "\n";
}

// ---- campaign -------------------------------------------------------------

namespace {

class Campaign {
public:
    Campaign(const CampaignConfig& cfg, std::shared_ptr<const Program> program, const WorldState& genesis,
             GoalPredicate goal)
        : cfg_(cfg),
          program_(std::move(program)),
          genesis_(genesis),
          graph_(build_type_graph(*program_, TypeGraphOptions{cfg.no_typeparams})),
          ctx_(make_context(graph_, genesis.view())),
          coverage_(*program_),
          goal_(std::move(goal)),
          weights_(cfg.effective_weights()) {}

    CampaignResult run() {
        start_ = std::chrono::steady_clock::now();
        std::thread stats;
        std::atomic<bool> done{false};
        if (cfg_.print_stats) stats = std::thread([&] { print_stats(done); });
        if (cfg_.workers == 1) {
            worker(0);
        } else {
            std::vector<std::thread> threads;
            for (std::uint32_t w = 0; w < cfg_.workers; ++w) threads.emplace_back([this, w] { worker(w); });
            for (auto& t : threads) t.join();
        }
        done = true;
        if (stats.joinable()) stats.join();

        CampaignResult out;
        out.report = report_;
        out.report.iterations = std::min<std::uint64_t>(claimed_.load(), consumed_.load());
        out.report.executions = executions_.load();
        out.report.covered = coverage_.covered();
        out.report.total_arms = coverage_.total();
        out.report.corpus_size = corpus_.size();
        out.report.seconds = elapsed();
        if (cfg_.workers > 1) {
            std::stable_sort(out.report.findings.begin(), out.report.findings.end(),
                             [](const auto& a, const auto& b) { return a.iteration < b.iteration; });
        }
        out.corpus = corpus_;
        return out;
    }

    std::string constraint_log;

private:
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

    bool out_of_budget(std::uint64_t it) const {
        if (stop_.load()) return true;
        if (cfg_.time_limit > 0 && elapsed() >= cfg_.time_limit) return true;
        if (cfg_.iterations > 0) return it >= cfg_.iterations;
        return cfg_.time_limit <= 0;
    }

    void print_stats(std::atomic<bool>& done) {
        auto last = std::chrono::steady_clock::now();
        while (!done.load()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            auto now = std::chrono::steady_clock::now();
            if (now - last < std::chrono::seconds(1)) continue;
            last = now;
            const double t = elapsed();
            std::size_t nfind;
            {
                std::lock_guard lock(mu_);
                nfind = report_.findings.size();
            }
            std::ostringstream line;
            line << "[" << std::fixed << std::setprecision(0) << t << "s] iterations " << consumed_.load()
                 << "  exec/s " << std::setprecision(0) << (t > 0 ? executions_.load() / t : 0.0) << "  coverage "
                 << coverage_.covered() << "/" << coverage_.total() << "  findings " << nfind << "\n";
            std::cerr << line.str();
        }
    }

    void worker(std::uint32_t w) {
        Rng rng = cfg_.workers == 1 ? Rng(cfg_.seed) : Rng(cfg_.seed).split(w + 1);
        auto solver = make_solver(cfg_.solver);
        while (true) {
            const std::uint64_t it = claimed_.fetch_add(1);
            if (out_of_budget(it)) break;
            ++consumed_;
            iteration(it, w, rng, *solver);
        }
    }

    Transaction produce(const Action& a, const Transaction* seed, Rng& rng, Solver& solver) {
        const Program& prog = *program_;
        switch (a.kind) {
        case Action::Kind::Generate: return cfg_.no_typegraph ? havoc_generate(prog, ctx_, rng) : generate(ctx_, rng);
        case Action::Kind::Mutate: {
            Transaction t = *seed;
            for (Mutator m : a.mutators)
                t = cfg_.no_typegraph ? havoc_mutate(t, prog, ctx_, rng) : apply_mutator(m, t, ctx_, rng);
            return t;
        }
        case Action::Kind::Concolic: {
            Collected c = collect_constraints(*seed, prog, genesis_, cfg_.gas_limit);
            ++executions_;
            FlipResult flip = flip_and_solve(c.path, rng, solver, cfg_.concolic_budget, &coverage_);
            {
                std::lock_guard lock(mu_);
                ++report_.concolic_outcomes[static_cast<std::size_t>(flip.status)];
                if (cfg_.dump_constraints) {
                    constraint_log += "# seed transaction\n" + serialize_transaction(*seed, prog);
                    PathCondition submitted{flip.submitted, c.path.inputs};
                    constraint_log += "# path\n" + dump_constraints(c.path, prog);
                    constraint_log += std::string("# submitted (") + solve_status_name(flip.status) + ")\n" +
                                      dump_constraints(submitted, prog);
                }
            }
            if (flip.status == SolveStatus::Sat) return apply_assignment(*seed, c.path.inputs, flip.assignment);
            return mutate_values(*seed, rng);
        }
        }
        return {};
    }

    void iteration(std::uint64_t it, std::uint32_t w, Rng& rng, Solver& solver) {
        Action a;
        Transaction seed;
        {
            std::lock_guard lock(mu_);
            a = select_action(corpus_, rng, weights_, cfg_.mutator_weights);
            ++report_.actions[static_cast<std::size_t>(a.kind)];
            if (a.kind != Action::Kind::Generate) {
                seed = corpus_[a.seed].txn;
                ++corpus_[a.seed].fuzzed;
            }
        }
        Transaction txn;
        try {
            txn = produce(a, &seed, rng, solver);
            if (!cfg_.renames.empty()) txn = apply_renames(txn, *program_, cfg_.renames);
        } catch (const std::exception&) {
            std::lock_guard lock(mu_);
            ++report_.synthesis_failures;
            return;
        }
        if (txn.empty()) return;
        if (validate(txn, *program_, ctx_.pool)) {
            std::lock_guard lock(mu_);
            ++report_.rejected;
            return;
        }

        RuntimeOracles runtime(cfg_.oracles);
        ExecOptions opts;
        opts.gas_limit = cfg_.gas_limit;
        opts.observers.push_back(&runtime);
        ExecResult result = execute(txn, *program_, genesis_, opts);
        ++executions_;
        const std::size_t fresh = coverage_.record(result.coverage);

        std::vector<Finding> found = runtime.finish(result);
        if (cfg_.oracles.on(OracleId::EarningProfits))
            if (auto f = check_earning_profits(result)) found.push_back(std::move(*f));
        if (cfg_.oracles.on(OracleId::Custom))
            for (auto& f : check_custom_events(result, cfg_.oracles.custom_tags)) found.push_back(std::move(f));

        std::lock_guard lock(mu_);
        for (auto& f : found) {
            const std::string key = f.key(*program_);
            if (finding_keys_.count(key)) continue;
            finding_keys_.insert(key);
            found_oracles_.insert(f.oracle);
            f.witness = serialize_transaction(txn, *program_);
            report_.findings.push_back({std::move(f), it, w});
        }
        if (goal_ && (!report_.goal_iteration || it < *report_.goal_iteration) && goal_(txn, result))
            report_.goal_iteration = it;
        if (fresh > 0) admit(std::move(txn), std::move(result.coverage), it);
        if (!cfg_.stop_on.empty()) {
            bool all = true;
            for (auto id : cfg_.stop_on) all &= found_oracles_.count(id) > 0;
            if (all) stop_ = true;
        }
    }

    void admit(Transaction txn, std::vector<CoverageKey> cov, std::uint64_t it) {
        for (auto k : cov) ++arm_seeds_[k];
        Seed s;
        s.txn = std::move(txn);
        s.coverage = std::move(cov);
        s.iteration = it;
        corpus_.push_back(std::move(s));
        for (auto& seed : corpus_) {
            double r = 0;
            for (auto k : seed.coverage) r += 1.0 / static_cast<double>(arm_seeds_[k]);
            seed.rarity = seed.coverage.empty() ? 1.0 : r;
        }
    }

    const CampaignConfig& cfg_;
    std::shared_ptr<const Program> program_;
    const WorldState& genesis_;
    TypeGraph graph_;
    SynthContext ctx_;
    CoverageMap coverage_;
    GoalPredicate goal_;
    ActionWeights weights_;

    std::chrono::steady_clock::time_point start_;
    std::atomic<std::uint64_t> claimed_{0};
    std::atomic<std::uint64_t> consumed_{0};
    std::atomic<std::uint64_t> executions_{0};
    std::atomic<bool> stop_{false};

    std::mutex mu_;
    CampaignReport report_;
    std::vector<Seed> corpus_;
    std::map<CoverageKey, std::uint32_t> arm_seeds_;
    std::set<std::string> finding_keys_;
    std::set<OracleId> found_oracles_;
};

}  // namespace

CampaignResult run_campaign(const CampaignConfig& cfg, std::shared_ptr<const Program> program,
                            const WorldState& genesis, GoalPredicate goal) {
    cfg.check();
    for (const auto& [from, to] : cfg.renames)
        if (!program->find_function(from) || !program->find_function(to))
            throw ConfigError("rename " + from + " -> " + to + " names an unknown function");
    Campaign c(cfg, std::move(program), genesis, std::move(goal));
    CampaignResult r = c.run();
    if (cfg.dump_constraints && !cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        std::ofstream(fs::path(cfg.out_dir) / "constraints.txt") << c.constraint_log;
    }
    return r;
}

CampaignResult run_campaign(const CampaignConfig& cfg, GoalPredicate goal) {
    cfg.check();
    std::shared_ptr<const Program> program;
    try {
        program = std::make_shared<const Program>(load_package_file(cfg.package_path));
    } catch (const ParseError& e) {
        throw ConfigError("package " + cfg.package_path + ":" + std::to_string(e.line()) + ": " + e.what());
    } catch (const std::exception& e) {
        throw ConfigError("package " + cfg.package_path + ": " + e.what());
    }
    WorldState genesis;
    try {
        genesis = cfg.genesis_path.empty() ? empty_genesis(*program) : load_genesis_file(cfg.genesis_path, *program);
    } catch (const GenesisError& e) {
        throw ConfigError(std::string("genesis: ") + e.what());
    }
    return run_campaign(cfg, program, genesis, std::move(goal));
}

void write_output(const std::string& dir, const CampaignConfig& cfg, const CampaignResult& result,
                  const Program& program) {
    const fs::path root(dir);
    // Files from an earlier campaign in the same directory would otherwise mix with this one.
    fs::remove_all(root / "corpus");
    fs::remove_all(root / "witnesses");
    fs::create_directories(root / "corpus");
    fs::create_directories(root / "witnesses");
    std::ofstream(root / "report.json") << result.report.to_json(program);

    std::ofstream findings(root / "findings.jsonl");
    for (std::size_t i = 0; i < result.report.findings.size(); ++i) {
        const auto& rf = result.report.findings[i];
        std::ostringstream name;
        name << "witnesses/finding-" << std::setw(4) << std::setfill('0') << (i + 1) << ".txn";
        std::ofstream(root / name.str()) << rf.finding.witness;
        json rec = {{"oracle", oracle_name(rf.finding.oracle)},
                    {"qualifier", rf.finding.qualifier},
                    {"severity", severity_name(rf.finding.severity)},
                    {"site", site_of(rf.finding, program)},
                    {"detail", rf.finding.detail},
                    {"witness", name.str()},
                    {"timestamp", rf.iteration},
                    {"rng_seed", cfg.seed},
                    {"worker", rf.worker}};
        findings << rec.dump() << "\n";
    }

    for (std::size_t i = 0; i < result.corpus.size(); ++i) {
        std::ostringstream name;
        name << "seed-" << std::setw(6) << std::setfill('0') << (i + 1) << ".txn";
        std::ofstream(root / "corpus" / name.str()) << serialize_transaction(result.corpus[i].txn, program);
    }

    std::vector<CoverageKey> covered;
    for (const auto& s : result.corpus) covered.insert(covered.end(), s.coverage.begin(), s.coverage.end());
    std::sort(covered.begin(), covered.end());
    covered.erase(std::unique(covered.begin(), covered.end()), covered.end());
    std::ofstream cov(root / "coverage.txt");
    cov << "# " << result.report.covered << "/" << result.report.total_arms << " branch arms\n";
    for (auto k : covered)
        cov << program.function(coverage_function(k)).qualified << "@" << coverage_pc(k) << " "
            << (coverage_taken(k) ? "taken" : "fallthrough") << "\n";

    json timing = {{"seconds", result.report.seconds}, {"exec_per_second", result.report.exec_per_second()}};
    std::ofstream(root / "timing.json") << timing.dump(2) << "\n";
}

}  // namespace tgfuzz
