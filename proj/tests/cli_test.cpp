#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace tgfuzz;
using namespace tgfuzz::testing;
namespace fs = std::filesystem;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run shell(const std::string& command) {
    const std::string cmd = command + " 2>&1";
    Run r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    std::array<char, 4096> buf{};
    while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.out.append(buf.data(), n);
    const int st = ::pclose(p);
    r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return r;
}

Run cli(const std::string& args) { return shell(std::string(TGFUZZ_CLI) + " " + args); }

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("tgfuzz_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::string cfg(const std::string& bench) { return bench_path(bench + "/campaign.cfg"); }

std::vector<std::string> lines_with(const std::string& text, const std::string& prefix) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (line.rfind(prefix, 0) == 0) out.push_back(line);
    return out;
}

std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, ValidateBenchmark) {
    auto r = cli("validate " + cfg("loan"));
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("ok:"), std::string::npos);
}

TEST(Cli, UsageErrorsExitTwo) {
    EXPECT_EQ(cli("").status, 2);
    EXPECT_EQ(cli("frobnicate").status, 2);
    EXPECT_EQ(cli("fuzz " + cfg("loan") + " --iterations many").status, 2);
    EXPECT_EQ(cli("--help").status, 0);
}

TEST(Cli, ConfigErrorsExitOne) {
    EXPECT_EQ(cli("validate " + bench_path("loan/missing.cfg")).status, 1);
    auto dir = scratch("bad");
    fs::create_directories(dir);
    std::ofstream(dir / "pkg.pkg") << "package p\nmodule m\npublic fn f(): u64\n  ld u64 1\nend\n";
    std::ofstream(dir / "campaign.cfg") << R"({"package":"pkg.pkg"})";
    auto r = cli("validate " + (dir / "campaign.cfg").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("error"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, TypegraphEmitsDot) {
    auto r = cli("typegraph " + cfg("loan"));
    ASSERT_EQ(r.status, 0);
    EXPECT_EQ(r.out.rfind("digraph", 0), 0u);
    EXPECT_NE(r.out.find("doublecircle"), std::string::npos);
}

TEST(Cli, FuzzWritesCorpus) {
    auto out = scratch("loan");
    auto r = cli("fuzz " + cfg("loan") + " --iterations 200 --quiet --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_TRUE(fs::exists(out / "report.json"));
    EXPECT_FALSE(fs::is_empty(out / "corpus"));
    fs::remove_all(out);
}

TEST(Cli, FailOnFindingExitsThree) {
    auto out = scratch("cetus_fail");
    auto r = cli("fuzz " + cfg("cetus") + " --iterations 50 --quiet --fail-on-finding --out " + out.string());
    EXPECT_EQ(r.status, 3) << r.out;
    auto plain = cli("fuzz " + cfg("cetus") + " --iterations 50 --quiet --out " + out.string());
    EXPECT_EQ(plain.status, 0);
    fs::remove_all(out);
}

TEST(Cli, ReplayReproducesFindingAndCoverage) {
    auto out = scratch("cetus");
    auto r = cli("fuzz " + cfg("cetus") + " --iterations 100 --quiet --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    auto reported = lines_with(r.out, "  ");
    ASSERT_FALSE(reported.empty()) << r.out;
    const std::string key = reported[0].substr(2, reported[0].find(" (iteration") - 2);
    auto replay = cli("replay " + cfg("cetus") + " " + (out / "witnesses" / "finding-0001.txn").string() +
                      " --fail-on-finding");
    EXPECT_EQ(replay.status, 3) << replay.out;
    bool same = false;
    for (const auto& l : lines_with(replay.out, "finding ")) same |= l.rfind("finding " + key + " ", 0) == 0;
    EXPECT_TRUE(same) << key << "\n" << replay.out;

    auto b = load_bench("cetus", "clmm.pkg", "genesis.json");
    for (const auto& e : fs::directory_iterator(out / "corpus")) {
        auto res = execute(parse_transaction(read(e.path()), *b.program), *b.program, b.genesis);
        auto arms = lines_with(cli("replay " + cfg("cetus") + " " + e.path().string()).out, "arm ");
        EXPECT_EQ(arms.size(), res.coverage.size()) << e.path();
    }
    fs::remove_all(out);
}

TEST(Cli, ReplayRejectsIllTypedTransaction) {
    auto dir = scratch("illtyped");
    fs::create_directories(dir);
    std::ofstream(dir / "t.txn") << "call pool::loan<u8> 5u64\n";
    EXPECT_EQ(cli("replay " + cfg("loan") + " " + (dir / "t.txn").string()).status, 1);
    fs::remove_all(dir);
}

TEST(Cli, ReadmeExamplesRun) {
    std::istringstream readme(read(fs::path(TGFUZZ_SOURCE_DIR) / "README.md"));
    std::string line;
    int ran = 0;
    while (std::getline(readme, line)) {
        if (line.rfind("tgfuzz ", 0) != 0) continue;
        ++ran;
        auto r = shell("cd " + std::string(TGFUZZ_SOURCE_DIR) + " && " + TGFUZZ_CLI + line.substr(6));
        EXPECT_EQ(r.status, 0) << line << "\n" << r.out;
    }
    EXPECT_GE(ran, 5);
}
