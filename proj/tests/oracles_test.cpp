#include <gtest/gtest.h>

#include "support.hpp"
#include "tgfuzz/oracles.hpp"

using namespace tgfuzz;
using namespace tgfuzz::testing;

namespace {

std::vector<Finding> run(const Bench& b, const std::string& text, const OracleConfig& cfg = {},
                         std::uint64_t gas = kDefaultGasLimit, ExecResult* result = nullptr) {
    return check_runtime_oracles(txn(b, text), *b.program, b.genesis, cfg, gas, result);
}

std::vector<Finding> only(const std::vector<Finding>& fs, OracleId id, const std::string& qualifier = "") {
    std::vector<Finding> out;
    for (const auto& f : fs)
        if (f.oracle == id && (qualifier.empty() || f.qualifier == qualifier)) out.push_back(f);
    return out;
}

std::string site(const Program& prog, const Finding& f) {
    return prog.function(f.function).qualified + "@" + std::to_string(f.pc);
}

const char* kHalf = "package p\nmodule m\npublic fn half(a: u64): u64\n  copy_loc a\n  ld u64 2\n  div\n  ret\nend\n";

const char* kCetusExploit =
    "call clmm::add_liquidity<clmm::SUI> @1 21267647932558653966460912964485513216u128\n"
    "call coin::coin_zero<clmm::SUI>\n"
    "call clmm::repay_liquidity<clmm::SUI> @1 r1.0 r0.1\n";

}  // namespace

TEST(PrecisionLoss, OddDividendIsLossy) {
    auto b = from_text(kHalf);
    auto fs = run(b, "call m::half 5u64\n");
    ASSERT_EQ(only(fs, OracleId::PrecisionLoss, "lossy").size(), 1u);
    EXPECT_EQ(fs[0].severity, Severity::Medium);
    EXPECT_TRUE(only(run(b, "call m::half 4u64\n"), OracleId::PrecisionLoss).empty());
}

TEST(PrecisionLoss, StarswapDivideThenMultiplyIsAmplified) {
    auto b = load_bench("starswap", "boost.pkg");
    auto fs = only(run(b, "call boost::update_boost_factor 7u128 4u128\n"), OracleId::PrecisionLoss, "amplified");
    std::set<std::string> sites;
    for (const auto& f : fs) sites.insert(site(*b.program, f));
    EXPECT_EQ(sites, (std::set<std::string>{"boost::update_boost_factor@11", "boost::calculate_boost_weight@4"}));
}

TEST(PrecisionLoss, ControlMultipliesFirst) {
    auto b = load_bench("starswap_control", "boost.pkg");
    for (const char* args : {"7u128 4u128", "1000u128 999u128", "5u128 1000000u128"})
        EXPECT_TRUE(only(run(b, std::string("call boost::update_boost_factor ") + args + "\n"), OracleId::PrecisionLoss,
                         "amplified")
                        .empty())
            << args;
}

TEST(PrecisionLoss, AmplifiedOnlyFilter) {
    auto b = from_text(kHalf);
    OracleConfig cfg;
    cfg.precision_amplified_only = true;
    EXPECT_TRUE(run(b, "call m::half 5u64\n", cfg).empty());
}

TEST(ShlOverflow, CountLeadingZerosNeverDropsBits) {
    auto b = load_bench("clz", "bits.pkg");
    for (std::uint32_t x = 0; x < 65536; x += 7) {
        auto fs = run(b, "call bits::leading_zeros " + std::to_string(x) + "u16\n");
        ASSERT_TRUE(only(fs, OracleId::ShlOverflow).empty()) << x;
    }
}

TEST(ShlOverflow, CetusShiftDropsHighBits) {
    auto b = load_bench("cetus", "clmm.pkg", "genesis.json");
    auto fs = only(run(b, kCetusExploit), OracleId::ShlOverflow);
    ASSERT_EQ(fs.size(), 1u);
    EXPECT_EQ(b.program->function(fs[0].function).qualified, "clmm::checked_shlw");
    EXPECT_TRUE(only(run(b, "call clmm::add_liquidity<clmm::SUI> @1 1000u128\n"
                            "call clmm::repay_liquidity<clmm::SUI> @1 r0.0 r0.1\n"),
                     OracleId::ShlOverflow)
                    .empty());
}

TEST(EarningProfits, CetusExploitGainsCoins) {
    auto b = load_bench("cetus", "clmm.pkg", "genesis.json");
    ExecResult r;
    run(b, kCetusExploit, {}, kDefaultGasLimit, &r);
    ASSERT_EQ(r.status, ExecStatus::Success);
    auto f = check_earning_profits(r);
    ASSERT_TRUE(f);
    EXPECT_EQ(f->severity, Severity::Critical);
}

TEST(EarningProfits, LoanRoundTripIsNeutral) {
    auto b = loan_bench();
    ExecResult r;
    auto fs = run(b, "call pool::loan<pool::VeryAble> 100u64\ncall pool::repay<pool::VeryAble> r0.0 r0.1\n", {},
                  kDefaultGasLimit, &r);
    EXPECT_TRUE(fs.empty());
    EXPECT_FALSE(check_earning_profits(r));
}

TEST(EarningProfits, AbortedRunsNeverCount) {
    ExecResult r;
    r.status = ExecStatus::Abort;
    r.balance_after[TypeTag::primitive(Prim::U8)] = 5;
    EXPECT_FALSE(check_earning_profits(r));
    r.status = ExecStatus::Success;
    EXPECT_TRUE(check_earning_profits(r));
}

TEST(Custom, RegisteredTagBecomesFinding) {
    auto b = load_bench("custom", "market.pkg", "genesis.json");
    ExecResult r;
    run(b, "call market::oracle_buy<market::USD> @1 @2\n", {}, kDefaultGasLimit, &r);
    ASSERT_EQ(r.status, ExecStatus::Success);
    auto fs = check_custom_events(r, {{1, "IncorrectReserveCalculation"}});
    ASSERT_EQ(fs.size(), 1u);
    EXPECT_EQ(fs[0].oracle, OracleId::Custom);
    EXPECT_EQ(fs[0].qualifier, "IncorrectReserveCalculation");
    EXPECT_TRUE(check_custom_events(r, {{9, "Other"}}).empty());
}

TEST(Lints, InfiniteLoopOnlyWhenOperandsFreeze) {
    auto b = load_bench("loops", "loops.pkg");
    auto spin = only(run(b, "call spin::wait_for 3u64\n", {}, 20000), OracleId::InfiniteLoop);
    ASSERT_EQ(spin.size(), 1u);
    EXPECT_EQ(site(*b.program, spin[0]), "spin::wait_for@3");
    ExecResult r;
    auto counting = run(b, "call spin::count_to 100000u64\n", {}, 20000, &r);
    EXPECT_EQ(r.status, ExecStatus::OutOfGas);
    EXPECT_TRUE(only(counting, OracleId::InfiniteLoop).empty());
    EXPECT_TRUE(only(run(b, "call spin::wait_for 7u64\n", {}, 20000), OracleId::InfiniteLoop).empty());
}

TEST(Lints, UnnecessaryBoolAndCast) {
    auto b = load_bench("loops", "loops.pkg");
    EXPECT_EQ(only(run(b, "call lints::flag_value true\n"), OracleId::UnnecessaryBool).size(), 1u);
    EXPECT_EQ(only(run(b, "call lints::widen 3u64\n"), OracleId::UnnecessaryCast).size(), 1u);
    EXPECT_TRUE(only(run(b, "call spin::count_to 3u64\n"), OracleId::UnnecessaryCast).empty());
}

TEST(Config, DisabledOracleIsSilent) {
    auto b = from_text(kHalf);
    OracleConfig cfg;
    cfg.enabled[static_cast<std::size_t>(OracleId::PrecisionLoss)] = false;
    EXPECT_TRUE(run(b, "call m::half 5u64\n", cfg).empty());
}

TEST(Config, ThresholdMustBePositive) {
    OracleConfig cfg;
    cfg.infinite_loop_threshold = 0;
    EXPECT_THROW(cfg.check(), std::invalid_argument);
}

TEST(Names, RoundTrip) {
    for (std::size_t i = 0; i < kOracleCount; ++i) {
        auto id = static_cast<OracleId>(i);
        EXPECT_EQ(oracle_from_name(oracle_name(id)), id);
    }
    EXPECT_FALSE(oracle_from_name("Reentrancy"));
}

TEST(Dedup, KeepsFirstPerSite) {
    auto b = from_text(kHalf);
    auto a = run(b, "call m::half 5u64\n");
    auto c = run(b, "call m::half 7u64\n");
    a.insert(a.end(), c.begin(), c.end());
    ASSERT_EQ(a.size(), 2u);
    auto d = dedup_findings(a, *b.program);
    ASSERT_EQ(d.size(), 1u);
    EXPECT_EQ(d[0].detail, a[0].detail);
}
