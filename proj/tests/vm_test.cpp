#include <gtest/gtest.h>

#include "differential.hpp"

using namespace tgfuzz;
using namespace tgfuzz::testing;

TEST(Genesis, NemoPoolHasMarketAndOracle) {
    auto b = load_bench("nemo", "market.pkg", "genesis.json");
    auto pool = b.genesis.view();
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(b.genesis.objects.at(2).ownership, Ownership::Shared);
    EXPECT_TRUE(b.genesis.sender_balances().empty());
}

TEST(Genesis, SenderBalanceFromCoins) {
    auto b = flash_bench();
    auto bal = b.genesis.sender_balances();
    ASSERT_EQ(bal.size(), 1u);
    EXPECT_EQ(bal.begin()->second, U256(1000000000000ull));
}

TEST(Genesis, EmptyDocument) {
    auto b = loan_bench();
    EXPECT_TRUE(b.genesis.objects.empty());
    EXPECT_TRUE(b.genesis.sender_balances().empty());
}

TEST(Genesis, AbortingInitializer) {
    const std::string text = "package p\nmodule m\nfn init()\n  abort 9\nend\n";
    Program prog(parse_package(text));
    try {
        empty_genesis(prog);
        FAIL() << "expected GenesisError";
    } catch (const GenesisError& e) {
        EXPECT_NE(std::string(e.what()).find("9"), std::string::npos) << e.what();
    }
}

TEST(Genesis, MalformedJson) {
    auto b = loan_bench();
    EXPECT_THROW(load_genesis("{objects:", *b.program), GenesisError);
    EXPECT_THROW(load_genesis(R"({"objects":[{"type":"pool::Nope"}]})", *b.program), GenesisError);
}

TEST(Execute, LoanRepaySucceedsAndConservesCoins) {
    auto b = loan_bench();
    auto r = execute(txn(b, "call pool::loan<pool::VeryAble> 100u64\ncall pool::repay<pool::VeryAble> r0.0 r0.1\n"),
                     *b.program, b.genesis);
    EXPECT_EQ(r.status, ExecStatus::Success);
    EXPECT_EQ(r.calls_completed, 2u);
    EXPECT_EQ(r.balance_before, r.balance_after);
}

TEST(Execute, SplittingPoolCoinConservesBalance) {
    auto b = flash_bench();
    WorldState after;
    auto r = execute(txn(b, "call flash::split_coin<flash::USDC> @1 400u64\n"), *b.program, b.genesis, {}, &after);
    ASSERT_EQ(r.status, ExecStatus::Success);
    EXPECT_EQ(r.balance_before, r.balance_after);
    EXPECT_EQ(after.sender_balances(), b.genesis.sender_balances());
}

TEST(Execute, FailedRepayAbortsWithCode) {
    auto b = loan_bench();
    auto t = txn(b, "call pool::loan<u8> 100u64\ncall coin::coin_split<u8> r0.0 1u64\ncall pool::repay<u8> r1.0 r0.1\n");
    auto r = execute(t, *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Abort);
    EXPECT_EQ(r.abort->kind, AbortKind::Explicit);
    EXPECT_EQ(r.abort->code, 1);
    EXPECT_EQ(r.abort->call_index, 2u);
    EXPECT_EQ(r.calls_completed, 2u);
}

TEST(Execute, DivisionByZeroAbortsAtDiv) {
    auto b = load_bench("starswap", "boost.pkg");
    auto t = txn(b, "call boost::calculate_boost_weight 5u128 0u128\n");
    auto r = execute(t, *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Abort);
    EXPECT_EQ(r.abort->kind, AbortKind::DivisionByZero);
    const auto& fn = b.program->function(r.abort->function);
    EXPECT_EQ(fn.qualified, "boost::compute_weight");
    EXPECT_EQ(fn.decl->body.at(r.abort->pc).op, Opcode::Div);
}

TEST(Execute, OutOfGasAfterExactlyTheLimit) {
    auto b = load_bench("loops", "loops.pkg");
    auto r = execute(txn(b, "call spin::wait_for 3u64\n"), *b.program, b.genesis);
    EXPECT_EQ(r.status, ExecStatus::OutOfGas);
    EXPECT_EQ(r.gas_used, kDefaultGasLimit);
    ExecOptions opts;
    opts.gas_limit = 777;
    EXPECT_EQ(execute(txn(b, "call spin::wait_for 3u64\n"), *b.program, b.genesis, opts).gas_used, 777u);
}

TEST(Execute, GasEqualsInstructionsRetired) {
    auto b = load_bench("starswap", "boost.pkg");
    const auto body = [&](const char* f) { return b.program->function(*b.program->find_function("boost", f)).decl->body.size(); };
    // Straight-line callee and caller: every instruction retires exactly once.
    auto r = execute(txn(b, "call boost::calculate_boost_weight 7u128 2u128\n"), *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Success);
    EXPECT_EQ(r.gas_used, body("calculate_boost_weight") + body("compute_weight"));
    // count_to(n): 2 setup, 9 per iteration, 6 for the exit test and return.
    auto loops = load_bench("loops", "loops.pkg");
    for (std::uint64_t n : {0u, 1u, 25u}) {
        auto c = execute(txn(loops, "call spin::count_to " + std::to_string(n) + "u64\n"), *loops.program, loops.genesis);
        ASSERT_EQ(c.status, ExecStatus::Success);
        EXPECT_EQ(c.gas_used, 2 + 9 * n + 6) << n;
    }
}

TEST(Execute, Deterministic) {
    auto b = load_bench("cetus", "clmm.pkg", "genesis.json");
    auto t = txn(b, "call clmm::add_liquidity<clmm::SUI> @1 21267647932558653966460912964485513216u128\n"
                    "call coin::coin_zero<clmm::SUI>\n"
                    "call clmm::repay_liquidity<clmm::SUI> @1 r1.0 r0.1\n");
    auto a = execute(t, *b.program, b.genesis);
    auto c = execute(t, *b.program, b.genesis);
    EXPECT_EQ(a.status, c.status);
    EXPECT_EQ(a.coverage, c.coverage);
    EXPECT_EQ(a.gas_used, c.gas_used);
    EXPECT_EQ(a.balance_after, c.balance_after);
}

TEST(Execute, StateIsDiscardedBetweenRuns) {
    auto b = load_bench("cetus", "clmm.pkg", "genesis.json");
    auto t = txn(b, "call clmm::add_liquidity<clmm::SUI> @1 5u128\ncall clmm::repay_liquidity<clmm::SUI> @1 r0.0 r0.1\n");
    WorldState after;
    execute(t, *b.program, b.genesis, {}, &after);
    EXPECT_FALSE(after.objects.at(1).value.same(b.genesis.objects.at(1).value));
    auto again = reset_state(b.genesis);
    EXPECT_TRUE(again.objects.at(1).value.same(b.genesis.objects.at(1).value));
}

TEST(Coverage, NewnessSemantics) {
    auto b = loan_bench();
    CoverageMap map(*b.program);
    auto ok = execute(txn(b, "call pool::loan<u8> 1u64\ncall pool::repay<u8> r0.0 r0.1\n"), *b.program, b.genesis);
    EXPECT_GT(map.record(ok.coverage), 0u);
    EXPECT_EQ(map.record(ok.coverage), 0u);
    auto bad = execute(txn(b, "call pool::loan<u8> 1u64\ncall coin::coin_split<u8> r0.0 0u64\ncall pool::repay<u8> r1.0 r0.1\n"),
                       *b.program, b.genesis);
    EXPECT_GT(map.record(bad.coverage), 0u);
}

TEST(Coverage, OppositeArmsAreBothNew) {
    auto b = from_text("package p\nmodule m\npublic fn f(x: bool)\n  copy_loc x\n  br_true yes\n  ret\nyes:\n  ret\nend\n");
    CoverageMap map(*b.program);
    EXPECT_EQ(map.record(execute(txn(b, "call m::f true\n"), *b.program, b.genesis).coverage), 1u);
    EXPECT_EQ(map.record(execute(txn(b, "call m::f false\n"), *b.program, b.genesis).coverage), 1u);
    EXPECT_EQ(map.covered(), 2u);
}

TEST(Differential, ArithmeticCastAndShiftMatchBigIntegers) {
    auto r = run_differential(100000, 2024);
    EXPECT_EQ(r.checked, 600000u);
    for (const auto& m : r.mismatches) ADD_FAILURE() << m;
}

TEST(Semantics, ShlOnU256DiscardsHighBits) {
    auto b = from_text(arithmetic_package());
    Transaction t;
    t.calls.push_back({*b.program->find_function("d", "shl_u256"), {},
                       {ArgBinding::literal(Prim::U256, U256(1) << 192), ArgBinding::literal(Prim::U8, 64)}});
    auto r = execute(t, *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Success);
    EXPECT_EQ(r.events.at(0).payload.at(0), 0);
}

TEST(Semantics, CastU128ToU64Of2To64) {
    auto b = from_text(arithmetic_package());
    Transaction t;
    t.calls.push_back({*b.program->find_function("d", "cast_u128_u64"), {}, {ArgBinding::literal(Prim::U128, U256(1) << 64)}});
    auto r = execute(t, *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Abort);
    EXPECT_EQ(r.abort->kind, AbortKind::CastOutOfRange);
}

TEST(Semantics, U8AdditionOverflows) {
    auto b = from_text(arithmetic_package());
    Transaction t;
    t.calls.push_back({*b.program->find_function("d", "add_u8"), {},
                       {ArgBinding::literal(Prim::U8, 200), ArgBinding::literal(Prim::U8, 100)}});
    auto r = execute(t, *b.program, b.genesis);
    ASSERT_EQ(r.status, ExecStatus::Abort);
    EXPECT_EQ(r.abort->kind, AbortKind::ArithmeticOverflow);
}
