#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "tgfuzz/type_graph.hpp"

using namespace tgfuzz;
using namespace tgfuzz::testing;

namespace {

TypeTag dt(const std::string& m, const std::string& n, std::vector<TypeTag> args = {}) {
    return TypeTag::datatype({m, n}, std::move(args));
}
TypeTag p0() { return TypeTag::parameter(0); }
TypeTag u(Prim p) { return TypeTag::primitive(p); }

std::set<std::string> names(const Program& prog, const std::vector<ProducerMatch>& ms) {
    std::set<std::string> out;
    for (const auto& m : ms) out.insert(prog.function(m.function).qualified);
    return out;
}

bool has_edge(const TypeGraph& g, const TypeTag& pattern, const std::string& fn, EdgeDirection d) {
    auto t = g.type_node(pattern);
    if (!t) return false;
    for (std::size_t idx : g.edges_of(*t)) {
        const auto& e = g.edges()[idx];
        if (e.direction == d && g.program().function(g.node(e.function_node).function).qualified == fn) return true;
    }
    return false;
}

}  // namespace

TEST(TypeGraph, LoanNodesAndEdges) {
    auto b = loan_bench();
    auto g = build_type_graph(*b.program);
    const TypeTag coin = dt("coin", "Coin", {p0()});
    const TypeTag receipt = dt("pool", "Receipt", {p0()});
    ASSERT_TRUE(g.type_node(u(Prim::U64)));
    ASSERT_TRUE(g.type_node(coin));
    ASSERT_TRUE(g.type_node(receipt));
    EXPECT_EQ(g.node(*g.type_node(receipt)).kind, NodeKind::HotPotatoType);
    EXPECT_EQ(g.node(*g.type_node(coin)).kind, NodeKind::DefaultType);
    EXPECT_TRUE(g.function_node(*b.program->find_function("pool::loan")));
    EXPECT_TRUE(g.function_node(*b.program->find_function("pool::repay")));

    EXPECT_TRUE(has_edge(g, u(Prim::U64), "pool::loan", EdgeDirection::Input));
    EXPECT_TRUE(has_edge(g, coin, "pool::loan", EdgeDirection::Output));
    EXPECT_TRUE(has_edge(g, receipt, "pool::loan", EdgeDirection::Output));
    EXPECT_TRUE(has_edge(g, coin, "pool::repay", EdgeDirection::Input));
    EXPECT_TRUE(has_edge(g, receipt, "pool::repay", EdgeDirection::Input));
    EXPECT_FALSE(has_edge(g, receipt, "pool::repay", EdgeDirection::Output));
}

TEST(TypeGraph, FlashHasSplitAndSwapWithAnnotations) {
    auto b = flash_bench();
    auto g = build_type_graph(*b.program);
    const TypeTag coin = dt("coin", "Coin", {p0()});
    EXPECT_TRUE(has_edge(g, coin, "flash::split_coin", EdgeDirection::Input));
    EXPECT_TRUE(has_edge(g, coin, "flash::split_coin", EdgeDirection::Output));
    EXPECT_TRUE(has_edge(g, coin, "flash::swap", EdgeDirection::Input));
    EXPECT_TRUE(has_edge(g, coin, "flash::swap", EdgeDirection::Output));

    // swap<T1,T2>: the input edge maps the node parameter to T1, the output edge to T2.
    const NodeId coin_node = *g.type_node(coin);
    const FunctionId swap = *b.program->find_function("flash::swap");
    int seen = 0;
    for (std::size_t idx : g.edges_of(coin_node)) {
        const auto& e = g.edges()[idx];
        if (g.node(e.function_node).function != swap) continue;
        ASSERT_TRUE(e.annotation);
        ASSERT_EQ(e.annotation->size(), 1u);
        EXPECT_EQ((*e.annotation)[0], TypeTag::parameter(e.direction == EdgeDirection::Input ? 0 : 1));
        ++seen;
    }
    EXPECT_EQ(seen, 2);
    // split_coin has two Coin<T> outputs sharing one edge.
    const FunctionId split = *b.program->find_function("flash::split_coin");
    for (std::size_t idx : g.edges_of(coin_node)) {
        const auto& e = g.edges()[idx];
        if (g.node(e.function_node).function == split && e.direction == EdgeDirection::Output)
            EXPECT_EQ(e.positions, (std::vector<std::uint32_t>{0, 1}));
    }
}

TEST(TypeGraph, EmptySignatureGivesIsolatedFunction) {
    auto pkg = parse_package("package p\nmodule m\npublic fn noop()\n  ret\nend\n");
    Program prog(pkg);
    auto g = build_type_graph(prog);
    const FunctionId f = *prog.find_function("m::noop");
    auto n = g.function_node(f);
    ASSERT_TRUE(n);
    EXPECT_TRUE(g.edges_of(*n).empty());
}

TEST(TypeGraph, ProducersOfReceipt) {
    auto b = loan_bench();
    auto g = build_type_graph(*b.program);
    const TypeTag usdc = dt("pool", "VeryAble");
    auto ps = producers_of(g, dt("pool", "Receipt", {usdc}));
    ASSERT_EQ(ps.size(), 1u);
    EXPECT_EQ(b.program->function(ps[0].function).qualified, "pool::loan");
    ASSERT_EQ(ps[0].binding.size(), 1u);
    EXPECT_EQ(ps[0].binding[0], usdc);
    EXPECT_TRUE(producers_of(g, u(Prim::Bool)).empty());
}

TEST(TypeGraph, ConsumersOfReceipt) {
    auto b = loan_bench();
    auto g = build_type_graph(*b.program);
    const TypeTag usdc = dt("pool", "VeryAble");
    auto cs = consumers_of(g, dt("pool", "Receipt", {usdc}));
    ASSERT_EQ(cs.size(), 1u);
    EXPECT_EQ(b.program->function(cs[0].function).qualified, "pool::repay");
    EXPECT_EQ(cs[0].position, 1u);
    EXPECT_EQ(cs[0].binding[0], usdc);
    EXPECT_THROW(consumers_of(g, TypeTag::vector(u(Prim::U8))), UnknownType);
}

TEST(TypeGraph, FlashCoinProducersAndConsumers) {
    auto b = flash_bench();
    auto g = build_type_graph(*b.program);
    const TypeTag coin = dt("coin", "Coin", {u(Prim::U32)});
    auto ps = producers_of(g, coin);
    auto pn = names(*b.program, ps);
    for (auto f : {"flash::loan", "flash::split_coin", "flash::swap"}) EXPECT_TRUE(pn.count(f)) << f;
    EXPECT_EQ(std::count_if(ps.begin(), ps.end(),
                            [&](const ProducerMatch& m) {
                                return b.program->function(m.function).qualified == "flash::split_coin";
                            }),
              2);
    std::set<std::pair<std::string, std::uint32_t>> cs;
    for (const auto& m : consumers_of(g, coin)) cs.insert({b.program->function(m.function).qualified, m.position});
    EXPECT_TRUE(cs.count({"flash::repay", 0}));
    EXPECT_TRUE(cs.count({"flash::split_coin", 0}));
    EXPECT_TRUE(cs.count({"flash::swap", 0}));
}

TEST(TypeGraph, LoanStartsAtLoan) {
    auto b = loan_bench();
    auto g = build_type_graph(*b.program);
    auto starts = start_functions(g);
    ASSERT_EQ(starts.size(), 1u);
    EXPECT_EQ(b.program->function(g.node(starts[0]).function).qualified, "pool::loan");
}

TEST(TypeGraph, NoFunctionsNoStarts) {
    Program prog(parse_package("package p\nmodule m\ndatatype S has drop\n  field a: u8\nend\n"));
    auto g = build_type_graph(prog);
    std::vector<NodeId> target;
    for (NodeId n : start_functions(g))
        if (prog.function(g.node(n).function).in_target) target.push_back(n);
    EXPECT_TRUE(target.empty());
}

TEST(TypeGraph, NemoStartsThroughPoolObjects) {
    auto b = load_bench("nemo", "market.pkg", "genesis.json");
    auto g = build_type_graph(*b.program);
    std::set<std::string> with_pool, without_pool;
    for (NodeId n : start_functions(g, b.genesis.view())) with_pool.insert(b.program->function(g.node(n).function).qualified);
    for (NodeId n : start_functions(g)) without_pool.insert(b.program->function(g.node(n).function).qualified);
    EXPECT_TRUE(with_pool.count("market::get_oracle"));
    EXPECT_TRUE(with_pool.count("market::swap") || with_pool.count("market::borrow"));
    EXPECT_FALSE(without_pool.count("market::get_oracle"));
}

TEST(TypeGraph, ExcludingGenericsDropsGenericFunctions) {
    auto b = loan_bench();
    auto g = build_type_graph(*b.program, {.exclude_generic_functions = true});
    EXPECT_FALSE(g.function_node(*b.program->find_function("pool::loan")));
}
