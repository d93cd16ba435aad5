#include <gtest/gtest.h>

#include "support.hpp"

using namespace tgfuzz;
using tgfuzz::testing::bench_path;

namespace {

TypeTag u(Prim p) { return TypeTag::primitive(p); }
TypeTag dt(const std::string& m, const std::string& n, std::vector<TypeTag> args = {}) {
    return TypeTag::datatype({m, n}, std::move(args));
}

const char* kLoanPackage = R"(package loan
module pool
datatype VeryAble has drop, store
  field level: u64
end
datatype Receipt<T>
  field amount: u64
end
public fn loan<T>(amount: u64): (Coin<T>, Receipt<T>)
  copy_loc amount
  pack Coin<T>
  copy_loc amount
  pack Receipt<T>
  ret
end
public fn repay<T>(coin: Coin<T>, receipt: Receipt<T>)
  move_loc coin
  unpack Coin<T>
  move_loc receipt
  unpack Receipt<T>
  eq
  br_true ok
  abort 1
ok:
  ret
end
)";

}  // namespace

TEST(Package, LoanHasTwoDatatypesAndTwoFunctions) {
    auto pkg = parse_package(kLoanPackage);
    ASSERT_EQ(pkg->modules.size(), 1u);
    EXPECT_EQ(pkg->modules[0].name, "pool");
    EXPECT_EQ(pkg->modules[0].datatypes.size(), 2u);
    EXPECT_EQ(pkg->modules[0].functions.size(), 2u);
    const auto* loan = pkg->modules[0].find_function("loan");
    ASSERT_NE(loan, nullptr);
    EXPECT_EQ(loan->type_params, 1u);
    EXPECT_EQ(loan->visibility, Visibility::Public);
}

TEST(Package, EmptyModuleListBuilds) {
    auto pkg = parse_package("package empty\n");
    EXPECT_TRUE(pkg->modules.empty());
    Program prog(pkg);
    EXPECT_NO_THROW(verify_program(prog));
}

TEST(Package, MissingRetIsRejectedAtLastInstruction) {
    try {
        parse_package("package p\nmodule m\npublic fn f(x: u64): u64\n  copy_loc x\n  ld u64 1\n  add\nend\n");
        FAIL() << "expected VerifyError";
    } catch (const VerifyError& e) {
        EXPECT_EQ(e.instruction(), 2u);
    }
}

TEST(Package, UnknownOpcodeReportsLine) {
    try {
        parse_package("package p\nmodule m\npublic fn f()\n  frobnicate\n  ret\nend\n");
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
}

TEST(Verifier, RejectsMixedWidthArithmetic) {
    EXPECT_THROW(parse_package("package p\nmodule m\npublic fn f(): u64\n  ld u64 1\n  ld u8 1\n  add\n  ret\nend\n"),
                 VerifyError);
}

TEST(Verifier, FieldReadNeedsReference) {
    EXPECT_THROW(parse_package("package p\nmodule m\ndatatype S has copy, drop\n  field a: u64\nend\n"
                               "public fn f(s: S): u64\n  copy_loc s\n  read_field S.a\n  ret\nend\n"),
                 VerifyError);
}

TEST(Verifier, HotPotatoCannotBePopped) {
    EXPECT_THROW(parse_package("package p\nmodule m\ndatatype H\n  field a: u64\nend\n"
                               "public fn f(h: H)\n  move_loc h\n  pop\n  ret\nend\n"),
                 VerifyError);
}

TEST(Verifier, ShiftAmountMustBeU8) {
    EXPECT_THROW(parse_package("package p\nmodule m\npublic fn f(): u64\n  ld u64 1\n  ld u64 3\n  shl\n  ret\nend\n"),
                 VerifyError);
}

TEST(Substitute, ReplacesParameterInDatatype) {
    auto r = substitute(dt("pool", "Receipt", {TypeTag::parameter(0)}), {u(Prim::U32)});
    EXPECT_EQ(r, dt("pool", "Receipt", {u(Prim::U32)}));
}

TEST(Substitute, PrimitiveIsUnchanged) { EXPECT_EQ(substitute(u(Prim::U64), {u(Prim::Bool)}), u(Prim::U64)); }

TEST(Substitute, RecursesIntoVectors) {
    auto r = substitute(TypeTag::vector(TypeTag::parameter(0)), {TypeTag::vector(u(Prim::U8))});
    ASSERT_TRUE(r.is_vector());
    ASSERT_TRUE(r.element().is_vector());
    EXPECT_EQ(r.element().element(), u(Prim::U8));
    EXPECT_EQ(r.to_string(), "vector<vector<u8>>");
}

TEST(HotPotato, AbilitiesDecide) {
    DatatypeDecl receipt{"Receipt", 1, {}, {}};
    DatatypeDecl very{"VeryAble", 0, {Ability::Drop, Ability::Store}, {}};
    DatatypeDecl stored{"S", 0, {Ability::Store}, {}};
    DatatypeDecl dropped{"D", 0, {Ability::Drop}, {}};
    EXPECT_TRUE(is_hot_potato(receipt));
    EXPECT_FALSE(is_hot_potato(very));
    EXPECT_FALSE(is_hot_potato(stored));
    EXPECT_FALSE(is_hot_potato(dropped));
}

TEST(Signature, LoanInstantiatedAtUsdc) {
    auto pkg = parse_package(kLoanPackage);
    const auto& loan = *pkg->modules[0].find_function("loan");
    const TypeTag usdc = dt("pool", "VeryAble");
    auto sig = signature_of(loan, {usdc});
    ASSERT_EQ(sig.inputs.size(), 1u);
    EXPECT_EQ(sig.inputs[0], u(Prim::U64));
    ASSERT_EQ(sig.outputs.size(), 2u);
    EXPECT_EQ(sig.outputs[0], dt("coin", "Coin", {usdc}));
    EXPECT_EQ(sig.outputs[1], dt("pool", "Receipt", {usdc}));
}

TEST(Signature, NonGenericUnchangedAndArityChecked) {
    auto pkg = parse_package("package p\nmodule m\npublic fn f(a: u8): bool\n  ld bool true\n  ret\nend\n");
    const auto& f = pkg->modules[0].functions[0];
    auto sig = signature_of(f, {});
    EXPECT_EQ(sig.inputs, std::vector<TypeTag>{u(Prim::U8)});
    EXPECT_EQ(sig.outputs, std::vector<TypeTag>{u(Prim::Bool)});
    auto loan = parse_package(kLoanPackage);
    EXPECT_THROW(signature_of(*loan->modules[0].find_function("repay"), {u(Prim::U8), u(Prim::U8)}), ArityError);
}

TEST(Literals, DecimalHexAndUnderscores) {
    EXPECT_EQ(parse_u256_literal("1_000"), U256(1000));
    EXPECT_EQ(parse_u256_literal("0xff"), U256(255));
    EXPECT_EQ(parse_u256_literal("0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF"), prim_max(Prim::U256));
    EXPECT_THROW(parse_u256_literal("0x1FFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF"),
                 std::invalid_argument);
}

class BenchmarkRoundTrip : public ::testing::TestWithParam<const char*> {};

TEST_P(BenchmarkRoundTrip, SerializeThenParseIsIdentity) {
    auto pkg = load_package_file(bench_path(GetParam()));
    auto text = serialize_package(*pkg);
    auto again = parse_package(text);
    EXPECT_TRUE(*pkg == *again);
    EXPECT_EQ(serialize_package(*again), text);
}

INSTANTIATE_TEST_SUITE_P(All, BenchmarkRoundTrip,
                         ::testing::Values("loan/pool.pkg", "flash/flash.pkg", "cetus/clmm.pkg", "nemo/market.pkg",
                                           "clz/bits.pkg", "starswap/boost.pkg", "starswap_control/boost.pkg",
                                           "tick/position.pkg", "custom/market.pkg", "loops/loops.pkg"));
