#pragma once

// Symbolic expressions attached to runtime integers and booleans. Every node
// caches its concrete value so consumers can inspect a trace without
// re-evaluating it.

#include <memory>
#include <string>
#include <vector>

#include "tgfuzz/model.hpp"

namespace tgfuzz {

enum class SymOp : std::uint8_t {
    Input, Const,
    Add, Sub, Mul, Div, Mod, Shl, Shr, And, Or, Xor,
    Cast,
    Eq, Neq, Lt, Le, Gt, Ge,
    Not,
    /// Boolean: the exact (unbounded) result of `fits_op` over the children is representable,
    /// the divisor is nonzero, or the shift amount is below the width.
    Fits,
    /// Boolean: the child fits the width `cast_to`.
    CastFits,
};

struct SymExpr;
using SymRef = std::shared_ptr<const SymExpr>;

struct SymExpr {
    SymOp op = SymOp::Const;
    /// Result width (Bool for predicates).
    Prim prim = Prim::U64;
    U256 value = 0;
    bool literal = false;
    std::uint32_t var = 0;
    SymOp fits_op = SymOp::Add;
    Prim cast_to = Prim::U64;
    SymRef a;
    SymRef b;
    std::uint32_t depth = 0;
    bool has_input = false;
    /// Top-level call index of the latest Div below this node that discarded a nonzero remainder, or -1.
    std::int32_t lossy_call = -1;
};

constexpr std::uint32_t kMaxSymDepth = 256;

SymRef sym_input(std::uint32_t var, Prim p, const U256& value);
SymRef sym_const(Prim p, const U256& value, bool literal = false);
/// Arithmetic/bitwise node; `value` is the concrete result.
SymRef sym_bin(SymOp op, Prim p, SymRef a, SymRef b, const U256& value, std::int32_t lossy_call = -1);
SymRef sym_cast(Prim to, SymRef a, const U256& value);
SymRef sym_cmp(SymOp op, SymRef a, SymRef b, bool value);
SymRef sym_not(SymRef a, bool value);
SymRef sym_fits(SymOp op, Prim p, SymRef a, SymRef b, bool value);
SymRef sym_cast_fits(Prim to, SymRef a, bool value);

/// Evaluates under an input assignment (indexed by variable id). Arithmetic wraps
/// modulo the node width, division by zero yields 0, casts truncate.
U256 sym_eval(const SymExpr& e, const std::vector<U256>& inputs);

/// Collects input variable ids below `e`.
void sym_vars(const SymExpr& e, std::vector<std::uint32_t>& out);

/// Prefix notation, e.g. `(eq (add x0 (div x0 1000:u64)) x1)`.
std::string sym_to_string(const SymExpr& e);

const char* sym_op_name(SymOp op);

/// Applies a binary arithmetic/bitwise op at width `p` with Move semantics.
/// Returns false (abort) on overflow, zero divisor or oversized shift; `out` receives the wrapped value regardless.
bool apply_binop(SymOp op, Prim p, const U256& a, const U256& b, U256& out);

}  // namespace tgfuzz
