#include "tgfuzz/sym.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <boost/multiprecision/cpp_int.hpp>

namespace tgfuzz {

namespace {

using Wide = boost::multiprecision::cpp_int;

U256 wrap(const Wide& v, Prim p) {
    const Wide mod = Wide(1) << prim_bits(p);
    Wide r = v % mod;
    if (r < 0) r += mod;
    return U256(r);
}

SymRef finish(std::shared_ptr<SymExpr> e) {
    std::uint32_t d = 0;
    if (e->a) {
        d = std::max(d, e->a->depth);
        e->has_input |= e->a->has_input;
        e->lossy_call = std::max(e->lossy_call, e->a->lossy_call);
    }
    if (e->b) {
        d = std::max(d, e->b->depth);
        e->has_input |= e->b->has_input;
        e->lossy_call = std::max(e->lossy_call, e->b->lossy_call);
    }
    e->depth = d + 1;
    if (e->depth > kMaxSymDepth) {
        auto c = std::make_shared<SymExpr>();
        c->op = SymOp::Const;
        c->prim = e->prim;
        c->value = e->value;
        c->lossy_call = e->lossy_call;
        return c;
    }
    return e;
}

}  // namespace

bool apply_binop(SymOp op, Prim p, const U256& a, const U256& b, U256& out) {
    const unsigned w = prim_bits(p);
    switch (op) {
    case SymOp::Add: {
        Wide r = Wide(a) + Wide(b);
        out = wrap(r, p);
        return r <= Wide(prim_max(p));
    }
    case SymOp::Sub:
        out = wrap(Wide(a) - Wide(b), p);
        return a >= b;
    case SymOp::Mul: {
        Wide r = Wide(a) * Wide(b);
        out = wrap(r, p);
        return r <= Wide(prim_max(p));
    }
    case SymOp::Div:
        if (b == 0) { out = 0; return false; }
        out = a / b;
        return true;
    case SymOp::Mod:
        if (b == 0) { out = 0; return false; }
        out = a % b;
        return true;
    case SymOp::Shl:
        if (b >= w) { out = 0; return false; }
        out = wrap(Wide(a) << static_cast<unsigned>(b), p);
        return true;
    case SymOp::Shr:
        if (b >= w) { out = 0; return false; }
        out = a >> static_cast<unsigned>(b);
        return true;
    case SymOp::And: out = a & b; return true;
    case SymOp::Or: out = a | b; return true;
    case SymOp::Xor: out = a ^ b; return true;
    default: out = 0; return false;
    }
}

SymRef sym_input(std::uint32_t var, Prim p, const U256& value) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::Input;
    e->prim = p;
    e->var = var;
    e->value = value;
    e->has_input = true;
    e->depth = 1;
    return e;
}

SymRef sym_const(Prim p, const U256& value, bool literal) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::Const;
    e->prim = p;
    e->value = value;
    e->literal = literal;
    e->depth = 1;
    return e;
}

SymRef sym_bin(SymOp op, Prim p, SymRef a, SymRef b, const U256& value, std::int32_t lossy_call) {
    auto e = std::make_shared<SymExpr>();
    e->op = op;
    e->prim = p;
    e->value = value;
    e->a = std::move(a);
    e->b = std::move(b);
    e->lossy_call = lossy_call;
    return finish(std::move(e));
}

SymRef sym_cast(Prim to, SymRef a, const U256& value) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::Cast;
    e->prim = to;
    e->cast_to = to;
    e->value = value;
    e->a = std::move(a);
    return finish(std::move(e));
}

SymRef sym_cmp(SymOp op, SymRef a, SymRef b, bool value) {
    auto e = std::make_shared<SymExpr>();
    e->op = op;
    e->prim = Prim::Bool;
    e->value = value ? 1 : 0;
    e->a = std::move(a);
    e->b = std::move(b);
    return finish(std::move(e));
}

SymRef sym_not(SymRef a, bool value) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::Not;
    e->prim = Prim::Bool;
    e->value = value ? 1 : 0;
    e->a = std::move(a);
    return finish(std::move(e));
}

SymRef sym_fits(SymOp op, Prim p, SymRef a, SymRef b, bool value) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::Fits;
    e->prim = Prim::Bool;
    e->fits_op = op;
    e->cast_to = p;
    e->value = value ? 1 : 0;
    e->a = std::move(a);
    e->b = std::move(b);
    return finish(std::move(e));
}

SymRef sym_cast_fits(Prim to, SymRef a, bool value) {
    auto e = std::make_shared<SymExpr>();
    e->op = SymOp::CastFits;
    e->prim = Prim::Bool;
    e->cast_to = to;
    e->value = value ? 1 : 0;
    e->a = std::move(a);
    return finish(std::move(e));
}

namespace {

class Evaluator {
public:
    explicit Evaluator(const std::vector<U256>& inputs) : inputs_(inputs) {}

    U256 eval(const SymExpr& e) {
        if (e.op == SymOp::Input) return e.var < inputs_.size() ? inputs_[e.var] : e.value;
        if (e.op == SymOp::Const) return e.value;
        if (!e.has_input) return e.value;
        auto it = memo_.find(&e);
        if (it != memo_.end()) return it->second;
        U256 v = compute(e);
        memo_.emplace(&e, v);
        return v;
    }

private:
    U256 compute(const SymExpr& e) {
        switch (e.op) {
        case SymOp::Add: case SymOp::Sub: case SymOp::Mul: case SymOp::Div: case SymOp::Mod:
        case SymOp::Shl: case SymOp::Shr: case SymOp::And: case SymOp::Or: case SymOp::Xor: {
            U256 out;
            apply_binop(e.op, e.prim, eval(*e.a), eval(*e.b), out);
            return out;
        }
        case SymOp::Cast: return eval(*e.a) & prim_max(e.cast_to);
        case SymOp::Eq: return eval(*e.a) == eval(*e.b) ? 1 : 0;
        case SymOp::Neq: return eval(*e.a) != eval(*e.b) ? 1 : 0;
        case SymOp::Lt: return eval(*e.a) < eval(*e.b) ? 1 : 0;
        case SymOp::Le: return eval(*e.a) <= eval(*e.b) ? 1 : 0;
        case SymOp::Gt: return eval(*e.a) > eval(*e.b) ? 1 : 0;
        case SymOp::Ge: return eval(*e.a) >= eval(*e.b) ? 1 : 0;
        case SymOp::Not: return eval(*e.a) == 0 ? 1 : 0;
        case SymOp::Fits: {
            U256 out;
            return apply_binop(e.fits_op, e.cast_to, eval(*e.a), eval(*e.b), out) ? 1 : 0;
        }
        case SymOp::CastFits: return eval(*e.a) <= prim_max(e.cast_to) ? 1 : 0;
        default: return e.value;
        }
    }

    const std::vector<U256>& inputs_;
    std::unordered_map<const SymExpr*, U256> memo_;
};

void collect_vars(const SymExpr& e, std::vector<std::uint32_t>& out, std::unordered_set<const SymExpr*>& seen) {
    if (!e.has_input || !seen.insert(&e).second) return;
    if (e.op == SymOp::Input) {
        if (std::find(out.begin(), out.end(), e.var) == out.end()) out.push_back(e.var);
        return;
    }
    if (e.a) collect_vars(*e.a, out, seen);
    if (e.b) collect_vars(*e.b, out, seen);
}

}  // namespace

U256 sym_eval(const SymExpr& e, const std::vector<U256>& inputs) { return Evaluator(inputs).eval(e); }

void sym_vars(const SymExpr& e, std::vector<std::uint32_t>& out) {
    std::unordered_set<const SymExpr*> seen;
    collect_vars(e, out, seen);
}

const char* sym_op_name(SymOp op) {
    switch (op) {
    case SymOp::Input: return "input";
    case SymOp::Const: return "const";
    case SymOp::Add: return "add";
    case SymOp::Sub: return "sub";
    case SymOp::Mul: return "mul";
    case SymOp::Div: return "div";
    case SymOp::Mod: return "mod";
    case SymOp::Shl: return "shl";
    case SymOp::Shr: return "shr";
    case SymOp::And: return "and";
    case SymOp::Or: return "or";
    case SymOp::Xor: return "xor";
    case SymOp::Cast: return "cast";
    case SymOp::Eq: return "eq";
    case SymOp::Neq: return "neq";
    case SymOp::Lt: return "lt";
    case SymOp::Le: return "le";
    case SymOp::Gt: return "gt";
    case SymOp::Ge: return "ge";
    case SymOp::Not: return "not";
    case SymOp::Fits: return "fits";
    case SymOp::CastFits: return "cast_fits";
    }
    return "?";
}

namespace {

constexpr std::streamoff kMaxPrinted = 16384;

void print(const SymExpr& e, std::ostream& out) {
    if (out.tellp() > kMaxPrinted) {
        out << "...";
        return;
    }
    switch (e.op) {
    case SymOp::Input: out << 'x' << e.var; return;
    case SymOp::Const:
        if (e.prim == Prim::Bool) out << (e.value != 0 ? "true" : "false");
        else out << e.value << ':' << prim_name(e.prim);
        return;
    case SymOp::Cast: out << "(cast_" << prim_name(e.cast_to) << ' '; print(*e.a, out); out << ')'; return;
    case SymOp::Not: out << "(not "; print(*e.a, out); out << ')'; return;
    case SymOp::CastFits: out << "(cast_fits_" << prim_name(e.cast_to) << ' '; print(*e.a, out); out << ')'; return;
    case SymOp::Fits:
        out << "(fits_" << sym_op_name(e.fits_op) << '_' << prim_name(e.cast_to) << ' ';
        print(*e.a, out);
        out << ' ';
        print(*e.b, out);
        out << ')';
        return;
    default:
        out << '(' << sym_op_name(e.op) << ' ';
        print(*e.a, out);
        out << ' ';
        print(*e.b, out);
        out << ')';
        return;
    }
}

}  // namespace

std::string sym_to_string(const SymExpr& e) {
    std::ostringstream out;
    print(e, out);
    return out.str();
}

}  // namespace tgfuzz
