#include "tgfuzz/concolic.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include <boost/multiprecision/cpp_int.hpp>

namespace tgfuzz {

const char* constraint_kind_name(ConstraintKind k) {
    switch (k) {
    case ConstraintKind::BranchCond: return "branch";
    case ConstraintKind::NoOverflow: return "no_overflow";
    case ConstraintKind::CastInRange: return "cast_in_range";
    case ConstraintKind::VecIndexInBounds: return "vec_index_in_bounds";
    }
    return "?";
}

const char* solve_status_name(SolveStatus s) {
    switch (s) {
    case SolveStatus::Sat: return "sat";
    case SolveStatus::Unsat: return "unsat";
    case SolveStatus::Unknown: return "unknown";
    }
    return "?";
}

std::vector<U256> PathCondition::current_values() const {
    std::vector<U256> out;
    out.reserve(inputs.size());
    for (const auto& v : inputs) out.push_back(v.value);
    return out;
}

// ---- collection -----------------------------------------------------------

namespace {

bool symbolic(const Value* v) { return v && v->sym && v->sym->has_input; }

SymRef shadow(const Value& v) { return v.sym ? v.sym : sym_const(v.prim, v.num); }

std::optional<SymOp> arith_op(Opcode op) {
    switch (op) {
    case Opcode::Add: return SymOp::Add;
    case Opcode::Sub: return SymOp::Sub;
    case Opcode::Mul: return SymOp::Mul;
    case Opcode::Div: return SymOp::Div;
    case Opcode::Mod: return SymOp::Mod;
    case Opcode::Shl: return SymOp::Shl;
    case Opcode::Shr: return SymOp::Shr;
    default: return std::nullopt;
    }
}

}  // namespace

void ConstraintCollector::on_step(const StepInfo& s) {
    Constraint c;
    c.function = s.function;
    c.pc = s.pc;
    c.call_index = s.call_index;
    const Opcode op = s.ins->op;
    if (op == Opcode::BrTrue || op == Opcode::BrFalse) {
        if (!symbolic(s.lhs)) return;
        c.kind = ConstraintKind::BranchCond;
        c.expr = s.lhs->sym;
        c.expected = s.lhs->truthy();
        c.taken = s.taken;
    } else if (auto a = arith_op(op)) {
        if (!symbolic(s.lhs) && !symbolic(s.rhs)) return;
        c.kind = ConstraintKind::NoOverflow;
        c.expr = sym_fits(*a, s.lhs->prim, shadow(*s.lhs), shadow(*s.rhs), !s.aborted);
        c.expected = !s.aborted;
    } else if (op == Opcode::Cast) {
        if (!symbolic(s.lhs)) return;
        c.kind = ConstraintKind::CastInRange;
        c.expr = sym_cast_fits(s.ins->type.prim(), s.lhs->sym, !s.aborted);
        c.expected = !s.aborted;
    } else if (op == Opcode::VecBorrow) {
        if (!symbolic(s.lhs)) return;
        c.kind = ConstraintKind::VecIndexInBounds;
        c.expr = sym_cmp(SymOp::Lt, s.lhs->sym, shadow(*s.rhs), !s.aborted);
        c.expected = !s.aborted;
    } else {
        return;
    }
    if (!s.aborted) {
        if (constraints.size() >= kMaxConstraints) return;
        if (++per_site_[{c.function, c.pc, c.call_index, c.expected}] > kMaxConstraintsPerSite) return;
    }
    constraints.push_back(std::move(c));
}

Collected collect_constraints(const Transaction& txn, const Program& program, const WorldState& state,
                              std::uint64_t gas_limit, std::vector<ExecObserver*> extra) {
    ConstraintCollector collector;
    ExecOptions opts;
    opts.gas_limit = gas_limit;
    opts.symbolic = true;
    opts.observers.push_back(&collector);
    for (auto* o : extra) opts.observers.push_back(o);
    Collected out;
    out.result = execute(txn, program, state, opts);
    out.path.inputs = out.result.inputs;
    out.path.constraints = std::move(collector.constraints);
    const auto values = out.path.current_values();
    for (const auto& c : out.path.constraints)
        if (!c.holds(values))
            throw TraceDivergence(std::string("constraint ") + constraint_kind_name(c.kind) + " at " +
                                  program.function(c.function).qualified + "@" + std::to_string(c.pc) +
                                  " does not hold on the concrete run: " + sym_to_string(*c.expr));
    return out;
}

// ---- solver ---------------------------------------------------------------

namespace {

using Wide = boost::multiprecision::cpp_int;

/// Unbounded evaluation: no wrap-around, used where monotonicity matters.
class ExactEval {
public:
    explicit ExactEval(const std::vector<U256>& inputs) : in_(inputs) {}

    Wide eval(const SymExpr& e) {
        if (e.op == SymOp::Input) return Wide(e.var < in_.size() ? in_[e.var] : e.value);
        if (e.op == SymOp::Const || !e.has_input) return Wide(e.value);
        auto it = memo_.find(&e);
        if (it != memo_.end()) return it->second;
        Wide v = compute(e);
        memo_.emplace(&e, v);
        return v;
    }

private:
    static bool fits(const Wide& v, Prim p) { return v >= 0 && v <= Wide(prim_max(p)); }

    Wide compute(const SymExpr& e) {
        switch (e.op) {
        case SymOp::Add: return eval(*e.a) + eval(*e.b);
        case SymOp::Sub: return eval(*e.a) - eval(*e.b);
        case SymOp::Mul: return eval(*e.a) * eval(*e.b);
        case SymOp::Div: {
            Wide b = eval(*e.b);
            return b == 0 ? Wide(0) : eval(*e.a) / b;
        }
        case SymOp::Mod: {
            Wide b = eval(*e.b);
            return b == 0 ? Wide(0) : eval(*e.a) % b;
        }
        case SymOp::Shl: {
            Wide b = eval(*e.b);
            return b >= 512 ? Wide(0) : eval(*e.a) << static_cast<unsigned>(b);
        }
        case SymOp::Shr: {
            Wide b = eval(*e.b);
            return b >= 512 ? Wide(0) : eval(*e.a) >> static_cast<unsigned>(b);
        }
        case SymOp::And: return eval(*e.a) & eval(*e.b);
        case SymOp::Or: return eval(*e.a) | eval(*e.b);
        case SymOp::Xor: return eval(*e.a) ^ eval(*e.b);
        case SymOp::Cast: return eval(*e.a);
        case SymOp::Eq: return eval(*e.a) == eval(*e.b) ? 1 : 0;
        case SymOp::Neq: return eval(*e.a) != eval(*e.b) ? 1 : 0;
        case SymOp::Lt: return eval(*e.a) < eval(*e.b) ? 1 : 0;
        case SymOp::Le: return eval(*e.a) <= eval(*e.b) ? 1 : 0;
        case SymOp::Gt: return eval(*e.a) > eval(*e.b) ? 1 : 0;
        case SymOp::Ge: return eval(*e.a) >= eval(*e.b) ? 1 : 0;
        case SymOp::Not: return eval(*e.a) == 0 ? 1 : 0;
        case SymOp::Fits: {
            Wide a = eval(*e.a);
            Wide b = eval(*e.b);
            const Prim p = e.cast_to;
            switch (e.fits_op) {
            case SymOp::Add: return fits(a + b, p) ? 1 : 0;
            case SymOp::Sub: return a >= b ? 1 : 0;
            case SymOp::Mul: return fits(a * b, p) ? 1 : 0;
            case SymOp::Div:
            case SymOp::Mod: return b != 0 ? 1 : 0;
            default: return b < prim_bits(p) ? 1 : 0;
            }
        }
        case SymOp::CastFits: return fits(eval(*e.a), e.cast_to) ? 1 : 0;
        default: return Wide(e.value);
        }
    }

    const std::vector<U256>& in_;
    std::unordered_map<const SymExpr*, Wide> memo_;
};

enum class Mono : std::uint8_t { Const, Inc, Dec, Unknown };

Mono negate(Mono m) {
    if (m == Mono::Inc) return Mono::Dec;
    if (m == Mono::Dec) return Mono::Inc;
    return m;
}

Mono combine(Mono a, Mono b) {
    if (a == Mono::Const) return b;
    if (b == Mono::Const) return a;
    if (a == b) return a;
    return Mono::Unknown;
}

/// Monotonicity of an integer expression in variable `x` under exact semantics.
Mono mono(const SymExpr& e, std::uint32_t x) {
    if (!e.has_input) return Mono::Const;
    switch (e.op) {
    case SymOp::Input: return e.var == x ? Mono::Inc : Mono::Unknown;
    case SymOp::Const: return Mono::Const;
    case SymOp::Add:
    case SymOp::Mul: return combine(mono(*e.a, x), mono(*e.b, x));
    case SymOp::Sub: return combine(mono(*e.a, x), negate(mono(*e.b, x)));
    case SymOp::Div: {
        const Mono b = mono(*e.b, x);
        return combine(mono(*e.a, x), negate(b));
    }
    case SymOp::Shr: return mono(*e.b, x) == Mono::Const ? mono(*e.a, x) : Mono::Unknown;
    case SymOp::Cast: return mono(*e.a, x);
    default: return Mono::Unknown;
    }
}

struct Interval {
    U256 lo = 0;
    U256 hi = 0;
    bool empty = false;
};

SymOp negate_cmp(SymOp op) {
    switch (op) {
    case SymOp::Eq: return SymOp::Neq;
    case SymOp::Neq: return SymOp::Eq;
    case SymOp::Lt: return SymOp::Ge;
    case SymOp::Le: return SymOp::Gt;
    case SymOp::Gt: return SymOp::Le;
    case SymOp::Ge: return SymOp::Lt;
    default: return op;
    }
}

SymOp mirror_cmp(SymOp op) {
    switch (op) {
    case SymOp::Lt: return SymOp::Gt;
    case SymOp::Le: return SymOp::Ge;
    case SymOp::Gt: return SymOp::Lt;
    case SymOp::Ge: return SymOp::Le;
    default: return op;
    }
}

bool is_cmp(SymOp op) {
    return op == SymOp::Eq || op == SymOp::Neq || op == SymOp::Lt || op == SymOp::Le || op == SymOp::Gt ||
           op == SymOp::Ge;
}

/// Peels Not nodes, toggling the wanted truth value.
const SymExpr& peel(const SymExpr& e, bool& want) {
    const SymExpr* cur = &e;
    while (cur->op == SymOp::Not) {
        want = !want;
        cur = cur->a.get();
    }
    return *cur;
}

std::vector<std::uint32_t> vars_of(const SymExpr& e) {
    std::vector<std::uint32_t> v;
    sym_vars(e, v);
    return v;
}

class Problem {
public:
    Problem(const std::vector<Constraint>& cs, const std::vector<InputVar>& inputs) : cs_(cs), inputs_(inputs) {
        cur_.reserve(inputs.size());
        for (const auto& v : inputs) cur_.push_back(v.value);
        for (const auto& c : cs) {
            for (auto v : vars_of(*c.expr))
                if (std::find(vars_.begin(), vars_.end(), v) == vars_.end()) vars_.push_back(v);
        }
        std::sort(vars_.begin(), vars_.end());
        for (auto v : vars_) {
            if (v >= inputs.size()) throw BindingMiss("constraint mentions unknown variable x" + std::to_string(v));
            box_[v] = {0, prim_max(inputs[v].prim), false};
        }
    }

    const std::vector<std::uint32_t>& vars() const { return vars_; }
    std::vector<U256>& cur() { return cur_; }

    bool all_hold(const std::vector<U256>& vals) const {
        for (const auto& c : cs_)
            if (!c.holds(vals)) return false;
        return true;
    }

    SolveResult sat() const {
        SolveResult r;
        r.status = SolveStatus::Sat;
        for (auto v : vars_) r.assignment.values[v] = cur_[v];
        return r;
    }

    Prim prim(std::uint32_t v) const { return inputs_[v].prim; }

    // -- stage 1 ------------------------------------------------------------

    /// Tries to make one constraint true by moving a single variable.
    bool repair(const Constraint& c) {
        bool want = c.expected;
        const SymExpr& e = peel(*c.expr, want);
        if (e.op == SymOp::Input) {
            cur_[e.var] = want ? 1 : 0;
            return c.holds(cur_);
        }
        if (!is_cmp(e.op)) return single_var_narrow(c);
        SymOp op = want ? e.op : negate_cmp(e.op);
        if (op == SymOp::Eq) {
            for (int side = 0; side < 2; ++side) {
                const SymExpr& s = side == 0 ? *e.a : *e.b;
                const SymExpr& o = side == 0 ? *e.b : *e.a;
                auto sv = vars_of(s);
                if (sv.size() != 1) continue;
                const auto ov = vars_of(o);
                if (std::find(ov.begin(), ov.end(), sv[0]) != ov.end()) continue;
                const U256 target = sym_eval(o, cur_);
                const U256 saved = cur_[sv[0]];
                if (invert(s, sv[0], target) || search_equal(s, sv[0], target)) {
                    if (c.holds(cur_)) return true;
                }
                cur_[sv[0]] = saved;
            }
        }
        return single_var_narrow(c);
    }

    bool invert(const SymExpr& s, std::uint32_t x, const U256& target) {
        if (target > prim_max(s.prim)) return false;
        switch (s.op) {
        case SymOp::Input:
            if (s.var != x || target > prim_max(prim(x))) return false;
            cur_[x] = target;
            return true;
        case SymOp::Cast: return invert(*s.a, x, target);
        case SymOp::Add:
        case SymOp::Sub:
        case SymOp::Xor:
        case SymOp::Mul: {
            const bool left = has_var(*s.a, x);
            if (left == has_var(*s.b, x)) return false;
            const SymExpr& inner = left ? *s.a : *s.b;
            const U256 k = sym_eval(left ? *s.b : *s.a, cur_);
            const Wide mod = Wide(1) << prim_bits(s.prim);
            Wide t = Wide(target);
            Wide next;
            switch (s.op) {
            case SymOp::Add: next = ((t - Wide(k)) % mod + mod) % mod; break;
            case SymOp::Sub: next = left ? (t + Wide(k)) % mod : ((Wide(k) - t) % mod + mod) % mod; break;
            case SymOp::Xor: next = t ^ Wide(k); break;
            default:
                if (k == 0 || t % Wide(k) != 0) return false;
                next = t / Wide(k);
                break;
            }
            return invert(inner, x, U256(next));
        }
        default: return false;
        }
    }

    /// Binary search for s(x) == target when s is monotone in x.
    bool search_equal(const SymExpr& s, std::uint32_t x, const U256& target) {
        const Mono m = mono(s, x);
        if (m != Mono::Inc && m != Mono::Dec) return false;
        const Interval& iv = box_[x];
        auto f = [&](const U256& v) {
            cur_[x] = v;
            Wide r = ExactEval(cur_).eval(s);
            return m == Mono::Inc ? r : -r;
        };
        const Wide t = m == Mono::Inc ? Wide(target) : -Wide(target);
        U256 lo = iv.lo, hi = iv.hi;
        if (f(hi) < t || f(lo) > t) return false;
        while (lo < hi) {
            U256 mid = lo + (hi - lo) / 2;
            if (f(mid) < t) lo = mid + 1;
            else hi = mid;
        }
        cur_[x] = lo;
        return f(lo) == t;
    }

    bool has_var(const SymExpr& e, std::uint32_t x) const {
        auto v = vars_of(e);
        return std::find(v.begin(), v.end(), x) != v.end();
    }

    /// Single-variable constraint: move x into the satisfying interval, as close as possible to its current value.
    bool single_var_narrow(const Constraint& c) {
        auto v = vars_of(*c.expr);
        if (v.size() != 1) return false;
        Interval iv = box_[v[0]];
        if (!narrow_single(c, v[0], iv) || iv.empty) return false;
        U256& x = cur_[v[0]];
        if (x < iv.lo) x = iv.lo;
        if (x > iv.hi) x = iv.hi;
        return c.holds(cur_);
    }

    // -- stage 2 ------------------------------------------------------------

    enum class Shape : std::uint8_t { Prefix, Suffix, Middle, None };

    /// Narrows `iv` for a constraint whose only variable is x. Returns false if it could not reason about it.
    bool narrow_single(const Constraint& c, std::uint32_t x, Interval& iv) {
        bool want = c.expected;
        const SymExpr& e = peel(*c.expr, want);
        std::vector<U256> vals = cur_;
        auto holds = [&](const U256& v) {
            vals[x] = v;
            return (ExactEval(vals).eval(e) != 0) == want;
        };
        if (e.op == SymOp::Input) {
            const U256 need = want ? 1 : 0;
            if (need < iv.lo || need > iv.hi) iv.empty = true;
            else iv.lo = iv.hi = need;
            return true;
        }
        Shape shape = Shape::None;
        const SymExpr* diff_l = nullptr;
        const SymExpr* diff_r = nullptr;
        Mono dm = Mono::Unknown;
        if (is_cmp(e.op)) {
            const SymOp op = want ? e.op : negate_cmp(e.op);
            dm = combine(mono(*e.a, x), negate(mono(*e.b, x)));
            if (dm != Mono::Inc && dm != Mono::Dec) return false;
            diff_l = e.a.get();
            diff_r = e.b.get();
            const bool inc = dm == Mono::Inc;
            switch (op) {
            case SymOp::Lt:
            case SymOp::Le: shape = inc ? Shape::Prefix : Shape::Suffix; break;
            case SymOp::Gt:
            case SymOp::Ge: shape = inc ? Shape::Suffix : Shape::Prefix; break;
            case SymOp::Eq: shape = want ? Shape::Middle : Shape::None; break;
            default: return false;
            }
        } else if (e.op == SymOp::Fits) {
            Mono m = Mono::Unknown;
            bool upper = true;
            switch (e.fits_op) {
            case SymOp::Add:
            case SymOp::Mul: m = combine(mono(*e.a, x), mono(*e.b, x)); break;
            case SymOp::Sub:
                m = combine(mono(*e.a, x), negate(mono(*e.b, x)));
                upper = false;
                break;
            case SymOp::Div:
            case SymOp::Mod:
                m = mono(*e.b, x);
                upper = false;
                break;
            default: m = mono(*e.b, x); break;
            }
            if (m != Mono::Inc && m != Mono::Dec) return false;
            const bool prefix = (m == Mono::Inc) == upper;
            shape = (prefix == want) ? Shape::Prefix : Shape::Suffix;
        } else if (e.op == SymOp::CastFits) {
            const Mono m = mono(*e.a, x);
            if (m != Mono::Inc && m != Mono::Dec) return false;
            const bool prefix = m == Mono::Inc;
            shape = (prefix == want) ? Shape::Prefix : Shape::Suffix;
        } else {
            return false;
        }
        if (iv.empty) return true;
        switch (shape) {
        case Shape::Prefix: {
            if (!holds(iv.lo)) {
                iv.empty = true;
                return true;
            }
            if (holds(iv.hi)) return true;
            U256 lo = iv.lo, hi = iv.hi;
            while (lo < hi) {
                U256 mid = lo + (hi - lo + 1) / 2;
                if (holds(mid)) lo = mid;
                else hi = mid - 1;
            }
            iv.hi = lo;
            return true;
        }
        case Shape::Suffix: {
            if (!holds(iv.hi)) {
                iv.empty = true;
                return true;
            }
            if (holds(iv.lo)) return true;
            U256 lo = iv.lo, hi = iv.hi;
            while (lo < hi) {
                U256 mid = lo + (hi - lo) / 2;
                if (holds(mid)) hi = mid;
                else lo = mid + 1;
            }
            iv.lo = lo;
            return true;
        }
        case Shape::Middle: {
            auto d = [&](const U256& v) {
                vals[x] = v;
                ExactEval ev(vals);
                Wide r = ev.eval(*diff_l) - ev.eval(*diff_r);
                return dm == Mono::Inc ? r : -r;
            };
            U256 lo = iv.lo, hi = iv.hi;
            if (d(hi) < 0 || d(lo) > 0) {
                iv.empty = true;
                return true;
            }
            while (lo < hi) {
                U256 mid = lo + (hi - lo) / 2;
                if (d(mid) < 0) lo = mid + 1;
                else hi = mid;
            }
            if (d(lo) != 0) {
                iv.empty = true;
                return true;
            }
            const U256 first = lo;
            hi = iv.hi;
            while (lo < hi) {
                U256 mid = lo + (hi - lo + 1) / 2;
                if (d(mid) <= 0) lo = mid;
                else hi = mid - 1;
            }
            iv.lo = first;
            iv.hi = lo;
            return true;
        }
        case Shape::None: return false;
        }
        return false;
    }

    /// Range of a monotone single-variable (or constant) expression over the current box.
    std::optional<std::pair<Wide, Wide>> side_range(const SymExpr& s) {
        auto v = vars_of(s);
        std::vector<U256> vals = cur_;
        if (v.empty()) {
            Wide k = ExactEval(vals).eval(s);
            return std::make_pair(k, k);
        }
        if (v.size() != 1) return std::nullopt;
        const Mono m = mono(s, v[0]);
        if (m != Mono::Inc && m != Mono::Dec) return std::nullopt;
        const Interval& iv = box_[v[0]];
        vals[v[0]] = iv.lo;
        Wide a = ExactEval(vals).eval(s);
        vals[v[0]] = iv.hi;
        Wide b = ExactEval(vals).eval(s);
        if (a > b) std::swap(a, b);
        return std::make_pair(a, b);
    }

    /// Narrows the variable of `s` so that s(v) lies in [lo, hi].
    bool restrict_side(const SymExpr& s, const Wide& lo, const Wide& hi) {
        auto v = vars_of(s);
        if (v.size() != 1) return false;
        const std::uint32_t x = v[0];
        const Mono m = mono(s, x);
        if (m != Mono::Inc && m != Mono::Dec) return false;
        Interval& iv = box_[x];
        if (iv.empty) return false;
        std::vector<U256> vals = cur_;
        auto f = [&](const U256& val) {
            vals[x] = val;
            Wide r = ExactEval(vals).eval(s);
            return m == Mono::Inc ? r : -r;
        };
        const Wide flo = m == Mono::Inc ? lo : -hi;
        const Wide fhi = m == Mono::Inc ? hi : -lo;
        U256 a = iv.lo, b = iv.hi;
        if (f(b) < flo || f(a) > fhi) {
            iv.empty = true;
            return true;
        }
        while (a < b) {
            U256 mid = a + (b - a) / 2;
            if (f(mid) < flo) a = mid + 1;
            else b = mid;
        }
        const U256 first = a;
        b = iv.hi;
        while (a < b) {
            U256 mid = a + (b - a + 1) / 2;
            if (f(mid) <= fhi) a = mid;
            else b = mid - 1;
        }
        if (first > a) {
            iv.empty = true;
            return true;
        }
        const bool changed = first != iv.lo || a != iv.hi;
        iv.lo = first;
        iv.hi = a;
        return changed;
    }

    /// Two-variable comparisons between monotone sides.
    bool narrow_pair(const Constraint& c) {
        bool want = c.expected;
        const SymExpr& e = peel(*c.expr, want);
        if (!is_cmp(e.op)) return false;
        const SymOp op = want ? e.op : negate_cmp(e.op);
        if (op == SymOp::Neq) return false;
        auto lr = side_range(*e.a);
        auto rr = side_range(*e.b);
        if (!lr || !rr) return false;
        const Wide inf = Wide(1) << 300;
        bool changed = false;
        auto apply = [&](const SymExpr& side, SymOp rel, const std::pair<Wide, Wide>& other) {
            Wide lo = -inf, hi = inf;
            switch (rel) {
            case SymOp::Eq: lo = other.first; hi = other.second; break;
            case SymOp::Lt: hi = other.second - 1; break;
            case SymOp::Le: hi = other.second; break;
            case SymOp::Gt: lo = other.first + 1; break;
            case SymOp::Ge: lo = other.first; break;
            default: return;
            }
            changed |= restrict_side(side, lo, hi);
        };
        apply(*e.a, op, *rr);
        apply(*e.b, mirror_cmp(op), *lr);
        return changed;
    }

    /// Returns false when some domain became empty.
    bool propagate() {
        for (int round = 0; round < 16; ++round) {
            bool changed = false;
            for (const auto& c : cs_) {
                auto v = vars_of(*c.expr);
                if (v.size() == 1) {
                    Interval iv = box_[v[0]];
                    if (narrow_single(c, v[0], iv)) {
                        Interval& cur = box_[v[0]];
                        if (iv.empty || iv.lo != cur.lo || iv.hi != cur.hi) changed = true;
                        cur = iv;
                    }
                } else if (v.size() == 2) {
                    changed |= narrow_pair(c);
                }
                for (auto x : v)
                    if (box_[x].empty) return false;
            }
            if (!changed) break;
        }
        for (auto x : vars_)
            if (cur_[x] < box_[x].lo || cur_[x] > box_[x].hi) cur_[x] = box_[x].lo;
        return true;
    }

    // -- stage 3 ------------------------------------------------------------

    U256 sample(std::uint32_t x, Rng& rng, bool boundary_bias) {
        const Interval& iv = box_[x];
        const U256 span = iv.hi - iv.lo;
        if (boundary_bias) {
            switch (rng.below(8)) {
            case 0: return iv.lo;
            case 1: return iv.hi;
            case 2: return span >= 1 ? iv.lo + 1 : iv.lo;
            case 3: return span >= 1 ? iv.hi - 1 : iv.hi;
            case 4: return cur_[x];
            default: break;
            }
        }
        if (span == prim_max(Prim::U256)) return rng.bits(256);
        const U256 r = rng.bits(256) % (span + 1);
        if (boundary_bias && rng.chance(0.3)) {
            const unsigned k = static_cast<unsigned>(rng.below(prim_bits(prim(x)) + 1));
            const U256 p = k >= 256 ? prim_max(Prim::U256) : (U256(1) << k);
            const U256 off = p % (span + 1);
            return iv.lo + off;
        }
        return iv.lo + r;
    }

    const std::vector<Constraint>& cs_;
    const std::vector<InputVar>& inputs_;
    std::vector<U256> cur_;
    std::vector<std::uint32_t> vars_;
    std::map<std::uint32_t, Interval> box_;
};

SolveResult no_vars(const std::vector<Constraint>& cs, const std::vector<InputVar>& inputs) {
    std::vector<U256> vals;
    for (const auto& v : inputs) vals.push_back(v.value);
    for (const auto& c : cs)
        if (!c.holds(vals)) return {SolveStatus::Unsat, {}};
    return {SolveStatus::Sat, {}};
}

}  // namespace

SolveResult ReferenceSolver::solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                                   std::uint64_t budget, Rng& rng) {
    Problem p(constraints, inputs);
    if (p.vars().empty()) return no_vars(constraints, inputs);
    if (p.all_hold(p.cur())) return p.sat();

    for (int pass = 0; pass < 3; ++pass) {
        bool any = false;
        for (const auto& c : constraints)
            if (!c.holds(p.cur())) any |= p.repair(c);
        if (p.all_hold(p.cur())) return p.sat();
        if (!any) break;
    }

    if (!p.propagate()) return {SolveStatus::Unsat, {}};
    if (p.all_hold(p.cur())) return p.sat();

    const std::vector<U256> base = p.cur();
    for (std::uint64_t trial = 0; trial < budget; ++trial) {
        for (auto x : p.vars()) p.cur()[x] = p.sample(x, rng, true);
        for (const auto& c : constraints)
            if (!c.holds(p.cur())) p.repair(c);
        if (p.all_hold(p.cur())) return p.sat();
    }
    p.cur() = base;
    return {SolveStatus::Unknown, {}};
}

SolveResult RandomSolver::solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                                std::uint64_t budget, Rng& rng) {
    Problem p(constraints, inputs);
    if (p.vars().empty()) return no_vars(constraints, inputs);
    for (std::uint64_t trial = 0; trial <= budget; ++trial) {
        if (p.all_hold(p.cur())) return p.sat();
        for (auto x : p.vars()) p.cur()[x] = p.sample(x, rng, false);
    }
    return {SolveStatus::Unknown, {}};
}

std::unique_ptr<Solver> make_solver(const std::string& name) {
    if (name == "reference") return std::make_unique<ReferenceSolver>();
    if (name == "random") return std::make_unique<RandomSolver>();
    throw std::invalid_argument("unknown solver '" + name + "' (expected reference or random)");
}

SolveResult solve(const std::vector<Constraint>& constraints, const std::vector<InputVar>& inputs,
                  std::uint64_t budget, std::uint64_t seed) {
    Rng rng(seed);
    ReferenceSolver s;
    return s.solve(constraints, inputs, budget, rng);
}

// ---- flipping -------------------------------------------------------------

std::vector<std::size_t> flip_candidates(const PathCondition& pc) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < pc.constraints.size(); ++i)
        if (pc.constraints[i].kind == ConstraintKind::BranchCond) out.push_back(i);
    if (!pc.constraints.empty()) {
        const auto& last = pc.constraints.back();
        if (last.kind != ConstraintKind::BranchCond && !last.expected) out.push_back(pc.constraints.size() - 1);
    }
    return out;
}

FlipResult flip_and_solve(const PathCondition& pc, Rng& rng, Solver& solver, std::uint64_t budget,
                          const CoverageMap* coverage, std::optional<std::vector<std::size_t>> targets) {
    FlipResult out;
    std::vector<std::size_t> chosen;
    if (targets) {
        chosen = *targets;
    } else {
        const auto all = flip_candidates(pc);
        if (all.empty()) {
            out.status = SolveStatus::Unsat;
            return out;
        }
        std::vector<std::size_t> fresh;
        for (auto i : all) {
            const auto& c = pc.constraints[i];
            if (c.kind != ConstraintKind::BranchCond || !coverage ||
                !coverage->contains(coverage_key(c.function, c.pc, !c.taken)))
                fresh.push_back(i);
        }
        const auto& pool = fresh.empty() ? all : fresh;
        const std::size_t n = std::min<std::size_t>(rng.chance(0.8) ? 1 : 2, pool.size());
        while (chosen.size() < n) {
            const auto i = rng.pick(pool);
            if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
        }
    }
    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen)
        if (i >= pc.constraints.size()) throw std::out_of_range("flip target out of range");
    out.flipped = chosen;
    const std::size_t earliest = chosen.front();
    for (std::size_t i = 0; i < earliest; ++i) out.submitted.push_back(pc.constraints[i]);
    for (auto i : chosen) {
        Constraint c = pc.constraints[i];
        c.expected = !c.expected;
        out.submitted.push_back(std::move(c));
    }
    SolveResult r = solver.solve(out.submitted, pc.inputs, budget, rng);
    if (r.status == SolveStatus::Sat) {
        std::vector<U256> vals = pc.current_values();
        for (const auto& [v, x] : r.assignment.values) vals.at(v) = x;
        for (const auto& c : out.submitted)
            if (!c.holds(vals)) {
                r.status = SolveStatus::Unknown;
                r.assignment = {};
                break;
            }
    }
    out.status = r.status;
    out.assignment = std::move(r.assignment);
    return out;
}

Transaction apply_assignment(const Transaction& txn, const std::vector<InputVar>& inputs, const Assignment& a) {
    Transaction out = txn;
    std::shared_ptr<GraphTrace> trace;
    if (txn.trace) trace = std::make_shared<GraphTrace>(*txn.trace);
    for (const auto& [var, value] : a.values) {
        if (var >= inputs.size()) throw BindingMiss("no input variable x" + std::to_string(var));
        const InputVar& iv = inputs[var];
        if (iv.call >= out.calls.size() || iv.arg >= out.calls[iv.call].args.size())
            throw BindingMiss("variable x" + std::to_string(var) + " does not name a transaction argument");
        ArgBinding& b = out.calls[iv.call].args[iv.arg];
        if ((b.kind != ArgBinding::Kind::Literal && b.kind != ArgBinding::Kind::LiteralVector) ||
            iv.element >= b.values.size())
            throw BindingMiss("variable x" + std::to_string(var) + " does not name a literal");
        if (value > prim_max(b.prim))
            throw std::invalid_argument("value for x" + std::to_string(var) + " does not fit " + prim_name(b.prim));
        b.values[iv.element] = value;
        if (trace && iv.call < trace->calls.size() && iv.arg < trace->calls[iv.call].inputs.size()) {
            auto& ti = trace->calls[iv.call].inputs[iv.arg];
            if (ti.kind == TraceInput::Kind::Literal && iv.element < ti.values.size()) ti.values[iv.element] = value;
        }
    }
    if (trace) out.trace = std::move(trace);
    return out;
}

std::string dump_constraints(const PathCondition& pc, const Program& program) {
    std::ostringstream out;
    for (const auto& c : pc.constraints)
        out << constraint_kind_name(c.kind) << ' ' << program.function(c.function).qualified << '@' << c.pc << ' '
            << (c.expected ? "true" : "false") << ' ' << sym_to_string(*c.expr) << '\n';
    return out.str();
}

}  // namespace tgfuzz
