#include "tgfuzz/synth.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>

namespace tgfuzz {

std::vector<TypeTag> substitution_candidates(const Program& program, const PoolView& pool) {
    std::vector<TypeTag> out;
    auto add = [&](const TypeTag& t) {
        if (t.is_concrete() && !program.is_hot_potato(t) && std::find(out.begin(), out.end(), t) == out.end())
            out.push_back(t);
    };
    for (const auto& [ref, decl] : program.datatypes())
        if (decl->type_params == 0 && !is_hot_potato(*decl)) add(TypeTag::datatype(ref));
    for (auto p : {Prim::Bool, Prim::U8, Prim::U16, Prim::U32, Prim::U64, Prim::U128, Prim::U256})
        add(TypeTag::primitive(p));
    std::function<void(const TypeTag&)> walk = [&](const TypeTag& t) {
        for (const auto& a : t.args()) {
            add(a);
            walk(a);
        }
    };
    for (const auto& obj : pool) walk(obj.type);
    return out;
}

SynthContext make_context(const TypeGraph& graph, PoolView pool, SynthLimits limits) {
    SynthContext ctx;
    ctx.graph = &graph;
    ctx.candidates = substitution_candidates(graph.program(), pool);
    ctx.pool = std::move(pool);
    ctx.limits = limits;
    return ctx;
}

namespace {

struct OutputRef {
    std::uint32_t call = 0;
    std::uint32_t output = 0;
};

struct Slot {
    FunctionId function = 0;
    std::uint32_t position = 0;
};

bool occurs(std::uint32_t var, const TypeTag& t) {
    if (t.is_parameter()) return t.param_index() == var;
    for (const auto& a : t.args())
        if (occurs(var, a)) return true;
    return false;
}

/// Incrementally grows a graph trace while keeping it closed: every input bound,
/// every hot-potato output consumed exactly once, pool objects moved at most once.
class TraceBuilder {
public:
    TraceBuilder(const SynthContext& ctx, Rng& rng, GraphTrace trace = {}) : ctx_(ctx), rng_(rng) {
        st_.trace = std::move(trace);
        for (std::uint32_t c = 0; c < st_.trace.calls.size(); ++c) {
            st_.consumed.emplace_back(fn(c).outputs.size(), false);
            st_.bound.emplace_back(fn(c).inputs.size(), true);
        }
        for (std::uint32_t c = 0; c < st_.trace.calls.size(); ++c) {
            const auto& call = st_.trace.calls[c];
            for (std::uint32_t i = 0; i < call.inputs.size(); ++i) {
                const auto& in = call.inputs[i];
                if (in.kind == TraceInput::Kind::Result) st_.consumed.at(in.call).at(in.output) = true;
                if (in.kind == TraceInput::Kind::Pool)
                    st_.pool_use[in.object] = fn(c).inputs[i].mode == RefMode::ByValue ? 2 : 1;
            }
        }
    }

    const GraphTrace& trace() const { return st_.trace; }
    GraphTrace take() { return std::move(st_.trace); }
    std::size_t size() const { return st_.trace.calls.size(); }

    struct State {
        GraphTrace trace;
        std::vector<std::vector<bool>> consumed;
        std::vector<std::vector<bool>> bound;
        std::map<ObjectId, int> pool_use;
        std::deque<std::pair<std::uint32_t, std::uint32_t>> pending;
    };
    State snapshot() const { return st_; }
    void restore(State s) { st_ = std::move(s); }

    std::uint32_t add_call(FunctionId f) {
        const FunctionDecl& decl = *ctx_.program().function(f).decl;
        TraceCall call;
        call.function = f;
        for (std::uint32_t i = 0; i < decl.type_params; ++i) call.type_args.push_back(TypeTag::parameter(st_.trace.fresh_var()));
        call.inputs.resize(decl.inputs.size());
        const auto idx = static_cast<std::uint32_t>(st_.trace.calls.size());
        st_.trace.calls.push_back(std::move(call));
        st_.consumed.emplace_back(decl.outputs.size(), false);
        st_.bound.emplace_back(decl.inputs.size(), false);
        for (std::uint32_t i = 0; i < decl.inputs.size(); ++i) st_.pending.emplace_back(idx, i);
        return idx;
    }

    TypeTag input_term(std::uint32_t c, std::uint32_t i) const {
        return st_.trace.resolve(substitute(fn(c).inputs[i].type, st_.trace.calls[c].type_args));
    }
    TypeTag output_term(std::uint32_t c, std::uint32_t o) const {
        return st_.trace.resolve(substitute(fn(c).outputs[o], st_.trace.calls[c].type_args));
    }
    const FunctionDecl& fn(std::uint32_t c) const { return *ctx_.program().function(st_.trace.calls[c].function).decl; }

    bool unify(const TypeTag& a, const TypeTag& b) {
        auto saved = st_.trace.vars;
        if (unify_rec(a, b)) return true;
        st_.trace.vars = std::move(saved);
        return false;
    }

    /// True when call `p` (transitively) consumes an output of call `c`.
    bool depends_on(std::uint32_t p, std::uint32_t c) const {
        if (p == c) return true;
        std::vector<std::uint32_t> stack{p};
        std::set<std::uint32_t> seen;
        while (!stack.empty()) {
            auto x = stack.back();
            stack.pop_back();
            if (!seen.insert(x).second) continue;
            const auto& call = st_.trace.calls[x];
            for (std::uint32_t i = 0; i < call.inputs.size(); ++i) {
                if (!st_.bound[x][i] || call.inputs[i].kind != TraceInput::Kind::Result) continue;
                if (call.inputs[i].call == c) return true;
                stack.push_back(call.inputs[i].call);
            }
        }
        return false;
    }

    bool bind_result(std::uint32_t c, std::uint32_t i, OutputRef src) {
        if (st_.consumed[src.call][src.output] || depends_on(src.call, c)) return false;
        if (!unify(input_term(c, i), output_term(src.call, src.output))) return false;
        auto& in = st_.trace.calls[c].inputs[i];
        in = TraceInput{};
        in.kind = TraceInput::Kind::Result;
        in.call = src.call;
        in.output = src.output;
        st_.bound[c][i] = true;
        st_.consumed[src.call][src.output] = true;
        return true;
    }

    std::vector<OutputRef> unconsumed(bool hot) const {
        std::vector<OutputRef> out;
        for (std::uint32_t c = 0; c < st_.trace.calls.size(); ++c)
            for (std::uint32_t o = 0; o < st_.consumed[c].size(); ++o)
                if (!st_.consumed[c][o] && ctx_.program().is_hot_potato(output_term(c, o)) == hot) out.push_back({c, o});
        return out;
    }

    /// Resolves pending obligations until the trace is closed.
    bool close() {
        while (true) {
            if (st_.trace.calls.size() > ctx_.limits.max_calls) return false;
            if (!st_.pending.empty()) {
                auto [c, i] = st_.pending.front();
                st_.pending.pop_front();
                if (st_.bound[c][i]) continue;
                if (!bind_input(c, i)) return false;
                continue;
            }
            auto hot = unconsumed(true);
            if (hot.empty()) return true;
            if (!consume_hot(hot.front())) return false;
        }
    }

    /// Functions (with position) having a by-value input that accepts the given type term.
    std::vector<Slot> consumer_slots(const TypeTag& t) const {
        std::vector<Slot> out;
        const auto& g = *ctx_.graph;
        auto node = g.type_node(canonical_pattern(t).first);
        if (!node) return out;
        for (std::size_t idx : g.edges_of(*node)) {
            const auto& e = g.edges()[idx];
            if (e.direction != EdgeDirection::Input || e.mode != RefMode::ByValue) continue;
            for (auto pos : e.positions) out.push_back({g.node(e.function_node).function, pos});
        }
        return out;
    }

    /// Functions (with position) having an output that may produce the given type term.
    std::vector<Slot> producer_slots(const TypeTag& t) const {
        std::vector<Slot> out;
        const auto& g = *ctx_.graph;
        std::vector<NodeId> nodes;
        if (!t.is_parameter())
            if (auto node = g.type_node(canonical_pattern(t).first)) nodes.push_back(*node);
        if (!ctx_.program().is_hot_potato(t))
            if (auto wildcard = g.type_node(TypeTag::parameter(0))) nodes.push_back(*wildcard);
        for (NodeId n : nodes)
            for (std::size_t idx : g.edges_of(n)) {
                const auto& e = g.edges()[idx];
                if (e.direction != EdgeDirection::Output) continue;
                for (auto pos : e.positions) out.push_back({g.node(e.function_node).function, pos});
            }
        return out;
    }

    bool attach_consumer(OutputRef o) {
        auto slots = consumer_slots(output_term(o.call, o.output));
        while (!slots.empty()) {
            const auto k = rng_.below(slots.size());
            const Slot s = slots[k];
            slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(k));
            auto saved = snapshot();
            const auto c = add_call(s.function);
            if (bind_result(c, s.position, o)) return true;
            restore(std::move(saved));
        }
        return false;
    }

    /// Chains calls along `path` starting from output `o`; each hop is (function, input position, output position).
    bool attach_path(OutputRef o, const std::vector<std::tuple<FunctionId, std::uint32_t, std::uint32_t>>& path) {
        OutputRef prev = o;
        for (const auto& [f, in_pos, out_pos] : path) {
            const auto c = add_call(f);
            if (!bind_result(c, in_pos, prev)) return false;
            prev = {c, out_pos};
        }
        return true;
    }

private:
    bool unify_rec(const TypeTag& a0, const TypeTag& b0) {
        const TypeTag a = st_.trace.resolve(a0);
        const TypeTag b = st_.trace.resolve(b0);
        if (a.is_parameter() && b.is_parameter() && a.param_index() == b.param_index()) return true;
        if (a.is_parameter()) {
            if (occurs(a.param_index(), b)) return false;
            st_.trace.vars[a.param_index()] = b;
            return true;
        }
        if (b.is_parameter()) return unify_rec(b, a);
        if (a.kind() != b.kind()) return false;
        if (a.is_primitive()) return a.prim() == b.prim();
        if (a.is_datatype() && a.datatype_ref() != b.datatype_ref()) return false;
        if (a.args().size() != b.args().size()) return false;
        for (std::size_t i = 0; i < a.args().size(); ++i)
            if (!unify_rec(a.args()[i], b.args()[i])) return false;
        return true;
    }

    void bind_literal(std::uint32_t c, std::uint32_t i) {
        st_.trace.calls[c].inputs[i] = TraceInput{};
        st_.bound[c][i] = true;
    }

    bool bind_pool(std::uint32_t c, std::uint32_t i, const PoolObjectInfo& obj) {
        if (!unify(input_term(c, i), obj.type)) return false;
        auto& in = st_.trace.calls[c].inputs[i];
        in = TraceInput{};
        in.kind = TraceInput::Kind::Pool;
        in.object = obj.id;
        st_.bound[c][i] = true;
        st_.pool_use[obj.id] = fn(c).inputs[i].mode == RefMode::ByValue ? 2 : 1;
        return true;
    }

    bool unifies(const TypeTag& a, const TypeTag& b) {
        auto saved = st_.trace.vars;
        const bool ok = unify_rec(a, b);
        st_.trace.vars = std::move(saved);
        return ok;
    }

    std::vector<const PoolObjectInfo*> pool_options(std::uint32_t c, std::uint32_t i) {
        const RefMode mode = fn(c).inputs[i].mode;
        const TypeTag t = input_term(c, i);
        std::vector<const PoolObjectInfo*> out;
        for (const auto& obj : ctx_.pool) {
            auto it = st_.pool_use.find(obj.id);
            const int use = it == st_.pool_use.end() ? 0 : it->second;
            if (mode == RefMode::ByValue) {
                if (obj.ownership != Ownership::SenderOwned || use != 0) continue;
            } else if (use == 2) {
                continue;
            }
            if (unifies(t, obj.type)) out.push_back(&obj);
        }
        return out;
    }

    std::vector<OutputRef> result_options(std::uint32_t c, std::uint32_t i) {
        const TypeTag t = input_term(c, i);
        std::vector<OutputRef> out;
        for (std::uint32_t p = 0; p < st_.trace.calls.size(); ++p) {
            if (depends_on(p, c)) continue;
            for (std::uint32_t o = 0; o < st_.consumed[p].size(); ++o)
                if (!st_.consumed[p][o] && unifies(t, output_term(p, o))) out.push_back({p, o});
        }
        return out;
    }

    bool bind_producer(std::uint32_t c, std::uint32_t i) {
        auto slots = producer_slots(input_term(c, i));
        for (int tries = 0; tries < 4 && !slots.empty(); ++tries) {
            const auto k = rng_.below(slots.size());
            const Slot s = slots[k];
            slots.erase(slots.begin() + static_cast<std::ptrdiff_t>(k));
            auto saved = snapshot();
            const auto p = add_call(s.function);
            if (bind_result(c, i, {p, s.position})) return true;
            restore(std::move(saved));
        }
        return false;
    }

    bool bind_input(std::uint32_t c, std::uint32_t i) {
        const Param& param = fn(c).inputs[i];
        const TypeTag t = input_term(c, i);
        if (param.mode != RefMode::ByValue) {
            auto objs = pool_options(c, i);
            if (objs.empty()) return false;
            return bind_pool(c, i, *rng_.pick(objs));
        }
        if (t.is_primitive() || t.is_primitive_vector() || (t.is_vector() && t.element().is_parameter())) {
            bind_literal(c, i);
            return true;
        }
        const bool hot = ctx_.program().is_hot_potato(t);
        auto results = result_options(c, i);
        if (hot) {
            if (!results.empty() && (rng_.chance(0.9) || producer_slots(t).empty()))
                return bind_result(c, i, rng_.pick(results));
            return bind_producer(c, i);
        }
        auto objs = pool_options(c, i);
        const bool bare = t.is_parameter();
        std::vector<double> weights{results.empty() ? 0.0 : 0.45, objs.empty() ? 0.0 : 0.35,
                                    bare ? 0.2 : (producer_slots(t).empty() ? 0.0 : 0.2)};
        switch (rng_.weighted(weights)) {
        case 0: return bind_result(c, i, rng_.pick(results));
        case 1: return bind_pool(c, i, *rng_.pick(objs));
        case 2:
            if (bare) {
                bind_literal(c, i);
                return true;
            }
            return bind_producer(c, i);
        default: return false;
        }
    }

    bool consume_hot(OutputRef o) {
        const TypeTag t = output_term(o.call, o.output);
        // An already-present unbound input may take the value.
        std::vector<std::pair<std::uint32_t, std::uint32_t>> waiting;
        for (const auto& [c, i] : st_.pending)
            if (!st_.bound[c][i] && fn(c).inputs[i].mode == RefMode::ByValue && !depends_on(o.call, c) &&
                unifies(input_term(c, i), t))
                waiting.emplace_back(c, i);
        if (!waiting.empty() && rng_.chance(0.7)) {
            auto [c, i] = rng_.pick(waiting);
            return bind_result(c, i, o);
        }
        return attach_consumer(o);
    }

    const SynthContext& ctx_;
    Rng& rng_;
    State st_;
};

using Path = std::vector<std::tuple<FunctionId, std::uint32_t, std::uint32_t>>;

/// Shortest random path (at most `max_hops` functions) from a type node to function node `target`.
std::optional<Path> find_path(const TypeGraph& g, NodeId from, NodeId target, std::size_t max_hops, Rng& rng) {
    struct Parent {
        NodeId node;
        std::uint32_t in_pos;
        std::uint32_t out_pos;
        NodeId prev_type;
    };
    // BFS over type nodes; each step passes through one function node.
    std::map<NodeId, std::optional<Parent>> seen{{from, std::nullopt}};
    std::vector<NodeId> frontier{from};
    for (std::size_t hop = 0; hop < max_hops && !frontier.empty(); ++hop) {
        std::vector<NodeId> next;
        for (NodeId tn : frontier) {
            std::vector<std::size_t> edges = g.edges_of(tn);
            for (std::size_t k = edges.size(); k > 1; --k) std::swap(edges[k - 1], edges[rng.below(k)]);
            for (std::size_t idx : edges) {
                const auto& e = g.edges()[idx];
                if (e.direction != EdgeDirection::Input || e.mode != RefMode::ByValue) continue;
                const auto in_pos = e.positions[rng.below(e.positions.size())];
                if (e.function_node == target) {
                    Path path{{g.node(target).function, in_pos, 0}};
                    NodeId cur = tn;
                    while (seen[cur]) {
                        const Parent p = *seen[cur];
                        path.insert(path.begin(), {g.node(p.node).function, p.in_pos, p.out_pos});
                        cur = p.prev_type;
                    }
                    return path;
                }
                for (std::size_t oidx : g.edges_of(e.function_node)) {
                    const auto& oe = g.edges()[oidx];
                    if (oe.direction != EdgeDirection::Output || seen.count(oe.type_node)) continue;
                    seen[oe.type_node] = Parent{e.function_node, in_pos, oe.positions.front(), tn};
                    next.push_back(oe.type_node);
                }
            }
        }
        frontier = std::move(next);
    }
    return std::nullopt;
}

bool literal_ok(const TypeTag& t) { return t.is_primitive() || t.is_primitive_vector(); }

GraphTrace seed_trace(const Transaction& seed) { return seed.trace ? *seed.trace : trace_of(seed); }

Transaction finish(GraphTrace trace, const SynthContext& ctx, Rng& rng) {
    trace = substitute_trace_types(std::move(trace), ctx, rng);
    return instantiate(std::move(trace), ctx, rng);
}

}  // namespace

GraphTrace construct_trace(const SynthContext& ctx, NodeId start, Rng& rng) {
    const auto& node = ctx.graph->node(start);
    if (node.kind != NodeKind::Function) throw Exhausted("start node is not a function");
    for (std::size_t attempt = 0; attempt < ctx.limits.max_attempts; ++attempt) {
        TraceBuilder b(ctx, rng);
        b.add_call(node.function);
        if (!b.close()) continue;
        while (b.size() < ctx.limits.max_calls && rng.chance(ctx.limits.extend_probability)) {
            auto open = b.unconsumed(false);
            if (open.empty()) break;
            auto saved = b.snapshot();
            if (!b.attach_consumer(rng.pick(open)) || !b.close()) {
                b.restore(std::move(saved));
                break;
            }
        }
        return b.take();
    }
    throw Exhausted("no closed trace from " + node.label + " within " + std::to_string(ctx.limits.max_calls) +
                    " calls");
}

GraphTrace substitute_trace_types(GraphTrace trace, const SynthContext& ctx, Rng& rng) {
    const Program& program = ctx.program();
    std::vector<std::uint32_t> free;
    std::set<std::uint32_t> needs_prim;
    std::function<void(const TypeTag&)> collect = [&](const TypeTag& t) {
        if (t.is_parameter()) {
            if (std::find(free.begin(), free.end(), t.param_index()) == free.end()) free.push_back(t.param_index());
            return;
        }
        for (const auto& a : t.args()) collect(a);
    };
    for (const auto& call : trace.calls)
        for (const auto& t : call.type_args) collect(trace.resolve(t));
    for (const auto& call : trace.calls) {
        const FunctionDecl& fn = *program.function(call.function).decl;
        for (std::size_t i = 0; i < call.inputs.size(); ++i) {
            if (call.inputs[i].kind != TraceInput::Kind::Literal) continue;
            const TypeTag t = trace.resolve(substitute(fn.inputs[i].type, call.type_args));
            if (t.is_parameter()) needs_prim.insert(t.param_index());
            else if (t.is_vector() && t.element().is_parameter()) needs_prim.insert(t.element().param_index());
        }
    }
    if (free.empty()) return trace;
    std::vector<TypeTag> prims;
    for (const auto& c : ctx.candidates)
        if (c.is_primitive()) prims.push_back(c);
    if (ctx.candidates.empty()) throw NoAssignment("no candidate types");

    for (std::size_t trial = 0; trial < ctx.limits.max_assignments; ++trial) {
        GraphTrace t = trace;
        bool ok = true;
        for (auto v : free) {
            const auto& pool = needs_prim.count(v) ? prims : ctx.candidates;
            if (pool.empty()) {
                ok = false;
                break;
            }
            t.vars[v] = rng.pick(pool);
        }
        if (!ok) continue;
        for (const auto& call : t.calls) {
            const FunctionDecl& fn = *program.function(call.function).decl;
            for (std::size_t i = 0; i < call.inputs.size() && ok; ++i)
                if (call.inputs[i].kind == TraceInput::Kind::Literal &&
                    !literal_ok(t.resolve(substitute(fn.inputs[i].type, call.type_args))))
                    ok = false;
        }
        if (ok) return t;
    }
    throw NoAssignment("no assignment of candidate types satisfies the trace");
}

Transaction instantiate(GraphTrace trace, const SynthContext& ctx, Rng& rng) {
    const Program& program = ctx.program();
    if (!trace.is_concrete()) throw NoAssignment("trace has unassigned type variables");
    const std::size_t n = trace.calls.size();

    // Width-first linearization: each round emits every call whose producers are already placed.
    std::vector<std::uint32_t> order;
    std::vector<bool> placed(n, false);
    while (order.size() < n) {
        std::vector<std::uint32_t> ready;
        for (std::uint32_t c = 0; c < n; ++c) {
            if (placed[c]) continue;
            bool ok = true;
            for (const auto& in : trace.calls[c].inputs)
                if (in.kind == TraceInput::Kind::Result && !placed.at(in.call)) ok = false;
            if (ok) ready.push_back(c);
        }
        if (ready.empty()) throw Exhausted("trace contains a dependency cycle");
        std::stable_sort(ready.begin(), ready.end(), [&](std::uint32_t a, std::uint32_t b) {
            return ctx.graph->function_node(trace.calls[a].function).value_or(0) <
                   ctx.graph->function_node(trace.calls[b].function).value_or(0);
        });
        for (auto c : ready) placed[c] = true;
        order.insert(order.end(), ready.begin(), ready.end());
    }
    std::vector<std::uint32_t> position(n);
    for (std::uint32_t i = 0; i < n; ++i) position[order[i]] = i;

    GraphTrace out;
    Transaction txn;
    for (std::uint32_t i = 0; i < n; ++i) {
        TraceCall call = trace.calls[order[i]];
        for (auto& t : call.type_args) t = trace.resolve(t);
        const FunctionDecl& fn = *program.function(call.function).decl;
        const Signature sig = signature_of(fn, call.type_args);
        CallSpec spec;
        spec.function = call.function;
        spec.type_args = call.type_args;
        for (std::size_t a = 0; a < call.inputs.size(); ++a) {
            auto& in = call.inputs[a];
            const TypeTag& want = sig.inputs[a];
            switch (in.kind) {
            case TraceInput::Kind::Literal:
                if (want.is_primitive()) {
                    if (in.values.size() != 1 || in.values[0] > prim_max(want.prim()))
                        in.values = {sample_value(want.prim(), rng)};
                    spec.args.push_back(ArgBinding::literal(want.prim(), in.values[0]));
                } else if (want.is_primitive_vector()) {
                    const Prim ep = want.element().prim();
                    bool fits = !in.values.empty();
                    for (const auto& v : in.values) fits = fits && v <= prim_max(ep);
                    if (!fits) {
                        in.values.clear();
                        const auto len = rng.below(5);
                        for (std::uint64_t k = 0; k < len; ++k) in.values.push_back(sample_value(ep, rng));
                    }
                    spec.args.push_back(ArgBinding::literal_vector(ep, in.values));
                } else {
                    throw NoAssignment("literal input of non-primitive type " + want.to_string());
                }
                break;
            case TraceInput::Kind::Result:
                in.call = position.at(in.call);
                spec.args.push_back(ArgBinding::result(in.call, in.output));
                break;
            case TraceInput::Kind::Pool: {
                auto it = std::find_if(ctx.pool.begin(), ctx.pool.end(),
                                       [&](const PoolObjectInfo& o) { return o.id == in.object; });
                if (it == ctx.pool.end() || it->type != want)
                    throw PoolMiss("pool has no object @" + std::to_string(in.object) + " of type " + want.to_string());
                spec.args.push_back(ArgBinding::pool(in.object));
                break;
            }
            }
        }
        out.calls.push_back(std::move(call));
        txn.calls.push_back(std::move(spec));
    }
    txn.trace = std::make_shared<const GraphTrace>(std::move(out));
    return txn;
}

Transaction generate(const SynthContext& ctx, Rng& rng) {
    const auto starts = start_functions(*ctx.graph, ctx.pool);
    if (starts.empty()) throw Exhausted("no start functions");
    for (int tries = 0; tries < 16; ++tries) {
        try {
            return finish(construct_trace(ctx, rng.pick(starts), rng), ctx, rng);
        } catch (const Exhausted&) {
        } catch (const NoAssignment&) {
        } catch (const PoolMiss&) {
        }
    }
    throw Exhausted("generation failed for every drawn start function");
}

// ---------------------------------------------------------------------------
// Mutators
// ---------------------------------------------------------------------------

namespace {

U256 havoc_int(const U256& v, Prim p, Rng& rng) {
    const U256 max = prim_max(p);
    const unsigned bits = prim_bits(p);
    switch (rng.below(4)) {
    case 0: return v ^ (U256(1) << static_cast<unsigned>(rng.below(bits)));
    case 1: {
        const U256 delta = 1 + rng.below(35);
        U256 r = rng.chance(0.5) ? v + delta : v - delta;
        return bits == 256 ? r : (r & max);
    }
    case 2: return sample_value(p, rng);
    default: return rng.bits(bits);
    }
}

}  // namespace

Transaction mutate_values(const Transaction& seed, Rng& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> sites;
    for (std::size_t c = 0; c < seed.calls.size(); ++c)
        for (std::size_t a = 0; a < seed.calls[c].args.size(); ++a) {
            const auto k = seed.calls[c].args[a].kind;
            if (k == ArgBinding::Kind::Literal || k == ArgBinding::Kind::LiteralVector) sites.emplace_back(c, a);
        }
    if (sites.empty()) return seed;
    Transaction out = seed;
    std::size_t count = 1;
    while (count < 4 && rng.chance(0.5)) ++count;
    for (std::size_t k = 0; k < count; ++k) {
        auto [c, a] = rng.pick(sites);
        auto& b = out.calls[c].args[a];
        if (b.kind == ArgBinding::Kind::Literal) {
            b.values[0] = b.prim == Prim::Bool ? U256(b.values[0] == 0 ? 1 : 0) : havoc_int(b.values[0], b.prim, rng);
        } else {
            const auto op = rng.below(3);
            if (op == 0 || b.values.empty()) {
                b.values.push_back(sample_value(b.prim, rng));
            } else if (op == 1) {
                b.values.erase(b.values.begin() + static_cast<std::ptrdiff_t>(rng.below(b.values.size())));
            } else {
                auto& v = b.values[rng.below(b.values.size())];
                v = b.prim == Prim::Bool ? U256(v == 0 ? 1 : 0) : havoc_int(v, b.prim, rng);
            }
        }
    }
    if (seed.trace && seed.trace->calls.size() == out.calls.size()) {
        GraphTrace t = *seed.trace;
        for (auto [c, a] : sites) t.calls[c].inputs[a].values = out.calls[c].args[a].values;
        out.trace = std::make_shared<const GraphTrace>(std::move(t));
    }
    return out;
}

std::optional<Transaction> extend_trace(const Transaction& seed, const SynthContext& ctx, Rng& rng) {
    TraceBuilder b(ctx, rng, seed_trace(seed));
    auto open = b.unconsumed(false);
    if (open.empty()) return std::nullopt;
    for (int tries = 0; tries < 4; ++tries) {
        auto saved = b.snapshot();
        if (b.attach_consumer(rng.pick(open)) && b.close()) {
            try {
                return finish(b.take(), ctx, rng);
            } catch (const std::runtime_error&) {
            }
        }
        b.restore(std::move(saved));
    }
    return std::nullopt;
}

Transaction insert_call(const Transaction& seed, const SynthContext& ctx, Rng& rng) {
    const auto fnodes = ctx.graph->function_nodes();
    if (fnodes.empty()) return seed;
    const GraphTrace base = seed_trace(seed);
    for (int draw = 0; draw < 8; ++draw) {
        const NodeId target = rng.pick(fnodes);
        TraceBuilder b(ctx, rng, base);
        auto open = b.unconsumed(false);
        for (std::size_t k = open.size(); k > 1; --k) std::swap(open[k - 1], open[rng.below(k)]);
        bool connected = false;
        for (const auto& o : open) {
            auto node = ctx.graph->type_node(canonical_pattern(b.output_term(o.call, o.output)).first);
            if (!node) continue;
            auto path = find_path(*ctx.graph, *node, target, 3, rng);
            if (!path) continue;
            auto saved = b.snapshot();
            if (b.attach_path(o, *path) && b.close()) {
                connected = true;
                break;
            }
            b.restore(std::move(saved));
        }
        if (!connected) {
            // No connection: append a fresh subtrace starting at the drawn function.
            b.add_call(ctx.graph->node(target).function);
            if (!b.close()) continue;
        }
        try {
            return finish(b.take(), ctx, rng);
        } catch (const std::runtime_error&) {
        }
    }
    return seed;
}

Transaction remove_call(const Transaction& seed, const SynthContext& ctx, Rng& rng) {
    if (seed.calls.empty()) return seed;
    const Program& program = ctx.program();
    GraphTrace t = seed_trace(seed);
    const std::size_t n = t.calls.size();
    std::vector<bool> removed(n, false);
    removed[rng.below(n)] = true;

    auto out_type = [&](std::uint32_t c, std::uint32_t o) {
        return t.resolve(substitute(program.function(t.calls[c].function).decl->outputs[o], t.calls[c].type_args));
    };
    auto in_type = [&](std::uint32_t c, std::uint32_t i) {
        return t.resolve(substitute(program.function(t.calls[c].function).decl->inputs[i].type, t.calls[c].type_args));
    };
    auto depends_on = [&](std::uint32_t p, std::uint32_t c) {
        std::vector<std::uint32_t> stack{p};
        std::set<std::uint32_t> seen;
        while (!stack.empty()) {
            auto x = stack.back();
            stack.pop_back();
            if (x == c) return true;
            if (!seen.insert(x).second) continue;
            for (const auto& in : t.calls[x].inputs)
                if (in.kind == TraceInput::Kind::Result) stack.push_back(in.call);
        }
        return false;
    };

    bool changed = true;
    while (changed) {
        changed = false;
        std::set<std::pair<std::uint32_t, std::uint32_t>> consumed;
        std::set<ObjectId> pool_used;
        for (std::uint32_t c = 0; c < n; ++c) {
            if (removed[c]) continue;
            for (const auto& in : t.calls[c].inputs) {
                if (in.kind == TraceInput::Kind::Result && !removed[in.call]) consumed.insert({in.call, in.output});
                if (in.kind == TraceInput::Kind::Pool) pool_used.insert(in.object);
            }
        }
        for (std::uint32_t c = 0; c < n && !changed; ++c) {
            if (removed[c]) {
                // A removed consumer of a hot potato takes its producer with it.
                for (const auto& in : t.calls[c].inputs)
                    if (in.kind == TraceInput::Kind::Result && !removed[in.call] &&
                        program.is_hot_potato(out_type(in.call, in.output))) {
                        removed[in.call] = true;
                        changed = true;
                    }
                continue;
            }
            for (std::uint32_t i = 0; i < t.calls[c].inputs.size() && !changed; ++i) {
                auto& in = t.calls[c].inputs[i];
                if (in.kind != TraceInput::Kind::Result || !removed[in.call]) continue;
                const TypeTag want = in_type(c, i);
                std::vector<TraceInput> options;
                if (!program.is_hot_potato(want)) {
                    for (std::uint32_t p = 0; p < n; ++p) {
                        if (removed[p] || depends_on(p, c)) continue;
                        for (std::uint32_t o = 0; o < program.function(t.calls[p].function).decl->outputs.size(); ++o)
                            if (!consumed.count({p, o}) && out_type(p, o) == want) {
                                TraceInput r;
                                r.kind = TraceInput::Kind::Result;
                                r.call = p;
                                r.output = o;
                                options.push_back(r);
                            }
                    }
                    for (const auto& obj : ctx.pool)
                        if (obj.ownership == Ownership::SenderOwned && !pool_used.count(obj.id) && obj.type == want) {
                            TraceInput r;
                            r.kind = TraceInput::Kind::Pool;
                            r.object = obj.id;
                            options.push_back(r);
                        }
                }
                if (options.empty()) removed[c] = true;
                else in = rng.pick(options);
                changed = true;
            }
        }
    }

    GraphTrace kept;
    kept.vars = t.vars;
    std::vector<std::uint32_t> index(n, 0);
    for (std::uint32_t c = 0; c < n; ++c)
        if (!removed[c]) {
            index[c] = static_cast<std::uint32_t>(kept.calls.size());
            kept.calls.push_back(t.calls[c]);
        }
    for (auto& call : kept.calls)
        for (auto& in : call.inputs)
            if (in.kind == TraceInput::Kind::Result) in.call = index[in.call];
    try {
        return instantiate(std::move(kept), ctx, rng);
    } catch (const std::runtime_error&) {
        return seed;
    }
}

const char* mutator_name(Mutator m) {
    switch (m) {
    case Mutator::Values: return "values";
    case Mutator::Extend: return "extend";
    case Mutator::Insert: return "insert";
    case Mutator::Remove: return "remove";
    }
    return "?";
}

Transaction apply_mutator(Mutator m, const Transaction& seed, const SynthContext& ctx, Rng& rng) {
    switch (m) {
    case Mutator::Values: return mutate_values(seed, rng);
    case Mutator::Extend: return extend_trace(seed, ctx, rng).value_or(seed);
    case Mutator::Insert: return insert_call(seed, ctx, rng);
    case Mutator::Remove: return remove_call(seed, ctx, rng);
    }
    return seed;
}

Transaction apply_renames(const Transaction& txn, const Program& program,
                          const std::map<std::string, std::string>& renames) {
    if (renames.empty()) return txn;
    Transaction out = txn;
    for (auto& call : out.calls) {
        auto it = renames.find(program.function(call.function).qualified);
        if (it == renames.end()) continue;
        auto target = program.find_function(it->second);
        if (!target) continue;
        const FunctionDecl& a = *program.function(call.function).decl;
        const FunctionDecl& b = *program.function(*target).decl;
        if (a.type_params != b.type_params || a.inputs != b.inputs || a.outputs != b.outputs) continue;
        call.function = *target;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structure-unaware havoc (type graph disabled)
// ---------------------------------------------------------------------------

namespace {

CallSpec havoc_call(const Program& program, const SynthContext& ctx, std::size_t index, Rng& rng) {
    std::vector<FunctionId> pub;
    for (const auto& e : program.functions())
        if (e.decl->visibility == Visibility::Public) pub.push_back(e.id);
    CallSpec call;
    call.function = rng.pick(pub);
    const FunctionDecl& fn = *program.function(call.function).decl;
    for (std::uint32_t i = 0; i < fn.type_params; ++i) call.type_args.push_back(rng.pick(ctx.candidates));
    static constexpr Prim kPrims[] = {Prim::Bool, Prim::U8, Prim::U16, Prim::U32, Prim::U64, Prim::U128, Prim::U256};
    for (std::size_t a = 0; a < fn.inputs.size(); ++a) {
        const Prim p = kPrims[rng.below(7)];
        switch (rng.below(4)) {
        case 1: {
            std::vector<U256> vals(rng.below(4));
            for (auto& v : vals) v = sample_value(p, rng);
            call.args.push_back(ArgBinding::literal_vector(p, std::move(vals)));
            break;
        }
        case 2:
            if (index > 0) {
                call.args.push_back(ArgBinding::result(static_cast<std::uint32_t>(rng.below(index)),
                                                       static_cast<std::uint32_t>(rng.below(3))));
                break;
            }
            [[fallthrough]];
        case 3:
            if (!ctx.pool.empty()) {
                call.args.push_back(ArgBinding::pool(rng.pick(ctx.pool).id));
                break;
            }
            [[fallthrough]];
        default: call.args.push_back(ArgBinding::literal(p, sample_value(p, rng)));
        }
    }
    return call;
}

}  // namespace

Transaction havoc_generate(const Program& program, const SynthContext& ctx, Rng& rng) {
    Transaction txn;
    std::size_t n = 1;
    while (n < ctx.limits.max_calls && rng.chance(0.5)) ++n;
    for (std::size_t i = 0; i < n; ++i) txn.calls.push_back(havoc_call(program, ctx, i, rng));
    return txn;
}

Transaction havoc_mutate(const Transaction& seed, const Program& program, const SynthContext& ctx, Rng& rng) {
    Transaction out = seed;
    out.trace.reset();
    switch (rng.below(4)) {
    case 0: {
        const auto at = rng.below(out.calls.size() + 1);
        out.calls.insert(out.calls.begin() + static_cast<std::ptrdiff_t>(at), havoc_call(program, ctx, at, rng));
        break;
    }
    case 1:
        if (!out.calls.empty()) out.calls.erase(out.calls.begin() + static_cast<std::ptrdiff_t>(rng.below(out.calls.size())));
        break;
    case 2:
        if (!out.calls.empty()) {
            const auto at = rng.below(out.calls.size());
            auto fresh = havoc_call(program, ctx, at, rng);
            auto& call = out.calls[at];
            if (!call.args.empty() && !fresh.args.empty())
                call.args[rng.below(call.args.size())] = fresh.args[rng.below(fresh.args.size())];
        }
        break;
    default: out = mutate_values(out, rng); break;
    }
    return out;
}

}  // namespace tgfuzz
