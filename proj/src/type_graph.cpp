#include "tgfuzz/type_graph.hpp"

#include <algorithm>

namespace tgfuzz {

std::pair<TypeTag, std::vector<TypeTag>> canonical_pattern(const TypeTag& t) {
    switch (t.kind()) {
    case TypeTag::Kind::Primitive: return {t, {}};
    case TypeTag::Kind::Parameter: return {TypeTag::parameter(0), {t}};
    case TypeTag::Kind::Vector:
        if (t.element().is_primitive()) return {t, {}};
        return {TypeTag::vector(TypeTag::parameter(0)), {t.element()}};
    case TypeTag::Kind::Datatype: {
        std::vector<TypeTag> params;
        for (std::uint32_t i = 0; i < t.args().size(); ++i) params.push_back(TypeTag::parameter(i));
        return {TypeTag::datatype(t.datatype_ref(), std::move(params)), t.args()};
    }
    }
    return {t, {}};
}

bool match_pattern(const TypeTag& pattern, const TypeTag& concrete, Binding& binding) {
    if (pattern.is_parameter()) {
        const auto i = pattern.param_index();
        if (i >= binding.size()) binding.resize(i + 1);
        if (binding[i]) return *binding[i] == concrete;
        binding[i] = concrete;
        return true;
    }
    if (pattern.kind() != concrete.kind()) return false;
    switch (pattern.kind()) {
    case TypeTag::Kind::Primitive: return pattern.prim() == concrete.prim();
    case TypeTag::Kind::Datatype:
        if (pattern.datatype_ref() != concrete.datatype_ref()) return false;
        [[fallthrough]];
    case TypeTag::Kind::Vector:
        if (pattern.args().size() != concrete.args().size()) return false;
        for (std::size_t i = 0; i < pattern.args().size(); ++i)
            if (!match_pattern(pattern.args()[i], concrete.args()[i], binding)) return false;
        return true;
    case TypeTag::Kind::Parameter: break;
    }
    return false;
}

TypeTag TypeGraphEdge::function_type(const TypeGraphNode& node) const {
    if (!annotation) return node.pattern;
    return substitute(node.pattern, *annotation);
}

std::optional<NodeId> TypeGraph::type_node(const TypeTag& pattern) const {
    for (const auto& [p, id] : type_index_)
        if (p == pattern) return id;
    return std::nullopt;
}

std::optional<NodeId> TypeGraph::function_node(FunctionId f) const {
    for (const auto& [fid, id] : function_index_)
        if (fid == f) return id;
    return std::nullopt;
}

std::vector<NodeId> TypeGraph::function_nodes() const {
    std::vector<NodeId> out;
    for (const auto& [fid, id] : function_index_) out.push_back(id);
    return out;
}

NodeId TypeGraph::add_type_node(const TypeTag& pattern) {
    if (auto id = type_node(pattern)) return *id;
    TypeGraphNode n;
    n.kind = program_->is_hot_potato(pattern) ? NodeKind::HotPotatoType : NodeKind::DefaultType;
    n.pattern = pattern;
    n.label = pattern.to_string();
    const auto id = static_cast<NodeId>(nodes_.size());
    nodes_.push_back(std::move(n));
    adjacency_.emplace_back();
    type_index_.emplace_back(pattern, id);
    return id;
}

namespace {

void collect_primitives(const TypeTag& t, std::vector<TypeTag>& out) {
    if (t.is_primitive()) {
        if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
        return;
    }
    for (const auto& a : t.args()) collect_primitives(a, out);
}

}  // namespace

TypeGraph build_type_graph(const Program& program, const TypeGraphOptions& options) {
    TypeGraph g;
    g.program_ = &program;

    for (const auto& [ref, decl] : program.datatypes()) {
        std::vector<TypeTag> params;
        for (std::uint32_t i = 0; i < decl->type_params; ++i) params.push_back(TypeTag::parameter(i));
        g.add_type_node(TypeTag::datatype(ref, std::move(params)));
    }
    std::vector<TypeTag> prims;
    for (const auto& [ref, decl] : program.datatypes())
        for (const auto& f : decl->fields) collect_primitives(f.type, prims);
    for (const auto& e : program.functions()) {
        if (e.decl->visibility != Visibility::Public) continue;
        for (const auto& p : e.decl->inputs) collect_primitives(p.type, prims);
        for (const auto& o : e.decl->outputs) collect_primitives(o, prims);
    }
    for (const auto& p : prims) g.add_type_node(p);

    for (const auto& e : program.functions()) {
        const FunctionDecl& fn = *e.decl;
        if (fn.visibility != Visibility::Public) continue;
        if (options.exclude_generic_functions && fn.type_params > 0) continue;
        TypeGraphNode n;
        n.kind = NodeKind::Function;
        n.function = e.id;
        n.label = e.qualified;
        const auto fnode = static_cast<NodeId>(g.nodes_.size());
        g.nodes_.push_back(std::move(n));
        g.adjacency_.emplace_back();
        g.function_index_.emplace_back(e.id, fnode);

        auto connect = [&](const TypeTag& type, RefMode mode, EdgeDirection dir, std::uint32_t pos) {
            auto [pattern, args] = canonical_pattern(type);
            const NodeId tnode = g.add_type_node(pattern);
            std::optional<std::vector<TypeTag>> annotation;
            if (!pattern.is_concrete()) annotation = args;
            for (std::size_t idx : g.adjacency_[fnode]) {
                auto& edge = g.edges_[idx];
                if (edge.type_node == tnode && edge.direction == dir && edge.mode == mode &&
                    edge.annotation == annotation) {
                    edge.positions.push_back(pos);
                    return;
                }
            }
            TypeGraphEdge edge;
            edge.type_node = tnode;
            edge.function_node = fnode;
            edge.direction = dir;
            edge.positions.push_back(pos);
            edge.mode = mode;
            edge.annotation = std::move(annotation);
            g.adjacency_[fnode].push_back(g.edges_.size());
            g.adjacency_[tnode].push_back(g.edges_.size());
            g.edges_.push_back(std::move(edge));
        };
        for (std::uint32_t i = 0; i < fn.inputs.size(); ++i)
            connect(fn.inputs[i].type, fn.inputs[i].mode, EdgeDirection::Input, i);
        for (std::uint32_t i = 0; i < fn.outputs.size(); ++i)
            connect(fn.outputs[i], RefMode::ByValue, EdgeDirection::Output, i);
    }
    return g;
}

namespace {

std::vector<ProducerMatch> matches(const TypeGraph& g, const TypeTag& t, EdgeDirection dir) {
    auto [pattern, args] = canonical_pattern(t);
    auto node = g.type_node(pattern);
    if (!node && t.is_primitive()) return {};
    if (!node) throw UnknownType("type " + t.to_string() + " has no node in the type graph");
    std::vector<NodeId> candidates{*node};
    if (auto wildcard = g.type_node(TypeTag::parameter(0)); wildcard && *wildcard != *node)
        candidates.push_back(*wildcard);
    std::vector<ProducerMatch> out;
    for (NodeId n : candidates) {
        for (std::size_t idx : g.edges_of(n)) {
            const auto& edge = g.edges()[idx];
            if (edge.direction != dir) continue;
            const auto& fnode = g.node(edge.function_node);
            Binding binding(g.program().function(fnode.function).decl->type_params);
            if (!match_pattern(edge.function_type(g.node(n)), t, binding)) continue;
            for (auto pos : edge.positions) out.push_back({edge.function_node, fnode.function, pos, binding});
        }
    }
    return out;
}

}  // namespace

std::vector<ProducerMatch> producers_of(const TypeGraph& g, const TypeTag& t) {
    return matches(g, t, EdgeDirection::Output);
}

std::vector<ProducerMatch> consumers_of(const TypeGraph& g, const TypeTag& t) {
    return matches(g, t, EdgeDirection::Input);
}

std::vector<NodeId> start_functions(const TypeGraph& g, const PoolView& pool) {
    std::vector<NodeId> out;
    for (NodeId fnode : g.function_nodes()) {
        const FunctionDecl& fn = *g.program().function(g.node(fnode).function).decl;
        Binding binding(fn.type_params);
        bool ok = true;
        for (const auto& p : fn.inputs) {
            if (p.mode == RefMode::ByValue && (p.type.is_primitive() || p.type.is_primitive_vector() || p.type.is_parameter()))
                continue;
            bool found = false;
            for (const auto& obj : pool) {
                if (p.mode == RefMode::ByValue && obj.ownership != Ownership::SenderOwned) continue;
                Binding trial = binding;
                if (match_pattern(p.type, obj.type, trial)) {
                    binding = std::move(trial);
                    found = true;
                    break;
                }
            }
            if (!found) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(fnode);
    }
    std::vector<NodeId> target;
    for (NodeId n : out)
        if (g.program().function(g.node(n).function).in_target) target.push_back(n);
    return target.empty() ? out : target;
}

namespace {

std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

}  // namespace

void write_dot(const TypeGraph& g, std::ostream& out) {
    out << "digraph typegraph {\n  rankdir=LR;\n";
    for (NodeId i = 0; i < g.nodes().size(); ++i) {
        const auto& n = g.node(i);
        const char* kind = n.kind == NodeKind::DefaultType     ? "default"
                           : n.kind == NodeKind::HotPotatoType ? "hot potato"
                                                               : "function";
        out << "  n" << i << " [label=\"" << dot_escape(n.label) << "\\n(" << kind << ")\"";
        switch (n.kind) {
        case NodeKind::DefaultType: out << ", shape=ellipse"; break;
        case NodeKind::HotPotatoType: out << ", shape=doublecircle"; break;
        case NodeKind::Function: out << ", shape=box"; break;
        }
        out << "];\n";
    }
    for (const auto& e : g.edges()) {
        const bool input = e.direction == EdgeDirection::Input;
        out << "  n" << (input ? e.type_node : e.function_node) << " -> n" << (input ? e.function_node : e.type_node);
        std::string label;
        if (e.mode == RefMode::ByRef) label += "&";
        if (e.mode == RefMode::ByMutRef) label += "&mut ";
        if (e.annotation) {
            label += "[";
            for (std::size_t i = 0; i < e.annotation->size(); ++i) {
                if (i) label += ", ";
                label += "T" + std::to_string(i) + "/" + (*e.annotation)[i].to_string();
            }
            label += "]";
        }
        if (!label.empty()) out << " [label=\"" << dot_escape(label) << "\"]";
        out << ";\n";
    }
    out << "}\n";
}

}  // namespace tgfuzz
