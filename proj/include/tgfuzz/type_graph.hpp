#pragma once

// The type graph: type-pattern nodes and public-function nodes joined by
// input/output edges carrying parameter substitutions.

#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuzz/pool.hpp"
#include "tgfuzz/program.hpp"

namespace tgfuzz {

using NodeId = std::uint32_t;

enum class NodeKind : std::uint8_t { DefaultType, HotPotatoType, Function };
enum class EdgeDirection : std::uint8_t { Input, Output };

struct TypeGraphNode {
    NodeKind kind = NodeKind::DefaultType;
    /// Canonical pattern for type nodes: datatype args are Parameter(0..k-1),
    /// non-primitive vectors are vector<Parameter(0)>, a bare parameter is Parameter(0).
    TypeTag pattern;
    FunctionId function = 0;
    std::string label;

    bool is_type() const { return kind != NodeKind::Function; }
};

struct TypeGraphEdge {
    NodeId type_node = 0;
    NodeId function_node = 0;
    EdgeDirection direction = EdgeDirection::Input;
    /// Signature positions (input or output index) whose type maps to this edge.
    std::vector<std::uint32_t> positions;
    RefMode mode = RefMode::ByValue;
    /// Node parameter i maps to annotation[i], a type over the function's parameters.
    std::optional<std::vector<TypeTag>> annotation;

    TypeTag function_type(const TypeGraphNode& node) const;
};

class UnknownType : public std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Partial binding of a function's type parameters.
using Binding = std::vector<std::optional<TypeTag>>;

struct ProducerMatch {
    NodeId function_node = 0;
    FunctionId function = 0;
    std::uint32_t position = 0;
    Binding binding;
};

struct TypeGraphOptions {
    /// Drop generic functions entirely (used by the no-type-parameter ablation).
    bool exclude_generic_functions = false;
};

class TypeGraph {
public:
    const std::vector<TypeGraphNode>& nodes() const { return nodes_; }
    const std::vector<TypeGraphEdge>& edges() const { return edges_; }
    const TypeGraphNode& node(NodeId id) const { return nodes_.at(id); }

    std::optional<NodeId> type_node(const TypeTag& pattern) const;
    std::optional<NodeId> function_node(FunctionId f) const;
    std::vector<NodeId> function_nodes() const;

    /// Edges touching `n`, in insertion order.
    const std::vector<std::size_t>& edges_of(NodeId n) const { return adjacency_.at(n); }

    const Program& program() const { return *program_; }

private:
    friend TypeGraph build_type_graph(const Program&, const TypeGraphOptions&);
    NodeId add_type_node(const TypeTag& pattern);

    const Program* program_ = nullptr;
    std::vector<TypeGraphNode> nodes_;
    std::vector<TypeGraphEdge> edges_;
    std::vector<std::vector<std::size_t>> adjacency_;
    std::vector<std::pair<TypeTag, NodeId>> type_index_;
    std::vector<std::pair<FunctionId, NodeId>> function_index_;
};

/// Splits a type into its canonical node pattern and the arguments that instantiate it.
std::pair<TypeTag, std::vector<TypeTag>> canonical_pattern(const TypeTag& t);

/// One-sided matching: binds Parameter(i) in `pattern` so that it equals `concrete`.
bool match_pattern(const TypeTag& pattern, const TypeTag& concrete, Binding& binding);

/// The program must outlive the graph.
TypeGraph build_type_graph(const Program& program, const TypeGraphOptions& options = {});

/// A primitive without a node matches nothing; any other type without a node throws UnknownType.
std::vector<ProducerMatch> producers_of(const TypeGraph& g, const TypeTag& t);
std::vector<ProducerMatch> consumers_of(const TypeGraph& g, const TypeTag& t);

/// Functions whose inputs are all primitive, or whose other inputs can be drawn from `pool`.
/// Functions of the target package are preferred; dependencies are used only when none qualify.
std::vector<NodeId> start_functions(const TypeGraph& g, const PoolView& pool = {});

void write_dot(const TypeGraph& g, std::ostream& out);

}  // namespace tgfuzz
