#pragma once

// Straight-line transactions, the graph traces they are instantiated from,
// the replay text format, and the independent well-typedness checker.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tgfuzz/pool.hpp"
#include "tgfuzz/program.hpp"

namespace tgfuzz {

struct TraceInput {
    enum class Kind : std::uint8_t { Literal, Result, Pool };
    Kind kind = Kind::Literal;
    std::uint32_t call = 0;
    std::uint32_t output = 0;
    ObjectId object = 0;
    /// Literal value (one entry) or vector elements; empty until first instantiation.
    std::vector<U256> values;
    friend bool operator==(const TraceInput&, const TraceInput&) = default;
};

struct TraceCall {
    FunctionId function = 0;
    /// Terms over the trace's type variables: Parameter(i) denotes variable i.
    std::vector<TypeTag> type_args;
    std::vector<TraceInput> inputs;
    friend bool operator==(const TraceCall&, const TraceCall&) = default;
};

/// A closed walk over the type graph. Type variables are shared across calls
/// so that connected occurrences are instantiated together.
struct GraphTrace {
    std::vector<TraceCall> calls;
    std::vector<std::optional<TypeTag>> vars;

    /// Applies variable bindings recursively; unbound variables stay as Parameter terms.
    TypeTag resolve(const TypeTag& term) const;
    std::uint32_t fresh_var();
    bool is_concrete() const;
    friend bool operator==(const GraphTrace&, const GraphTrace&) = default;
};

struct ArgBinding {
    enum class Kind : std::uint8_t { Literal, Result, PoolObject, LiteralVector };
    Kind kind = Kind::Literal;
    /// Literal type, or element type of a literal vector.
    Prim prim = Prim::U64;
    std::vector<U256> values;
    std::uint32_t call = 0;
    std::uint32_t output = 0;
    ObjectId object = 0;

    static ArgBinding literal(Prim p, U256 v);
    static ArgBinding literal_vector(Prim p, std::vector<U256> v);
    static ArgBinding result(std::uint32_t call, std::uint32_t output);
    static ArgBinding pool(ObjectId id);
    friend bool operator==(const ArgBinding&, const ArgBinding&) = default;
};

struct CallSpec {
    FunctionId function = 0;
    std::vector<TypeTag> type_args;
    std::vector<ArgBinding> args;
    friend bool operator==(const CallSpec&, const CallSpec&) = default;
};

struct Transaction {
    std::vector<CallSpec> calls;
    /// Originating trace, aligned call-for-call with `calls` when present.
    std::shared_ptr<const GraphTrace> trace;
    std::uint64_t rng_seed = 0;

    bool empty() const { return calls.empty(); }
};

struct TypeError {
    std::size_t call = 0;
    std::size_t position = 0;
    std::string expected;
    std::string actual;
    std::string message;
    std::string to_string() const;
};

/// Ok (nullopt) iff the transaction is well-typed against the program and pool,
/// including single use of non-copyable results and hot-potato linearity.
std::optional<TypeError> validate(const Transaction& txn, const Program& program, const PoolView& pool);

/// Byte-stable replay text: one `call module::fn<targs> arg...` line per call.
std::string serialize_transaction(const Transaction& txn, const Program& program);
/// Throws ParseError.
Transaction parse_transaction(std::string_view text, const Program& program);

/// Rebuilds a concrete trace mirroring a transaction.
GraphTrace trace_of(const Transaction& txn);

/// Concrete output types of every call (empty vector entry when a call is malformed).
std::vector<std::vector<TypeTag>> output_types(const Transaction& txn, const Program& program);

}  // namespace tgfuzz
