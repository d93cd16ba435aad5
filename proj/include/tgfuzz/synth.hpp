#pragma once

// Transaction synthesis over the type graph: trace construction, type
// substitution, instantiation, the four structural mutators, and the
// structure-unaware havoc generator used when the type graph is disabled.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tgfuzz/rng.hpp"
#include "tgfuzz/transaction.hpp"
#include "tgfuzz/type_graph.hpp"

namespace tgfuzz {

class Exhausted : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class NoAssignment : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class PoolMiss : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SynthLimits {
    std::size_t max_calls = 16;
    /// Randomized restarts before construct_trace gives up.
    std::size_t max_attempts = 8;
    std::size_t max_assignments = 256;
    /// Probability of hanging an extra consumer off an unconsumed default output.
    double extend_probability = 0.25;
};

struct SynthContext {
    const TypeGraph* graph = nullptr;
    PoolView pool;
    std::vector<TypeTag> candidates;
    SynthLimits limits;

    const Program& program() const { return graph->program(); }
};

/// Non-hot-potato datatypes without parameters, all primitives, and the types found in the pool.
std::vector<TypeTag> substitution_candidates(const Program& program, const PoolView& pool);

SynthContext make_context(const TypeGraph& graph, PoolView pool, SynthLimits limits = {});

GraphTrace construct_trace(const SynthContext& ctx, NodeId start, Rng& rng);
GraphTrace substitute_trace_types(GraphTrace trace, const SynthContext& ctx, Rng& rng);
Transaction instantiate(GraphTrace trace, const SynthContext& ctx, Rng& rng);

/// Start function, trace, substitution and instantiation with retries; throws Exhausted when nothing works.
Transaction generate(const SynthContext& ctx, Rng& rng);

Transaction mutate_values(const Transaction& seed, Rng& rng);
std::optional<Transaction> extend_trace(const Transaction& seed, const SynthContext& ctx, Rng& rng);
Transaction insert_call(const Transaction& seed, const SynthContext& ctx, Rng& rng);
Transaction remove_call(const Transaction& seed, const SynthContext& ctx, Rng& rng);

enum class Mutator : std::uint8_t { Values, Extend, Insert, Remove };
const char* mutator_name(Mutator m);
Transaction apply_mutator(Mutator m, const Transaction& seed, const SynthContext& ctx, Rng& rng);

/// Replaces calls to renamed functions (same signature required).
Transaction apply_renames(const Transaction& txn, const Program& program,
                          const std::map<std::string, std::string>& renames);

/// Structure-unaware generation: random public calls with type-agnostic arguments.
Transaction havoc_generate(const Program& program, const SynthContext& ctx, Rng& rng);
Transaction havoc_mutate(const Transaction& seed, const Program& program, const SynthContext& ctx, Rng& rng);

}  // namespace tgfuzz
