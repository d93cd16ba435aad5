#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "tgfuzz/model.hpp"

namespace tgfuzz {

/// Thin wrapper over mt19937_64 whose derived draws do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    /// Uniform in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        return next() % n;
    }
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return unit() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v.at(below(v.size()));
    }

    /// Index drawn proportionally to non-negative weights; returns weights.size() when all are zero.
    std::size_t weighted(const std::vector<double>& weights) {
        double total = 0;
        for (double w : weights) total += w;
        if (total <= 0) return weights.size();
        double x = unit() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (x < weights[i]) return i;
            x -= weights[i];
        }
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0) return i;
        return weights.size();
    }

    /// Uniform 256-bit value masked to `bits`.
    U256 bits(unsigned bits) {
        U256 v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 64) | U256(next());
        if (bits >= 256) return v;
        return v & ((U256(1) << bits) - 1);
    }

    /// Independent stream for a worker or sub-task.
    Rng split(std::uint64_t stream) {
        std::seed_seq seq{static_cast<std::uint32_t>(next()), static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)};
        return Rng(std::mt19937_64(seq)());
    }

private:
    std::mt19937_64 engine_;
};

/// Half boundary values (0, 1, 2, max, max-1, 2^k and 2^k +- 1), half uniform.
U256 sample_value(Prim p, Rng& rng);

}  // namespace tgfuzz
