#include "tgfuzz/rng.hpp"

namespace tgfuzz {

U256 sample_value(Prim p, Rng& rng) {
    const unsigned bits = prim_bits(p);
    if (p == Prim::Bool) return rng.below(2);
    const U256 max = prim_max(p);
    if (rng.chance(0.5)) return rng.bits(bits);
    // 0, 1, 2, max, max-1, then 2^k-1, 2^k, 2^k+1 for k in [1, bits).
    const std::uint64_t n = 5 + 3 * static_cast<std::uint64_t>(bits - 1);
    const std::uint64_t i = rng.below(n);
    switch (i) {
    case 0: return 0;
    case 1: return 1;
    case 2: return 2;
    case 3: return max;
    case 4: return max - 1;
    default: break;
    }
    const unsigned k = 1 + static_cast<unsigned>((i - 5) / 3);
    const U256 pow = U256(1) << k;
    switch ((i - 5) % 3) {
    case 0: return pow - 1;
    case 1: return pow;
    default: return pow + 1;
    }
}

}  // namespace tgfuzz
