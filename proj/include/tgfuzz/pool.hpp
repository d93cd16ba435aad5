#pragma once

#include <cstdint>
#include <vector>

#include "tgfuzz/model.hpp"

namespace tgfuzz {

using ObjectId = std::uint64_t;

enum class Ownership : std::uint8_t { SenderOwned, Shared };

/// Type-level description of one genesis object; what synthesis needs to know about the pool.
struct PoolObjectInfo {
    ObjectId id = 0;
    TypeTag type;
    Ownership ownership = Ownership::SenderOwned;
};

using PoolView = std::vector<PoolObjectInfo>;

}  // namespace tgfuzz
