#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <vector>

#include "rtb/errors.hpp"

namespace rtb {

// One-hot encoded categorical fields: the active indices of a sparse binary
// vector of the given dimension.
struct SparseFeatures {
    std::vector<std::uint32_t> indices;
    std::uint32_t dimension = 0;

    void validate() const {
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] >= dimension)
                throw InputError("feature id " + std::to_string(indices[i]) +
                                 " out of range (dimension " + std::to_string(dimension) + ")");
            for (std::size_t j = i + 1; j < indices.size(); ++j)
                if (indices[i] == indices[j])
                    throw InputError("duplicate feature id " + std::to_string(indices[i]));
        }
    }
};

// Hash trick for raw categorical fields: field name and value mapped into
// [0, dimension). FNV-1a, stable across runs and platforms.
inline std::uint32_t hash_feature(std::string_view field, std::string_view value,
                                  std::uint32_t dimension) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::string_view s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    };
    mix(field);
    h ^= 0x1f;
    mix(value);
    return static_cast<std::uint32_t>(h % dimension);
}

}  // namespace rtb
