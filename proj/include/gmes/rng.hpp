#pragma once

#include "gmes/types.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace gmes {

using Rng = std::mt19937_64;

/// Independent, reproducible stream derived from a base seed and a tag path
/// (e.g. {iteration, purpose}).
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (tags.size() + 1));
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto t : tags) push(t);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

/// Uniform double in [0, 1) built from the top 53 bits. Unlike
/// std::uniform_real_distribution the result is identical across standard
/// libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline Vector uniform_in_box(const DomainBox& box, Rng& rng) {
    Vector x(box.lower.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] = box.lower[j] + uniform01(rng) * (box.upper[j] - box.lower[j]);
    return x;
}

}  // namespace gmes
