#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace koopgraph {

using Rng = std::mt19937_64;

/// Derives an independent generator for a named consumer ("sbm", "init",
/// "dropout", "negsample", ...) from the single run seed. Streams depend
/// only on (seed, name), so adding a consumer never shifts another.
Rng make_stream(std::uint64_t seed, std::string_view name);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double standard_normal(Rng& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

}  // namespace koopgraph
