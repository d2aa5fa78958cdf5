#pragma once

// Counter-based normal variates. Every draw is a pure function of
// (seed, stream, counter, purpose), so noise can be addressed per particle and
// per step without carrying generator state around.

#include <array>
#include <cstdint>

namespace mfc::rng {

enum class Purpose : std::uint32_t { brownian = 0, initial = 1, direction = 2, auxiliary = 3 };

using Block = std::array<std::uint32_t, 4>;

// Philox4x32 with 10 rounds (Salmon et al., SC'11).
Block philox4x32(Block counter, std::array<std::uint32_t, 2> key);

// Two uniforms in (0, 1) for the given address, 53 bits each.
std::array<double, 2> uniform_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                                   Purpose purpose, std::uint32_t lane = 0);

// Two independent standard normals (Box-Muller).
std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                                  Purpose purpose, std::uint32_t lane = 0);

// Three independent standard normals.
std::array<double, 3> normal3(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                              Purpose purpose);

}  // namespace mfc::rng
