#include "mfcoulomb/rng.hpp"

#include <cmath>
#include <numbers>

namespace mfc::rng {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  // 53 random bits mapped to the open interval (0, 1).
  const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace

Block philox4x32(Block ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::array<double, 2> uniform_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                                   Purpose purpose, std::uint32_t lane) {
  const Block ctr{static_cast<std::uint32_t>(counter), static_cast<std::uint32_t>(counter >> 32),
                  static_cast<std::uint32_t>(stream),
                  (static_cast<std::uint32_t>(stream >> 32) << 8) ^
                      (static_cast<std::uint32_t>(purpose) << 4) ^ lane};
  const Block out = philox4x32(ctr, {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  return {to_unit(out[0], out[1]), to_unit(out[2], out[3])};
}

std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                                  Purpose purpose, std::uint32_t lane) {
  const auto u = uniform_pair(seed, stream, counter, purpose, lane);
  const double r = std::sqrt(-2.0 * std::log(u[0]));
  const double a = 2.0 * std::numbers::pi * u[1];
  return {r * std::cos(a), r * std::sin(a)};
}

std::array<double, 3> normal3(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter, Purpose purpose) {
  const auto a = normal_pair(seed, stream, counter, purpose, 0);
  const auto b = normal_pair(seed, stream, counter, purpose, 1);
  return {a[0], a[1], b[0]};
}

}  // namespace mfc::rng
