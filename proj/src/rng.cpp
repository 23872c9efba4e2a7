#include "mfp/rng.hpp"

#include <cmath>
#include <numbers>

namespace mfp {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> round_once(std::array<std::uint32_t, 4> c,
                                               std::array<std::uint32_t, 2> k) {
  std::uint32_t hi0, lo0, hi1, lo1;
  mul_hi_lo(kPhiloxM0, c[0], hi0, lo0);
  mul_hi_lo(kPhiloxM1, c[2], hi1, lo1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

// 53-bit uniform in the open interval (0,1); never returns 0 or 1.
inline double to_unit(std::uint64_t v) {
  return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kPhiloxW0;
      key[1] += kPhiloxW1;
    }
    counter = round_once(counter, key);
  }
  return counter;
}

double NoiseField::normal(std::uint32_t kind, std::uint32_t stream, std::uint32_t step,
                          std::uint32_t idx) const {
  const std::array<std::uint32_t, 4> ctr = {step, idx >> 1, stream, kind};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32(ctr, key);
  const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
  const double u1 = to_unit(a);
  const double u2 = to_unit(b);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double ang = 2.0 * std::numbers::pi * u2;
  return (idx & 1u) ? r * std::sin(ang) : r * std::cos(ang);
}

double NoiseField::uniform(std::uint32_t kind, std::uint32_t stream, std::uint32_t step,
                           std::uint32_t idx) const {
  const std::array<std::uint32_t, 4> ctr = {step, idx >> 1, stream, kind};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(seed_),
                                            static_cast<std::uint32_t>(seed_ >> 32)};
  const auto out = philox4x32(ctr, key);
  const std::uint64_t a = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
  const std::uint64_t b = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
  return to_unit((idx & 1u) ? b : a);
}

}  // namespace mfp
