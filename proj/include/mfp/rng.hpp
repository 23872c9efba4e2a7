#ifndef MFP_RNG_HPP
#define MFP_RNG_HPP

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mfp {

// Philox4x32-10 counter-based generator.
// Salmon, Moraes, Dror, Shaw. Parallel random numbers: as easy as 1, 2, 3. SC 2011.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Addressable Gaussian noise field keyed by a 64-bit seed.
//
// Every draw is identified by the address (kind, stream, step, idx) and is an
// independent N(0,1) variate; no state is kept, so any subset of addresses can
// be evaluated in any order on any thread and the values never change.  Draws
// with even/odd idx share one Philox block (Box-Muller pair).
class NoiseField {
 public:
  explicit NoiseField(std::uint64_t seed) : seed_(seed) {}

  // Domain separation tags for the addresses used by the simulator.
  static constexpr std::uint32_t kKindInit = 0x101;    // initial-condition draws
  static constexpr std::uint32_t kKindIdio = 0x202;    // idiosyncratic increments
  static constexpr std::uint32_t kKindCommon = 0x303;  // common-noise increments
  static constexpr std::uint32_t kKindProbe = 0x404;   // assumption-validator probes

  double normal(std::uint32_t kind, std::uint32_t stream, std::uint32_t step,
                std::uint32_t idx) const;

  // Uniform on (0,1), strictly inside the open interval.
  double uniform(std::uint32_t kind, std::uint32_t stream, std::uint32_t step,
                 std::uint32_t idx) const;

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

// View handed to mu0 samplers: atom `a` of the configuration being sampled
// reads i.i.d. N(0,1) variates normal(a, j), j = 0, 1, ...  Each atom draws
// from its own stream so that permuting streams permutes the sample exactly.
class InitNoise {
 public:
  InitNoise(const NoiseField& field, std::span<const std::uint32_t> streams)
      : field_(&field), streams_(streams.begin(), streams.end()) {}

  double normal(std::size_t atom, std::uint32_t draw) const {
    return field_->normal(NoiseField::kKindInit, streams_[atom], 0, draw);
  }

  std::size_t atom_count() const { return streams_.size(); }

 private:
  const NoiseField* field_;
  std::vector<std::uint32_t> streams_;
};

}  // namespace mfp

#endif  // MFP_RNG_HPP
