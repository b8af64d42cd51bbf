#pragma once

#include <array>
#include <cstdint>

namespace mfk {

/// Philox4x32-10 counter-based generator (Salmon et al.). Stateless: the same
/// (key, counter) always yields the same four words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Separate random domains keyed off one master seed.
enum class NoiseDomain : std::uint32_t {
  dynamics = 1,
  initial_state = 2,
  feynman_kac = 3,
  bootstrap = 4,
  reference = 5,
  probes = 6,
  projections = 7,
};

/// Maps (stream, mode, step) to a standard normal draw. Draws for distinct
/// counters are independent; identical counters reproduce bit-identically
/// regardless of call order or thread count.
class NoiseDriver {
 public:
  NoiseDriver() = default;
  NoiseDriver(std::uint64_t master_seed, NoiseDomain domain);

  std::uint64_t master_seed() const noexcept { return seed_; }
  NoiseDomain domain() const noexcept { return domain_; }

  double normal(std::uint64_t stream, std::uint32_t mode, std::uint64_t step) const noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform(std::uint64_t stream, std::uint32_t mode, std::uint64_t step) const noexcept;

  friend bool operator==(const NoiseDriver&, const NoiseDriver&) = default;

 private:
  std::uint64_t seed_ = 0;
  NoiseDomain domain_ = NoiseDomain::dynamics;
  std::array<std::uint32_t, 2> key_{};
};

}  // namespace mfk
