#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acs/image.hpp"

namespace acs {

struct PhantomVolume {
  std::vector<RealImage> slices;      // magnitude in [0, 1]
  std::vector<RealImage> phase_maps;  // radians in [-pi/4, pi/4]
  std::uint64_t seed = 0;
  std::size_t size = 0;

  std::size_t num_slices() const { return slices.size(); }
  /// magnitude * exp(i * phase) for slice z.
  ComplexImage complex_slice(std::size_t z) const;
  std::vector<ComplexImage> complex_slices() const;

  friend bool operator==(const PhantomVolume&, const PhantomVolume&) = default;
};

inline constexpr std::size_t kDefaultEllipses = 6;

/// Sum of antialiased ellipses whose centers, axes, orientations and
/// intensities move linearly from the first to the last slice, clamped to
/// [0, 1], with a smooth quadratic phase bounded by pi/4. Pure in its
/// arguments. Sizes 64 and 128 only.
PhantomVolume generate_phantom(std::uint64_t seed, std::size_t size, std::size_t num_slices,
                               std::size_t num_ellipses = kDefaultEllipses);

/// Volumes with seeds derive_seed(seed, i), i = 0..count-1.
std::vector<PhantomVolume> generate_dataset(std::uint64_t seed, std::size_t count, std::size_t size,
                                            std::size_t num_slices);

std::vector<std::uint8_t> encode_dataset(const std::vector<PhantomVolume>& volumes);
/// Throws FormatError (with byte offset) on bad magic, version or truncation.
std::vector<PhantomVolume> decode_dataset(const std::vector<std::uint8_t>& bytes);

void save_dataset(const std::string& path, const std::vector<PhantomVolume>& volumes);
std::vector<PhantomVolume> load_dataset(const std::string& path);

}  // namespace acs
