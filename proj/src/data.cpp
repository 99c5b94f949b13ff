#include "acs/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "acs/binary_io.hpp"
#include "acs/rng.hpp"

namespace acs {

ComplexImage PhantomVolume::complex_slice(std::size_t z) const {
  const auto& m = slices.at(z);
  const auto& p = phase_maps.at(z);
  ComplexImage out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = std::polar(m[i], p[i]);
  return out;
}

std::vector<ComplexImage> PhantomVolume::complex_slices() const {
  std::vector<ComplexImage> out;
  for (std::size_t z = 0; z < num_slices(); ++z) out.push_back(complex_slice(z));
  return out;
}

namespace {

struct Ellipse {
  double cx, cy, a, b, angle, intensity;
};

Ellipse lerp(const Ellipse& e0, const Ellipse& e1, double t) {
  auto l = [t](double x, double y) { return x + (y - x) * t; };
  return {l(e0.cx, e1.cx), l(e0.cy, e1.cy), l(e0.a, e1.a), l(e0.b, e1.b), l(e0.angle, e1.angle),
          l(e0.intensity, e1.intensity)};
}

constexpr std::size_t kSupersample = 4;
constexpr std::size_t kPhaseTerms = 6;

RealImage render(const std::vector<Ellipse>& ellipses, std::size_t size) {
  RealImage img(size, size, 0.0);
  const double n = static_cast<double>(size);
  const double sub = static_cast<double>(kSupersample);
  for (const auto& e : ellipses) {
    const double ca = std::cos(e.angle);
    const double sa = std::sin(e.angle);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        std::size_t hits = 0;
        for (std::size_t sy = 0; sy < kSupersample; ++sy)
          for (std::size_t sx = 0; sx < kSupersample; ++sx) {
            const double v = 2.0 * (static_cast<double>(r) + (static_cast<double>(sy) + 0.5) / sub) / n - 1.0;
            const double u = 2.0 * (static_cast<double>(c) + (static_cast<double>(sx) + 0.5) / sub) / n - 1.0;
            const double du = u - e.cx;
            const double dv = v - e.cy;
            const double p = (du * ca + dv * sa) / e.a;
            const double q = (-du * sa + dv * ca) / e.b;
            if (p * p + q * q <= 1.0) ++hits;
          }
        img(r, c) += e.intensity * static_cast<double>(hits) / (sub * sub);
      }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

RealImage render_phase(const std::array<double, kPhaseTerms>& coef, std::size_t size) {
  RealImage phi(size, size, 0.0);
  double l1 = 0.0;
  for (double c : coef) l1 += std::abs(c);
  if (l1 == 0.0) return phi;
  // Every monomial is bounded by 1 on [-1,1]^2, so this bounds |phi| by pi/4.
  const double scale = (std::numbers::pi / 4.0) / l1;
  const double n = static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double v = 2.0 * (static_cast<double>(r) + 0.5) / n - 1.0;
      const double u = 2.0 * (static_cast<double>(c) + 0.5) / n - 1.0;
      const std::array<double, kPhaseTerms> m = {1.0, u, v, u * v, u * u, v * v};
      double s = 0.0;
      for (std::size_t i = 0; i < kPhaseTerms; ++i) s += coef[i] * m[i];
      phi(r, c) = std::clamp(scale * s, -std::numbers::pi / 4.0, std::numbers::pi / 4.0);
    }
  return phi;
}

}  // namespace

PhantomVolume generate_phantom(std::uint64_t seed, std::size_t size, std::size_t num_slices, std::size_t num_ellipses) {
  if (size != 64 && size != 128)
    throw ParameterError("unsupported phantom size " + std::to_string(size) + " (supported sizes: 64, 128)");
  if (num_slices < 1) throw ParameterError("phantom needs at least one slice");

  CounterRng rng(seed);
  std::vector<Ellipse> first, last;
  for (std::size_t i = 0; i < num_ellipses; ++i) {
    Ellipse e0{};
    Ellipse d{};
    if (i == 0) {
      // Body outline.
      e0 = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(0.6, 0.85), rng.uniform(0.6, 0.85),
            rng.uniform(-0.3, 0.3), rng.uniform(0.55, 0.85)};
      d = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
           rng.uniform(-0.1, 0.1), rng.uniform(-0.05, 0.05)};
    } else {
      e0 = {rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3),
            rng.uniform(0.0, std::numbers::pi), rng.uniform(-0.35, 0.4)};
      d = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06),
           rng.uniform(-0.2, 0.2), rng.uniform(-0.05, 0.05)};
    }
    Ellipse e1{e0.cx + d.cx, e0.cy + d.cy, std::max(e0.a + d.a, 0.04), std::max(e0.b + d.b, 0.04),
               e0.angle + d.angle, e0.intensity + d.intensity};
    first.push_back(e0);
    last.push_back(e1);
  }
  std::array<double, kPhaseTerms> phase0{}, phase1{};
  for (auto& c : phase0) c = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < kPhaseTerms; ++i) phase1[i] = phase0[i] + rng.uniform(-0.2, 0.2);

  PhantomVolume vol;
  vol.seed = seed;
  vol.size = size;
  for (std::size_t z = 0; z < num_slices; ++z) {
    const double t = num_slices > 1 ? static_cast<double>(z) / static_cast<double>(num_slices - 1) : 0.0;
    std::vector<Ellipse> es;
    for (std::size_t i = 0; i < num_ellipses; ++i) es.push_back(lerp(first[i], last[i], t));
    std::array<double, kPhaseTerms> coef{};
    for (std::size_t i = 0; i < kPhaseTerms; ++i) coef[i] = phase0[i] + (phase1[i] - phase0[i]) * t;
    vol.slices.push_back(render(es, size));
    vol.phase_maps.push_back(render_phase(coef, size));
  }
  return vol;
}

std::vector<PhantomVolume> generate_dataset(std::uint64_t seed, std::size_t count, std::size_t size,
                                            std::size_t num_slices) {
  std::vector<PhantomVolume> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_phantom(derive_seed(seed, i), size, num_slices));
  return out;
}

namespace {

constexpr std::string_view kDatasetMagic{"ACSND\0", 6};
constexpr std::uint16_t kDatasetVersion = 1;

}  // namespace

std::vector<std::uint8_t> encode_dataset(const std::vector<PhantomVolume>& volumes) {
  io::Writer w;
  w.put_bytes(kDatasetMagic);
  w.put<std::uint16_t>(kDatasetVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(volumes.size()));
  for (const auto& v : volumes) {
    w.put<std::uint64_t>(v.seed);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.size));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(v.num_slices()));
    for (const auto& s : v.slices) w.put_reals(s.values());
    for (const auto& p : v.phase_maps) w.put_reals(p.values());
  }
  return w.bytes();
}

std::vector<PhantomVolume> decode_dataset(const std::vector<std::uint8_t>& bytes) {
  io::Reader r(bytes);
  if (r.get_bytes(kDatasetMagic.size(), "magic") != kDatasetMagic) throw FormatError("not a dataset file (bad magic)", 0);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version) + " (expected " +
                          std::to_string(kDatasetVersion) + ")",
                      version_at);
  const auto count = r.get<std::uint32_t>("volume count");
  std::vector<PhantomVolume> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    PhantomVolume v;
    v.seed = r.get<std::uint64_t>("volume seed");
    v.size = r.get<std::uint32_t>("volume size");
    const auto n = r.get<std::uint32_t>("slice count");
    const std::size_t px = v.size * v.size;
    for (std::uint32_t z = 0; z < n; ++z) v.slices.emplace_back(v.size, v.size, r.get_reals(px, "magnitude slice"));
    for (std::uint32_t z = 0; z < n; ++z) v.phase_maps.emplace_back(v.size, v.size, r.get_reals(px, "phase slice"));
    out.push_back(std::move(v));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after the last volume", r.offset());
  return out;
}

void save_dataset(const std::string& path, const std::vector<PhantomVolume>& volumes) {
  io::write_file(path, encode_dataset(volumes));
}

std::vector<PhantomVolume> load_dataset(const std::string& path) { return decode_dataset(io::read_file(path)); }

}  // namespace acs
