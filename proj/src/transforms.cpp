#include "acs/transforms.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>

namespace acs {
namespace {

// FFTW plans are cached per (height, width, direction). Planning is not
// thread-safe in FFTW, so plan creation and the shared buffers sit behind a
// mutex; executions for 2D images at desk scale are short.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  ComplexImage run(const ComplexImage& in, int direction) {
    std::lock_guard lock(mutex_);
    auto& entry = get(in.height(), in.width(), direction);
    static_assert(sizeof(fftw_complex) == sizeof(cplx));
    std::copy(in.values().begin(), in.values().end(), reinterpret_cast<cplx*>(entry.in));
    fftw_execute(entry.plan);
    ComplexImage out(in.height(), in.width());
    std::copy_n(reinterpret_cast<const cplx*>(entry.out), out.size(), out.values().begin());
    return out;
  }

 private:
  struct Entry {
    fftw_complex* in = nullptr;
    fftw_complex* out = nullptr;
    fftw_plan plan = nullptr;
    Entry() = default;
    Entry(const Entry&) = delete;
    Entry& operator=(const Entry&) = delete;
    ~Entry() {
      if (plan) fftw_destroy_plan(plan);
      fftw_free(in);
      fftw_free(out);
    }
  };

  Entry& get(std::size_t h, std::size_t w, int direction) {
    auto key = std::make_tuple(h, w, direction);
    auto it = plans_.find(key);
    if (it != plans_.end()) return *it->second;
    auto e = std::make_unique<Entry>();
    e->in = fftw_alloc_complex(h * w);
    e->out = fftw_alloc_complex(h * w);
    e->plan = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), e->in, e->out, direction, FFTW_ESTIMATE);
    return *plans_.emplace(key, std::move(e)).first->second;
  }

  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, std::unique_ptr<Entry>> plans_;
};

// Circular shift moving index i to (i + shift) mod n along both axes.
ComplexImage roll(const ComplexImage& x, std::size_t shift_r, std::size_t shift_c) {
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  ComplexImage out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const std::size_t rr = (r + shift_r) % h;
    for (std::size_t c = 0; c < w; ++c) out(rr, (c + shift_c) % w) = x(r, c);
  }
  return out;
}

ComplexImage centered(const ComplexImage& x, int direction) {
  const std::size_t h = x.height();
  const std::size_t w = x.width();
  if (x.size() == 0) return x;
  // ifftshift moves (H/2, W/2) to the origin; fftshift moves it back.
  auto shifted = roll(x, h - h / 2, w - w / 2);
  auto spectrum = PlanCache::instance().run(shifted, direction);
  auto out = roll(spectrum, h / 2, w / 2);
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (auto& v : out.values()) v *= norm;
  return out;
}

}  // namespace

ComplexImage fft2c(const ComplexImage& image) { return centered(image, FFTW_FORWARD); }

ComplexImage ifft2c(const ComplexImage& kspace) { return centered(kspace, FFTW_BACKWARD); }

RealImage WaveletCoeffs::approximation() const {
  const std::size_t h = height() >> levels_;
  const std::size_t w = width() >> levels_;
  RealImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = pyramid_(r, c);
  return out;
}

RealImage WaveletCoeffs::detail(std::size_t level, Band band) const {
  require(level >= 1 && level <= levels_, "WaveletCoeffs::detail: level out of range");
  const std::size_t h = height() >> level;
  const std::size_t w = width() >> level;
  const std::size_t r0 = band == Band::HL ? 0 : h;
  const std::size_t c0 = band == Band::LH ? 0 : w;
  RealImage out(h, w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out(r, c) = pyramid_(r0 + r, c0 + c);
  return out;
}

WaveletCoeffs dwt2(const RealImage& image, std::size_t levels) {
  const std::size_t step = std::size_t{1} << levels;
  require(levels >= 1, "dwt2: at least one level required");
  require(image.height() % step == 0 && image.width() % step == 0,
          "dwt2: image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
              " not divisible by 2^" + std::to_string(levels));
  RealImage pyr = image;
  RealImage tmp = image;
  std::size_t h = image.height();
  std::size_t w = image.width();
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t hh = h / 2;
    const std::size_t hw = w / 2;
    for (std::size_t r = 0; r < hh; ++r)
      for (std::size_t c = 0; c < hw; ++c) {
        const double a = pyr(2 * r, 2 * c);
        const double b = pyr(2 * r, 2 * c + 1);
        const double cc = pyr(2 * r + 1, 2 * c);
        const double d = pyr(2 * r + 1, 2 * c + 1);
        tmp(r, c) = 0.5 * (a + b + cc + d);
        tmp(hh + r, c) = 0.5 * (a + b - cc - d);       // LH
        tmp(r, hw + c) = 0.5 * (a - b + cc - d);       // HL
        tmp(hh + r, hw + c) = 0.5 * (a - b - cc + d);  // HH
      }
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) pyr(r, c) = tmp(r, c);
    h = hh;
    w = hw;
  }
  return WaveletCoeffs(levels, std::move(pyr));
}

RealImage idwt2(const WaveletCoeffs& coeffs) {
  RealImage img = coeffs.pyramid();
  RealImage tmp = img;
  for (std::size_t l = coeffs.levels(); l-- > 0;) {
    const std::size_t hh = img.height() >> (l + 1);
    const std::size_t hw = img.width() >> (l + 1);
    for (std::size_t r = 0; r < hh; ++r)
      for (std::size_t c = 0; c < hw; ++c) {
        const double ll = img(r, c);
        const double lh = img(hh + r, c);
        const double hl = img(r, hw + c);
        const double hhv = img(hh + r, hw + c);
        tmp(2 * r, 2 * c) = 0.5 * (ll + lh + hl + hhv);
        tmp(2 * r, 2 * c + 1) = 0.5 * (ll + lh - hl - hhv);
        tmp(2 * r + 1, 2 * c) = 0.5 * (ll - lh + hl - hhv);
        tmp(2 * r + 1, 2 * c + 1) = 0.5 * (ll - lh - hl + hhv);
      }
    for (std::size_t r = 0; r < 2 * hh; ++r)
      for (std::size_t c = 0; c < 2 * hw; ++c) img(r, c) = tmp(r, c);
  }
  return img;
}

}  // namespace acs
