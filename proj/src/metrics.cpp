#include "acs/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace acs {
namespace {

constexpr std::array<double, 5> kStandardWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

// Valid-mode separable filtering.
RealImage filter_valid(const RealImage& x, const std::vector<double>& g) {
  const std::size_t k = g.size();
  const std::size_t ho = x.height() - k + 1;
  const std::size_t wo = x.width() - k + 1;
  RealImage rows(x.height(), wo);
  for (std::size_t r = 0; r < x.height(); ++r)
    for (std::size_t c = 0; c < wo; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * x(r, c + i);
      rows(r, c) = s;
    }
  RealImage out(ho, wo);
  for (std::size_t r = 0; r < ho; ++r)
    for (std::size_t c = 0; c < wo; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < k; ++i) s += g[i] * rows(r + i, c);
      out(r, c) = s;
    }
  return out;
}

RealImage pool2(const RealImage& x) {
  RealImage out(x.height() / 2, x.width() / 2);
  for (std::size_t r = 0; r < out.height(); ++r)
    for (std::size_t c = 0; c < out.width(); ++c)
      out(r, c) = 0.25 * (x(2 * r, 2 * c) + x(2 * r, 2 * c + 1) + x(2 * r + 1, 2 * c) + x(2 * r + 1, 2 * c + 1));
  return out;
}

struct SsimMeans {
  double ssim;
  double cs;
};

double image_mean(const RealImage& x) {
  return std::accumulate(x.values().begin(), x.values().end(), 0.0) / static_cast<double>(x.size());
}

SsimMeans ssim_means(const RealImage& t, const RealImage& y, const std::vector<double>& g, double c1, double c2) {
  // Second moments are taken about the image means.
  const double ct = image_mean(t);
  const double cy = image_mean(y);
  RealImage ts(t.height(), t.width()), ys(t.height(), t.width());
  RealImage tt(t.height(), t.width()), yy(t.height(), t.width()), ty(t.height(), t.width());
  for (std::size_t i = 0; i < t.size(); ++i) {
    ts[i] = t[i] - ct;
    ys[i] = y[i] - cy;
    tt[i] = ts[i] * ts[i];
    yy[i] = ys[i] * ys[i];
    ty[i] = ts[i] * ys[i];
  }
  const auto mts = filter_valid(ts, g);
  const auto mys = filter_valid(ys, g);
  const auto stt = filter_valid(tt, g);
  const auto syy = filter_valid(yy, g);
  const auto sty = filter_valid(ty, g);
  double s_sum = 0.0;
  double cs_sum = 0.0;
  for (std::size_t i = 0; i < mts.size(); ++i) {
    const double mt = mts[i] + ct;
    const double my = mys[i] + cy;
    const double vt = stt[i] - mts[i] * mts[i];
    const double vy = syy[i] - mys[i] * mys[i];
    const double cv = sty[i] - mts[i] * mys[i];
    const double l = (2.0 * mt * my + c1) / (mt * mt + my * my + c1);
    const double cs = (2.0 * cv + c2) / (vt + vy + c2);
    s_sum += l * cs;
    cs_sum += cs;
  }
  const auto n = static_cast<double>(mts.size());
  return {s_sum / n, cs_sum / n};
}

}  // namespace

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  require(size % 2 == 1, "gaussian_window: size must be odd");
  std::vector<double> g(size);
  const double c = static_cast<double>(size / 2);
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(g.begin(), g.end(), 0.0);
  for (double& v : g) v /= s;
  return g;
}

std::vector<double> resolve_scale_weights(const SsimParams& p) {
  if (!p.scale_weights.empty()) {
    require(p.scale_weights.size() == p.msssim_scales, "scale_weights must have one entry per scale");
    return p.scale_weights;
  }
  require(p.msssim_scales >= 1 && p.msssim_scales <= kStandardWeights.size(),
          "msssim_scales must lie in [1, 5] when using the standard weights");
  std::vector<double> w(kStandardWeights.begin(), kStandardWeights.begin() + static_cast<long>(p.msssim_scales));
  const double s = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& v : w) v /= s;
  return w;
}

double dynamic_range(const RealImage& t, const RealImage& y, bool union_range) {
  auto [tmin, tmax] = std::minmax_element(t.values().begin(), t.values().end());
  double lo = *tmin;
  double hi = *tmax;
  if (union_range) {
    auto [ymin, ymax] = std::minmax_element(y.values().begin(), y.values().end());
    lo = std::min(lo, *ymin);
    hi = std::max(hi, *ymax);
  }
  return std::max(hi - lo, 1e-12);
}

void check_ssim_geometry(const RealImage& t, const RealImage& y, const SsimParams& p, std::size_t scales) {
  require(t.same_shape(y), "ssim: images differ in shape");
  require(p.window % 2 == 1, "ssim: window size must be odd");
  const std::size_t need = p.window << (scales - 1);
  require(std::min(t.height(), t.width()) >= need,
          "ssim: image " + std::to_string(t.height()) + "x" + std::to_string(t.width()) +
              " too small for a window pyramid needing " + std::to_string(need) + " pixels");
  if (scales > 1) {
    const std::size_t step = std::size_t{1} << (scales - 1);
    require(t.height() % step == 0 && t.width() % step == 0, "ms_ssim: dimensions must be divisible by 2^(scales-1)");
  }
}

double ssim(const RealImage& t, const RealImage& y, const SsimParams& p) {
  check_ssim_geometry(t, y, p, 1);
  const double L = dynamic_range(t, y, p.union_range);
  const double c1 = (p.k1 * L) * (p.k1 * L);
  const double c2 = (p.k2 * L) * (p.k2 * L);
  return ssim_means(t, y, gaussian_window(p.window, p.gaussian_sigma), c1, c2).ssim;
}

double ms_ssim(const RealImage& t, const RealImage& y, const SsimParams& p) {
  check_ssim_geometry(t, y, p, p.msssim_scales);
  const auto w = resolve_scale_weights(p);
  const double L = dynamic_range(t, y, p.union_range);
  const double c1 = (p.k1 * L) * (p.k1 * L);
  const double c2 = (p.k2 * L) * (p.k2 * L);
  const auto g = gaussian_window(p.window, p.gaussian_sigma);
  RealImage a = t;
  RealImage b = y;
  double result = 1.0;
  for (std::size_t j = 0; j < p.msssim_scales; ++j) {
    const auto m = ssim_means(a, b, g, c1, c2);
    const bool last = j + 1 == p.msssim_scales;
    result *= std::pow(std::max(last ? m.ssim : m.cs, 0.0), w[j]);
    if (!last) {
      a = pool2(a);
      b = pool2(b);
    }
  }
  return result;
}

double nmse(const RealImage& t, const RealImage& y) {
  require(t.same_shape(y), "nmse: images differ in shape");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += (t[i] - y[i]) * (t[i] - y[i]);
    den += t[i] * t[i];
  }
  return den > 0.0 ? num / den : (num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
}

double psnr(const RealImage& t, const RealImage& y) {
  require(t.same_shape(y), "psnr: images differ in shape");
  double mse = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) mse += (t[i] - y[i]) * (t[i] - y[i]);
  mse /= static_cast<double>(t.size());
  const double peak = *std::max_element(t.values().begin(), t.values().end());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace acs
