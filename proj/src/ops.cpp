#include "acs/ops.hpp"

#include <Eigen/Core>
#include <cmath>

#include "acs/errors.hpp"

namespace acs::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

bool wants_grad(const detail::Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
std::vector<double>& grad_of(detail::Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }
const std::vector<double>& data_of(const detail::Node& self, std::size_t i) { return self.parents[i]->data; }

// Elementwise unary op with derivative computed from (input value, output value).
template <typename F, typename D>
Tensor unary(const Tensor& a, const char* name, F f, D dfdx) {
  const auto& x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(a.shape(), std::move(out), name, {a}, [dfdx](detail::Node& self) {
    const auto& xin = data_of(self, 0);
    auto& gx = grad_of(self, 0);
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] += self.grad[i] * dfdx(xin[i], self.data[i]);
  });
}

// Binary op with broadcast of single-valued operands. `da`/`db` return the
// partial derivatives at (a, b).
template <typename F, typename DA, typename DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  const bool a_one = a.size() == 1 && b.size() != 1;
  const bool b_one = b.size() == 1 && a.size() != 1;
  require(a_one || b_one || a.shape() == b.shape(),
          std::string(name) + ": incompatible shapes " + to_string(a.shape()) + " and " +
              to_string(b.shape()));
  const Shape shape = a_one ? b.shape() : a.shape();
  const std::size_t n = numel(shape);
  const auto& av = a.data();
  const auto& bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[a_one ? 0 : i], bv[b_one ? 0 : i]);
  return Tensor::make_result(shape, std::move(out), name, {a, b},
                             [a_one, b_one, da, db](detail::Node& self) {
                               const auto& x = data_of(self, 0);
                               const auto& y = data_of(self, 1);
                               const std::size_t m = self.data.size();
                               if (wants_grad(self, 0)) {
                                 auto& g = grad_of(self, 0);
                                 for (std::size_t i = 0; i < m; ++i)
                                   g[a_one ? 0 : i] +=
                                       self.grad[i] * da(x[a_one ? 0 : i], y[b_one ? 0 : i]);
                               }
                               if (wants_grad(self, 1)) {
                                 auto& g = grad_of(self, 1);
                                 for (std::size_t i = 0; i < m; ++i)
                                   g[b_one ? 0 : i] +=
                                       self.grad[i] * db(x[a_one ? 0 : i], y[b_one ? 0 : i]);
                               }
                             });
}

void require_rank4(const Tensor& t, const char* name) {
  require(t.rank() == 4, std::string(name) + ": expected rank-4 [N,C,H,W], got " + to_string(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double value) {
  return unary(
      a, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s}, "sum", {a}, [](detail::Node& self) {
    auto& g = grad_of(self, 0);
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result({1}, {s * inv}, "mean", {a}, [inv](detail::Node& self) {
    auto& g = grad_of(self, 0);
    const double d = self.grad[0] * inv;
    for (double& v : g) v += d;
  });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, "abs", [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  for (double v : a.data()) require(v >= 0.0, "pow_scalar: negative base");
  return unary(
      a, "pow", [p](double v) { return std::pow(v, p); },
      [p](double v, double) { return v > 0.0 ? p * std::pow(v, p - 1.0) : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
  require(slope > 0.0 && slope < 1.0, "leaky_relu: slope must lie in (0,1)");
  return unary(
      a, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus",
      [](double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Tensor soft_threshold(const Tensor& input, const Tensor& threshold) {
  const bool single = threshold.size() == 1;
  std::size_t channels = 1;
  std::size_t inner = input.size();
  if (!single) {
    require(input.rank() >= 2 && input.dim(1) == threshold.size(),
            "soft_threshold: threshold of shape " + to_string(threshold.shape()) +
                " does not broadcast over channels of " + to_string(input.shape()));
    channels = input.dim(1);
    inner = numel(Shape(input.shape().begin() + 2, input.shape().end()));
  }
  for (double l : threshold.data()) require(l >= 0.0, "soft_threshold: negative threshold");
  const std::size_t outer = input.size() / (channels * inner);

  const auto& x = input.data();
  const auto& lam = threshold.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c) {
      const double l = lam[single ? 0 : c];
      const std::size_t base = (o * channels + c) * inner;
      for (std::size_t i = base; i < base + inner; ++i) {
        const double mag = std::abs(x[i]) - l;
        out[i] = mag > 0.0 ? std::copysign(mag, x[i]) : 0.0;
      }
    }

  return Tensor::make_result(
      input.shape(), std::move(out), "soft_threshold", {input, threshold},
      [outer, channels, inner, single](detail::Node& self) {
        const auto& xin = data_of(self, 0);
        const auto& lin = data_of(self, 1);
        const bool gx = wants_grad(self, 0);
        const bool gl = wants_grad(self, 1);
        std::vector<double>* dx = gx ? &grad_of(self, 0) : nullptr;
        std::vector<double>* dl = gl ? &grad_of(self, 1) : nullptr;
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t c = 0; c < channels; ++c) {
            const double l = lin[single ? 0 : c];
            const std::size_t base = (o * channels + c) * inner;
            double acc = 0.0;
            for (std::size_t i = base; i < base + inner; ++i) {
              if (std::abs(xin[i]) - l <= 0.0) continue;
              if (dx) (*dx)[i] += self.grad[i];
              acc -= xin[i] > 0.0 ? self.grad[i] : -self.grad[i];
            }
            if (dl) (*dl)[single ? 0 : c] += acc;
          }
      });
}

namespace {

struct ConvGeom {
  std::size_t n, cin, h, w, cout, kh, kw, stride, pad, ho, wo;
  std::size_t col_rows() const { return cin * kh * kw; }
  std::size_t col_cols() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Unfold one image [Cin,H,W] into a (Cin*kH*kW) x (Ho*Wo) patch matrix.
void im2col(const double* img, const ConvGeom& g, double* col) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* dst = row + oy * g.wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.wo, 0.0);
            continue;
          }
          const double* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
}

void col2im_add(const double* col, const ConvGeom& g, double* img) {
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double* row = col + ((c * g.kh + ky) * g.kw + kx) * g.col_cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          const double* src = row + oy * g.wo;
          double* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank4(input, "conv2d input");
  require_rank4(kernel, "conv2d kernel");
  require(stride >= 1, "conv2d: stride must be positive");
  ConvGeom g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2),
             kernel.dim(3), stride, padding, 0, 0};
  require(kernel.dim(1) == g.cin, "conv2d: input has " + std::to_string(g.cin) +
                                      " channels but kernel expects " + std::to_string(kernel.dim(1)));
  require(g.kh % 2 == 1 && g.kw % 2 == 1, "conv2d: kernel sizes must be odd");
  require(g.h + 2 * padding >= g.kh && g.w + 2 * padding >= g.kw, "conv2d: kernel larger than padded input");
  require(bias.size() == g.cout, "conv2d: bias must have one entry per output channel");
  g.ho = (g.h + 2 * padding - g.kh) / stride + 1;
  g.wo = (g.w + 2 * padding - g.kw) / stride + 1;

  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * g.col_cols();
  std::vector<double> out(g.n * out_plane);
  std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
  ConstMatMap kmat(kernel.data().data(), g.cout, g.col_rows());
  Eigen::Map<const Eigen::VectorXd> bvec(bias.data().data(), g.cout);
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* img = input.data().data() + n * in_plane;
    const double* colp = img;
    if (!g.pointwise()) {
      im2col(img, g, col.data());
      colp = col.data();
    }
    MatMap o(out.data() + n * out_plane, g.cout, g.col_cols());
    o.noalias() = kmat * ConstMatMap(colp, g.col_rows(), g.col_cols());
    o.colwise() += bvec;
  }

  return Tensor::make_result(
      {g.n, g.cout, g.ho, g.wo}, std::move(out), "conv2d", {input, kernel, bias}, [g](detail::Node& self) {
        const auto& xin = data_of(self, 0);
        const auto& kin = data_of(self, 1);
        const std::size_t in_plane = g.cin * g.h * g.w;
        const std::size_t out_plane = g.cout * g.col_cols();
        ConstMatMap kmat(kin.data(), g.cout, g.col_rows());
        std::vector<double> col(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
        std::vector<double> dcol(g.pointwise() ? 0 : g.col_rows() * g.col_cols());
        const bool gx = wants_grad(self, 0);
        const bool gk = wants_grad(self, 1);
        const bool gb = wants_grad(self, 2);
        for (std::size_t n = 0; n < g.n; ++n) {
          ConstMatMap dout(self.grad.data() + n * out_plane, g.cout, g.col_cols());
          if (gk) {
            const double* colp = xin.data() + n * in_plane;
            if (!g.pointwise()) {
              im2col(colp, g, col.data());
              colp = col.data();
            }
            MatMap dk(grad_of(self, 1).data(), g.cout, g.col_rows());
            dk.noalias() += dout * ConstMatMap(colp, g.col_rows(), g.col_cols()).transpose();
          }
          if (gb) {
            double* db = grad_of(self, 2).data();
            for (std::size_t o = 0; o < g.cout; ++o) {
              const double* row = dout.data() + o * g.col_cols();
              double acc = 0.0;
              for (std::size_t j = 0; j < g.col_cols(); ++j) acc += row[j];
              db[o] += acc;
            }
          }
          if (gx) {
            double* dx = grad_of(self, 0).data() + n * in_plane;
            if (g.pointwise()) {
              MatMap(dx, g.cin, g.col_cols()).noalias() += kmat.transpose() * dout;
            } else {
              MatMap(dcol.data(), g.col_rows(), g.col_cols()).noalias() = kmat.transpose() * dout;
              col2im_add(dcol.data(), g, dx);
            }
          }
        }
      });
}

Tensor downsample2(const Tensor& input) {
  require_rank4(input, "downsample2");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  require(h % 2 == 0 && w % 2 == 0, "downsample2: spatial dimensions must be even, got " + to_string(input.shape()));
  const std::size_t ho = h / 2;
  const std::size_t wo = w / 2;
  const auto& x = input.data();
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c) {
        const double* s = x.data() + p * h * w + 2 * r * w + 2 * c;
        out[(p * ho + r) * wo + c] = 0.25 * (s[0] + s[1] + s[w] + s[w + 1]);
      }
  return Tensor::make_result({input.dim(0), input.dim(1), ho, wo}, std::move(out), "downsample2", {input},
                             [planes, h, w, ho, wo](detail::Node& self) {
                               auto& g = grad_of(self, 0);
                               for (std::size_t p = 0; p < planes; ++p)
                                 for (std::size_t r = 0; r < ho; ++r)
                                   for (std::size_t c = 0; c < wo; ++c) {
                                     const double d = 0.25 * self.grad[(p * ho + r) * wo + c];
                                     double* s = g.data() + p * h * w + 2 * r * w + 2 * c;
                                     s[0] += d;
                                     s[1] += d;
                                     s[w] += d;
                                     s[w + 1] += d;
                                   }
                             });
}

Tensor upsample2(const Tensor& input) {
  require_rank4(input, "upsample2");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2);
  const std::size_t w = input.dim(3);
  const std::size_t ho = 2 * h;
  const std::size_t wo = 2 * w;
  const auto& x = input.data();
  std::vector<double> out(planes * ho * wo);
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < ho; ++r)
      for (std::size_t c = 0; c < wo; ++c) out[(p * ho + r) * wo + c] = x[(p * h + r / 2) * w + c / 2];
  return Tensor::make_result({input.dim(0), input.dim(1), ho, wo}, std::move(out), "upsample2", {input},
                             [planes, h, w, ho, wo](detail::Node& self) {
                               auto& g = grad_of(self, 0);
                               for (std::size_t p = 0; p < planes; ++p)
                                 for (std::size_t r = 0; r < ho; ++r)
                                   for (std::size_t c = 0; c < wo; ++c)
                                     g[(p * h + r / 2) * w + c / 2] += self.grad[(p * ho + r) * wo + c];
                             });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_channels: no inputs");
  for (const auto& t : parts) require_rank4(t, "concat_channels");
  const std::size_t n = parts[0].dim(0);
  const std::size_t h = parts[0].dim(2);
  const std::size_t w = parts[0].dim(3);
  std::vector<std::size_t> offsets;
  std::size_t channels = 0;
  for (const auto& t : parts) {
    require(t.dim(0) == n && t.dim(2) == h && t.dim(3) == w,
            "concat_channels: incompatible shapes " + to_string(parts[0].shape()) + " and " + to_string(t.shape()));
    offsets.push_back(channels);
    channels += t.dim(1);
  }
  const std::size_t hw = h * w;
  std::vector<double> out(n * channels * hw);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const std::size_t c = parts[i].dim(1);
    for (std::size_t b = 0; b < n; ++b)
      std::copy_n(parts[i].data().data() + b * c * hw, c * hw, out.data() + (b * channels + offsets[i]) * hw);
  }
  std::vector<std::size_t> sizes;
  for (const auto& t : parts) sizes.push_back(t.dim(1));
  return Tensor::make_result({n, channels, h, w}, std::move(out), "concat_channels", parts,
                             [n, channels, hw, offsets, sizes](detail::Node& self) {
                               for (std::size_t i = 0; i < sizes.size(); ++i) {
                                 if (!wants_grad(self, i)) continue;
                                 auto& g = grad_of(self, i);
                                 for (std::size_t b = 0; b < n; ++b) {
                                   const double* src = self.grad.data() + (b * channels + offsets[i]) * hw;
                                   double* dst = g.data() + b * sizes[i] * hw;
                                   for (std::size_t j = 0; j < sizes[i] * hw; ++j) dst[j] += src[j];
                                 }
                               }
                             });
}

Tensor slice_channels(const Tensor& input, std::size_t begin, std::size_t count) {
  require_rank4(input, "slice_channels");
  const std::size_t channels = input.dim(1);
  require(begin + count <= channels && count > 0, "slice_channels: channel range out of bounds");
  const std::size_t n = input.dim(0);
  const std::size_t hw = input.dim(2) * input.dim(3);
  std::vector<double> out(n * count * hw);
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(input.data().data() + (b * channels + begin) * hw, count * hw, out.data() + b * count * hw);
  return Tensor::make_result({n, count, input.dim(2), input.dim(3)}, std::move(out), "slice_channels", {input},
                             [n, channels, begin, count, hw](detail::Node& self) {
                               auto& g = grad_of(self, 0);
                               for (std::size_t b = 0; b < n; ++b) {
                                 const double* src = self.grad.data() + b * count * hw;
                                 double* dst = g.data() + (b * channels + begin) * hw;
                                 for (std::size_t j = 0; j < count * hw; ++j) dst[j] += src[j];
                               }
                             });
}

Tensor complex_magnitude(const Tensor& x) {
  require_rank4(x, "complex_magnitude");
  require(x.dim(1) == 2, "complex_magnitude: expected 2 channels (re, im)");
  const std::size_t n = x.dim(0);
  const std::size_t hw = x.dim(2) * x.dim(3);
  const auto& v = x.data();
  std::vector<double> out(n * hw);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] = std::hypot(v[2 * b * hw + i], v[(2 * b + 1) * hw + i]);
  return Tensor::make_result({n, 1, x.dim(2), x.dim(3)}, std::move(out), "complex_magnitude", {x},
                             [n, hw](detail::Node& self) {
                               const auto& v = data_of(self, 0);
                               auto& g = grad_of(self, 0);
                               for (std::size_t b = 0; b < n; ++b)
                                 for (std::size_t i = 0; i < hw; ++i) {
                                   const double m = self.data[b * hw + i];
                                   if (m == 0.0) continue;
                                   const double d = self.grad[b * hw + i] / m;
                                   g[2 * b * hw + i] += d * v[2 * b * hw + i];
                                   g[(2 * b + 1) * hw + i] += d * v[(2 * b + 1) * hw + i];
                                 }
                             });
}

}  // namespace acs::ad
