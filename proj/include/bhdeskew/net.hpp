#pragma once

// The regression network that maps a composite loop image plus its four
// raw-scale extrema to a normalized skew estimate. Three 3x3 conv blocks
// (10/20/40 channels, each LeakyReLU + 2x2 max-pool) feed a 512-wide hidden
// layer and a single linear output. Everything is double precision with
// hand-written forward/backward passes so results are bit-reproducible: no
// BLAS, no reassociating reductions, fixed accumulation order throughout.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bhdeskew/common.hpp"
#include "bhdeskew/raster.hpp"

namespace bhdeskew {

inline constexpr char kArchTag[] = "bhdeskew-micronet-v1";
inline constexpr int kConv1Ch = 10;
inline constexpr int kConv2Ch = 20;
inline constexpr int kConv3Ch = 40;
inline constexpr int kHidden = 512;
inline constexpr int kScalarCount = 4;
inline constexpr double kLeakySlope = 0.01;

// Offsets of each parameter grid inside the flat theta vector. Weight
// layouts: conv w[out][in][ky][kx] row-major, fc w[out][in] row-major.
struct NetLayout {
  int side = 0;
  std::size_t flat = 0;  // flattened conv output: 40 * (side/8)^2
  std::size_t c1w = 0, c1b = 0, c2w = 0, c2b = 0, c3w = 0, c3b = 0;
  std::size_t f1w = 0, f1b = 0, f2w = 0, f2b = 0;
  std::size_t total = 0;

  std::size_t fc1_in() const { return flat + kScalarCount; }

  static NetLayout make(int side) {
    if (side < 16 || side % 8 != 0) throw std::invalid_argument("NetLayout: side must be a multiple of 8 and >= 16, got " + std::to_string(side));
    NetLayout l;
    l.side = side;
    const std::size_t eighth = std::size_t(side) / 8;
    l.flat = std::size_t(kConv3Ch) * eighth * eighth;
    std::size_t at = 0;
    auto grab = [&](std::size_t count) { const std::size_t off = at; at += count; return off; };
    l.c1w = grab(std::size_t(kConv1Ch) * 1 * 9);
    l.c1b = grab(kConv1Ch);
    l.c2w = grab(std::size_t(kConv2Ch) * kConv1Ch * 9);
    l.c2b = grab(kConv2Ch);
    l.c3w = grab(std::size_t(kConv3Ch) * kConv2Ch * 9);
    l.c3b = grab(kConv3Ch);
    l.f1w = grab(std::size_t(kHidden) * l.fc1_in());
    l.f1b = grab(kHidden);
    l.f2w = grab(kHidden);
    l.f2b = grab(1);
    l.total = at;
    return l;
  }
};

// A trained (or trainable) model: flat parameter vector plus the input
// normalization it was fitted under. Pixels are fed as value/255; the four
// scalars are z-scored with the recorded statistics; the network output is
// skew / target_scale, so callers multiply by target_scale to get back to
// interpolated-index units.
struct ModelParams {
  int side = 256;
  std::vector<double> theta;
  std::array<double, 4> scalar_mean{0.0, 0.0, 0.0, 0.0};
  std::array<double, 4> scalar_scale{1.0, 1.0, 1.0, 1.0};
  double target_scale = 1.0;
  std::string arch = kArchTag;

  NetLayout layout() const { return NetLayout::make(side); }

  void check() const {
    if (arch != kArchTag) throw std::invalid_argument("ModelParams: unknown architecture '" + arch + "'");
    const NetLayout l = NetLayout::make(side);
    if (theta.size() != l.total) throw std::invalid_argument("ModelParams: parameter vector has " + std::to_string(theta.size()) + " entries, the side-" + std::to_string(side) + " architecture needs " + std::to_string(l.total));
    for (int k = 0; k < kScalarCount; ++k) {
      if (!std::isfinite(scalar_mean[k])) throw std::invalid_argument("ModelParams: scalar_mean is not finite");
      if (!(scalar_scale[k] > 0.0) || !std::isfinite(scalar_scale[k])) throw std::invalid_argument("ModelParams: scalar_scale must be positive and finite");
    }
    if (!(target_scale > 0.0) || !std::isfinite(target_scale)) throw std::invalid_argument("ModelParams: target_scale must be positive and finite");
    for (double v : theta)
      if (!std::isfinite(v)) throw std::invalid_argument("ModelParams: non-finite parameter value");
  }
};

// Kaiming-uniform fan-in init for every weight grid (conv fan-in counts the
// 3x3 patch), zero biases. Grids are drawn in layout order so the parameter
// stream for a given seed is pinned.
inline ModelParams init_params(std::uint64_t seed, int side) {
  const NetLayout l = NetLayout::make(side);
  ModelParams p;
  p.side = side;
  p.theta.assign(l.total, 0.0);
  Rng rng(seed);
  auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (std::size_t k = 0; k < count; ++k) p.theta[off + k] = rng.range(-bound, bound);
  };
  fill(l.c1w, std::size_t(kConv1Ch) * 9, 1 * 9);
  fill(l.c2w, std::size_t(kConv2Ch) * kConv1Ch * 9, std::size_t(kConv1Ch) * 9);
  fill(l.c3w, std::size_t(kConv3Ch) * kConv2Ch * 9, std::size_t(kConv2Ch) * 9);
  fill(l.f1w, std::size_t(kHidden) * l.fc1_in(), l.fc1_in());
  fill(l.f2w, kHidden, kHidden);
  return p;
}

namespace detail {

inline double lrelu(double v) { return v > 0.0 ? v : kLeakySlope * v; }
// Derivative at exactly 0 is pinned to the negative slope.
inline double lrelu_grad(double v) { return v > 0.0 ? 1.0 : kLeakySlope; }

// Dot product with eight fixed accumulator lanes (lane = index mod 8,
// combined pairwise). The association never depends on length or build
// flags we change, and the lane loop vectorizes without -ffast-math.
inline double dot8(const double* a, const double* b, std::size_t n) {
  double s[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    for (int k = 0; k < 8; ++k) s[k] += a[i + k] * b[i + k];
  for (int k = 0; k < 8 && i < n; ++i, ++k) s[k] += a[i] * b[i];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

// z[co] = bias[co] + sum_{ci,ky,kx} w * in (stride 1, zero padding 1),
// expressed as shifted-plane accumulation so the inner loop is a plain axpy.
inline void conv3x3_forward(const double* in, int cin, int n, const double* w, const double* bias, int cout, double* out) {
  const std::size_t plane = std::size_t(n) * n;
  for (int co = 0; co < cout; ++co) {
    double* op = out + std::size_t(co) * plane;
    std::fill(op, op + plane, bias[co]);
    for (int ci = 0; ci < cin; ++ci) {
      const double* ip = in + std::size_t(ci) * plane;
      const double* wk = w + (std::size_t(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = wk[ky * 3 + kx];
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = dy < 0 ? 1 : 0, y1 = n - (dy > 0 ? 1 : 0);
          const int x0 = dx < 0 ? 1 : 0, x1 = n - (dx > 0 ? 1 : 0);
          for (int y = y0; y < y1; ++y) {
            double* orow = op + std::size_t(y) * n;
            const double* irow = ip + std::size_t(y + dy) * n;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x + dx];
          }
        }
      }
    }
  }
}

// Gradient of conv3x3_forward: accumulates dW/db and, when din is non-null,
// the input gradient. Loop structure mirrors the forward pass so every
// accumulation order is fixed.
inline void conv3x3_backward(const double* in, int cin, int n, const double* w, int cout, const double* dz, double* dw, double* db, double* din) {
  const std::size_t plane = std::size_t(n) * n;
  for (int co = 0; co < cout; ++co) {
    const double* zp = dz + std::size_t(co) * plane;
    double bsum = 0.0;
    for (std::size_t k = 0; k < plane; ++k) bsum += zp[k];
    db[co] += bsum;
    for (int ci = 0; ci < cin; ++ci) {
      const double* ip = in + std::size_t(ci) * plane;
      double* dp = din ? din + std::size_t(ci) * plane : nullptr;
      const std::size_t wo = (std::size_t(co) * cin + ci) * 9;
      const double* wk = w + wo;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const int dy = ky - 1, dx = kx - 1;
          const int y0 = dy < 0 ? 1 : 0, y1 = n - (dy > 0 ? 1 : 0);
          const int x0 = dx < 0 ? 1 : 0, x1 = n - (dx > 0 ? 1 : 0);
          double wacc = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* zrow = zp + std::size_t(y) * n;
            const double* irow = ip + std::size_t(y + dy) * n;
            wacc += dot8(zrow + x0, irow + x0 + dx, std::size_t(x1 - x0));
          }
          dw[wo + std::size_t(ky) * 3 + kx] += wacc;
          if (dp) {
            const double wv = wk[ky * 3 + kx];
            for (int y = y0; y < y1; ++y) {
              const double* zrow = zp + std::size_t(y) * n;
              double* drow = dp + std::size_t(y + dy) * n;
              for (int x = x0; x < x1; ++x) drow[x + dx] += wv * zrow[x];
            }
          }
        }
      }
    }
  }
}

// LeakyReLU then 2x2/2 max-pool over each channel of z (pre-activation).
// Writes the pooled activations to out and the winning pre-pool linear index
// (into the whole z buffer) to idx; ties keep the lowest linear index.
inline void lrelu_maxpool(const double* z, int ch, int n, double* out, std::int32_t* idx) {
  const int half = n / 2;
  const std::size_t plane = std::size_t(n) * n;
  const std::size_t oplane = std::size_t(half) * half;
  for (int c = 0; c < ch; ++c) {
    const std::size_t zbase = std::size_t(c) * plane;
    for (int oy = 0; oy < half; ++oy) {
      for (int ox = 0; ox < half; ++ox) {
        const std::size_t corner = zbase + std::size_t(2 * oy) * n + std::size_t(2 * ox);
        const std::size_t cand[4] = {corner, corner + 1, corner + n, corner + n + 1};
        std::size_t best = cand[0];
        double besta = lrelu(z[cand[0]]);
        for (int k = 1; k < 4; ++k) {
          const double a = lrelu(z[cand[k]]);
          if (a > besta) {
            besta = a;
            best = cand[k];
          }
        }
        const std::size_t o = std::size_t(c) * oplane + std::size_t(oy) * half + ox;
        out[o] = besta;
        idx[o] = std::int32_t(best);
      }
    }
  }
}

inline void check_finite(const double* v, std::size_t n, const char* layer) {
  for (std::size_t k = 0; k < n; ++k)
    if (!std::isfinite(v[k])) throw numeric_error(std::string("forward pass produced a non-finite value in ") + layer);
}

}  // namespace detail

// Per-sample forward intermediates kept for the backward pass. Reusable
// across samples; buffers are resized on first use.
struct Trace {
  std::vector<double> x;                  // input pixels / 255
  std::array<double, 4> sc{};             // z-scored scalars
  std::vector<double> z1, z2, z3;         // conv pre-activations
  std::vector<double> p1, p2;             // pooled activations (conv inputs)
  std::vector<std::int32_t> i1, i2, i3;   // pool argmax, linear into z1/z2/z3
  std::vector<double> xcat;               // [flattened pool3, scalars]
  std::vector<double> z4, a4;             // hidden pre/post activation
  double y = 0.0;
};

// Forward pass recording everything backward needs. Throws numeric_error
// naming the first layer whose output goes non-finite.
inline double forward_trace(const ModelParams& p, const LoopImage& img, Trace& t) {
  const NetLayout l = p.layout();
  const int n = p.side;
  if (img.side != n) throw std::invalid_argument("forward: image side " + std::to_string(img.side) + " does not match the model side " + std::to_string(n));
  const std::size_t plane = std::size_t(n) * n;
  if (img.pixels.size() != plane) throw std::invalid_argument("forward: pixel buffer has " + std::to_string(img.pixels.size()) + " bytes, expected " + std::to_string(plane));
  if (p.theta.size() != l.total) throw std::invalid_argument("forward: parameter vector has " + std::to_string(p.theta.size()) + " entries, expected " + std::to_string(l.total));
  const double* th = p.theta.data();

  t.x.resize(plane);
  for (std::size_t k = 0; k < plane; ++k) t.x[k] = double(img.pixels[k]) / 255.0;
  const std::array<double, 4> raw = img.scalars.as_array();
  for (int k = 0; k < kScalarCount; ++k) {
    t.sc[k] = (raw[k] - p.scalar_mean[k]) / p.scalar_scale[k];
    if (!std::isfinite(t.sc[k])) throw numeric_error("forward pass produced a non-finite value in the scalar inputs");
  }

  const int n2 = n / 2, n4 = n / 4, n8 = n / 8;
  t.z1.resize(std::size_t(kConv1Ch) * plane);
  detail::conv3x3_forward(t.x.data(), 1, n, th + l.c1w, th + l.c1b, kConv1Ch, t.z1.data());
  detail::check_finite(t.z1.data(), t.z1.size(), "conv1");
  t.p1.resize(std::size_t(kConv1Ch) * n2 * n2);
  t.i1.resize(t.p1.size());
  detail::lrelu_maxpool(t.z1.data(), kConv1Ch, n, t.p1.data(), t.i1.data());

  t.z2.resize(std::size_t(kConv2Ch) * n2 * n2);
  detail::conv3x3_forward(t.p1.data(), kConv1Ch, n2, th + l.c2w, th + l.c2b, kConv2Ch, t.z2.data());
  detail::check_finite(t.z2.data(), t.z2.size(), "conv2");
  t.p2.resize(std::size_t(kConv2Ch) * n4 * n4);
  t.i2.resize(t.p2.size());
  detail::lrelu_maxpool(t.z2.data(), kConv2Ch, n2, t.p2.data(), t.i2.data());

  t.z3.resize(std::size_t(kConv3Ch) * n4 * n4);
  detail::conv3x3_forward(t.p2.data(), kConv2Ch, n4, th + l.c3w, th + l.c3b, kConv3Ch, t.z3.data());
  detail::check_finite(t.z3.data(), t.z3.size(), "conv3");
  t.xcat.resize(l.fc1_in());
  t.i3.resize(l.flat);
  detail::lrelu_maxpool(t.z3.data(), kConv3Ch, n4, t.xcat.data(), t.i3.data());
  (void)n8;
  for (int k = 0; k < kScalarCount; ++k) t.xcat[l.flat + k] = t.sc[k];

  t.z4.resize(kHidden);
  t.a4.resize(kHidden);
  const std::size_t fin = l.fc1_in();
  for (int i = 0; i < kHidden; ++i) t.z4[i] = th[l.f1b + i] + detail::dot8(th + l.f1w + std::size_t(i) * fin, t.xcat.data(), fin);
  detail::check_finite(t.z4.data(), kHidden, "fc1");
  for (int i = 0; i < kHidden; ++i) t.a4[i] = detail::lrelu(t.z4[i]);

  t.y = th[l.f2b] + detail::dot8(th + l.f2w, t.a4.data(), kHidden);
  detail::check_finite(&t.y, 1, "fc2");
  return t.y;
}

inline double forward(const ModelParams& p, const LoopImage& img) {
  Trace t;
  return forward_trace(p, img, t);
}

// Accumulates d(loss)/d(theta) for one sample into grad, given dy = dL/dy.
// grad must already have layout().total entries.
inline void backward_into(const ModelParams& p, const Trace& t, double dy, std::vector<double>& grad) {
  const NetLayout l = p.layout();
  if (grad.size() != l.total) throw std::invalid_argument("backward: gradient vector has " + std::to_string(grad.size()) + " entries, expected " + std::to_string(l.total));
  const double* th = p.theta.data();
  double* g = grad.data();
  const int n = p.side, n2 = n / 2, n4 = n / 4;
  const std::size_t fin = l.fc1_in();

  // Output layer.
  g[l.f2b] += dy;
  std::vector<double> dz4(kHidden);
  for (int i = 0; i < kHidden; ++i) {
    g[l.f2w + i] += dy * t.a4[i];
    dz4[i] = dy * th[l.f2w + i] * detail::lrelu_grad(t.z4[i]);
  }

  // Hidden layer: weight rows are axpy'd with the shared input vector, and
  // the input gradient accumulates row by row in index order.
  std::vector<double> dxcat(fin, 0.0);
  for (int i = 0; i < kHidden; ++i) {
    const double d = dz4[i];
    g[l.f1b + i] += d;
    double* wrow = g + l.f1w + std::size_t(i) * fin;
    const double* x = t.xcat.data();
    for (std::size_t j = 0; j < fin; ++j) wrow[j] += d * x[j];
    const double* w = th + l.f1w + std::size_t(i) * fin;
    for (std::size_t j = 0; j < fin; ++j) dxcat[j] += d * w[j];
  }

  // Pool 3 scatter, LeakyReLU, conv3.
  std::vector<double> dz3(std::size_t(kConv3Ch) * n4 * n4, 0.0);
  for (std::size_t k = 0; k < l.flat; ++k) dz3[std::size_t(t.i3[k])] += dxcat[k];
  for (std::size_t k = 0; k < dz3.size(); ++k) dz3[k] *= detail::lrelu_grad(t.z3[k]);
  std::vector<double> dp2(std::size_t(kConv2Ch) * n4 * n4, 0.0);
  detail::conv3x3_backward(t.p2.data(), kConv2Ch, n4, th + l.c3w, kConv3Ch, dz3.data(), g + l.c3w, g + l.c3b, dp2.data());

  // Pool 2, conv2.
  std::vector<double> dz2(std::size_t(kConv2Ch) * n2 * n2, 0.0);
  for (std::size_t k = 0; k < dp2.size(); ++k) dz2[std::size_t(t.i2[k])] += dp2[k];
  for (std::size_t k = 0; k < dz2.size(); ++k) dz2[k] *= detail::lrelu_grad(t.z2[k]);
  std::vector<double> dp1(std::size_t(kConv1Ch) * n2 * n2, 0.0);
  detail::conv3x3_backward(t.p1.data(), kConv1Ch, n2, th + l.c2w, kConv2Ch, dz2.data(), g + l.c2w, g + l.c2b, dp1.data());

  // Pool 1, conv1 (no input gradient needed).
  std::vector<double> dz1(std::size_t(kConv1Ch) * n * n, 0.0);
  for (std::size_t k = 0; k < dp1.size(); ++k) dz1[std::size_t(t.i1[k])] += dp1[k];
  for (std::size_t k = 0; k < dz1.size(); ++k) dz1[k] *= detail::lrelu_grad(t.z1[k]);
  detail::conv3x3_backward(t.x.data(), 1, n, th + l.c1w, kConv1Ch, dz1.data(), g + l.c1w, g + l.c1b, nullptr);
}

inline double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
  if (pred.empty()) throw std::invalid_argument("mse_loss: empty prediction vector");
  if (pred.size() != target.size()) throw std::invalid_argument("mse_loss: " + std::to_string(pred.size()) + " predictions vs " + std::to_string(target.size()) + " targets");
  NeumaierSum s;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - target[i];
    s.add(r * r);
  }
  return s.value() / double(pred.size());
}

struct BatchSample {
  const LoopImage* image = nullptr;
  double target = 0.0;  // normalized (skew / target_scale)
};

// Mean-squared-error loss and its parameter gradient over a batch. Samples
// are processed in fixed segments whose partial gradients merge in segment
// order, so the result is bit-identical serial or threaded (the serial path
// uses one scratch buffer but performs the same per-segment arithmetic).
inline double batch_backward(const ModelParams& p, const std::vector<BatchSample>& batch, std::vector<double>& grad) {
  const NetLayout l = p.layout();
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("batch_backward: empty batch");
  grad.assign(l.total, 0.0);
  const std::size_t nseg = std::min<std::size_t>(kSegments, n);
  const bool serial = thread_cap() <= 1;
  const double inv = 1.0 / double(n);

  std::vector<std::vector<double>> part;
  std::vector<double> scratch;
  std::vector<double> loss_part(nseg, 0.0);
  if (serial)
    scratch.assign(l.total, 0.0);
  else
    part.resize(nseg);

  run_segments(n, [&](std::size_t seg, std::size_t lo, std::size_t hi) {
    std::vector<double>* gdst;
    if (serial) {
      std::fill(scratch.begin(), scratch.end(), 0.0);
      gdst = &scratch;
    } else {
      part[seg].assign(l.total, 0.0);
      gdst = &part[seg];
    }
    Trace t;
    NeumaierSum ls;
    for (std::size_t i = lo; i < hi; ++i) {
      const double y = forward_trace(p, *batch[i].image, t);
      const double r = y - batch[i].target;
      ls.add(r * r);
      backward_into(p, t, 2.0 * r * inv, *gdst);
    }
    loss_part[seg] = ls.value();
    if (serial)
      for (std::size_t k = 0; k < l.total; ++k) grad[k] += scratch[k];
  });

  if (!serial)
    for (std::size_t s = 0; s < nseg; ++s)
      for (std::size_t k = 0; k < l.total; ++k) grad[k] += part[s][k];
  NeumaierSum total;
  for (std::size_t s = 0; s < nseg; ++s) total.add(loss_part[s]);
  return total.value() * inv;
}

// ---------------------------------------------------------------------------
// Adam optimizer (bias-corrected first/second moments).

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamState {
  std::vector<double> m, v;
  long long step = 0;

  static AdamState make(const NetLayout& l) {
    AdamState s;
    s.m.assign(l.total, 0.0);
    s.v.assign(l.total, 0.0);
    return s;
  }
};

inline void adam_step(ModelParams& p, const std::vector<double>& grad, AdamState& st, double lr) {
  const std::size_t n = p.theta.size();
  if (grad.size() != n || st.m.size() != n || st.v.size() != n) throw std::invalid_argument("adam_step: parameter / gradient / moment sizes disagree");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("adam_step: learning rate must be positive and finite");
  for (std::size_t k = 0; k < n; ++k)
    if (!std::isfinite(grad[k])) throw numeric_error("adam_step: non-finite gradient at parameter index " + std::to_string(k));
  ++st.step;
  const double c1 = 1.0 - std::pow(kAdamBeta1, double(st.step));
  const double c2 = 1.0 - std::pow(kAdamBeta2, double(st.step));
  double* th = p.theta.data();
  double* m = st.m.data();
  double* v = st.v.data();
  const double* g = grad.data();
  for (std::size_t k = 0; k < n; ++k) {
    m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g[k];
    v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g[k] * g[k];
    const double mhat = m[k] / c1;
    const double vhat = v[k] / c2;
    th[k] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

// ---------------------------------------------------------------------------
// Model file: one magic line, a textual key/value header (architecture,
// normalization statistics, then any caller-supplied metadata lines), a
// parameter count, and the raw little-endian doubles after a "blob" marker.
// load(save(p)) is bit-identical; header numbers use shortest round-trip
// decimal form.

inline constexpr char kModelMagic[] = "BHDESKEW-MODEL 1";

inline void save_model(const std::string& path, const ModelParams& p, const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  p.check();
  std::string out;
  out += kModelMagic;
  out += '\n';
  out += "arch " + p.arch + '\n';
  out += "side " + std::to_string(p.side) + '\n';
  out += "scalar_mean";
  for (double v : p.scalar_mean) out += ' ' + detail::format_double(v);
  out += '\n';
  out += "scalar_scale";
  for (double v : p.scalar_scale) out += ' ' + detail::format_double(v);
  out += '\n';
  out += "target_scale " + detail::format_double(p.target_scale) + '\n';
  for (const auto& [key, value] : extra) {
    if (key.empty() || key.find_first_of(" \n") != std::string::npos) throw std::invalid_argument("save_model: metadata key '" + key + "' must be non-empty and space-free");
    if (key == "arch" || key == "side" || key == "scalar_mean" || key == "scalar_scale" || key == "target_scale" || key == "params" || key == "blob") throw std::invalid_argument("save_model: metadata key '" + key + "' is reserved");
    if (value.find('\n') != std::string::npos) throw std::invalid_argument("save_model: metadata value for '" + key + "' contains a newline");
    out += key + ' ' + value + '\n';
  }
  out += "params " + std::to_string(p.theta.size()) + '\n';
  out += "blob\n";
  out.reserve(out.size() + 8 * p.theta.size());
  for (double v : p.theta) put_f64(out, v);
  atomic_write_file(path, out);
}

struct LoadedModel {
  ModelParams params;
  std::vector<std::pair<std::string, std::string>> extra;  // header order
};

// Reads a model file. If expected_side > 0 and the stored side differs, the
// error names both sides so a mismatched pipeline fails loudly up front.
inline LoadedModel load_model(const std::string& path, int expected_side = 0) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= data.size()) throw format_error(path + ": truncated model header");
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) throw format_error(path + ": truncated model header");
    std::string line = data.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  if (next_line() != kModelMagic) throw format_error(path + ": not a skew model file (bad magic line)");

  LoadedModel out;
  ModelParams& p = out.params;
  p.arch.clear();
  p.target_scale = 0.0;
  int side = 0;
  bool have_mean = false, have_scale = false, have_target = false;
  std::size_t declared = 0;
  bool have_params = false;

  auto parse_doubles = [&](const std::string& text, double* dst, int count, const char* what) {
    std::size_t at = 0;
    for (int k = 0; k < count; ++k) {
      while (at < text.size() && text[at] == ' ') ++at;
      std::size_t end = at;
      while (end < text.size() && text[end] != ' ') ++end;
      auto res = std::from_chars(text.data() + at, text.data() + end, dst[k]);
      if (res.ec != std::errc() || res.ptr != text.data() + end || at == end) throw format_error(path + ": malformed " + what + " line");
      at = end;
    }
    while (at < text.size() && text[at] == ' ') ++at;
    if (at != text.size()) throw format_error(path + ": malformed " + std::string(what) + " line (extra fields)");
  };

  for (;;) {
    const std::string line = next_line();
    if (line == "blob") break;
    const std::size_t sp = line.find(' ');
    const std::string key = line.substr(0, sp);
    const std::string value = sp == std::string::npos ? std::string() : line.substr(sp + 1);
    if (key == "arch") {
      p.arch = value;
    } else if (key == "side") {
      auto res = std::from_chars(value.data(), value.data() + value.size(), side);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) throw format_error(path + ": malformed side line");
    } else if (key == "scalar_mean") {
      parse_doubles(value, p.scalar_mean.data(), 4, "scalar_mean");
      have_mean = true;
    } else if (key == "scalar_scale") {
      parse_doubles(value, p.scalar_scale.data(), 4, "scalar_scale");
      have_scale = true;
    } else if (key == "target_scale") {
      parse_doubles(value, &p.target_scale, 1, "target_scale");
      have_target = true;
    } else if (key == "params") {
      unsigned long long c = 0;
      auto res = std::from_chars(value.data(), value.data() + value.size(), c);
      if (res.ec != std::errc() || res.ptr != value.data() + value.size()) throw format_error(path + ": malformed params line");
      declared = std::size_t(c);
      have_params = true;
    } else if (key.empty()) {
      throw format_error(path + ": malformed header line '" + line + "'");
    } else {
      out.extra.emplace_back(key, value);
    }
  }

  if (p.arch.empty() || side == 0 || !have_mean || !have_scale || !have_target || !have_params) throw format_error(path + ": model header is missing a required field");
  if (p.arch != kArchTag) throw format_error(path + ": unknown architecture '" + p.arch + "' (this build understands " + kArchTag + ")");
  if (side < 16 || side % 8 != 0) throw format_error(path + ": invalid side " + std::to_string(side));
  if (expected_side > 0 && side != expected_side) throw format_error(path + ": model was trained at side " + std::to_string(side) + " but side " + std::to_string(expected_side) + " was requested");
  p.side = side;
  const NetLayout l = NetLayout::make(side);
  if (declared != l.total) throw format_error(path + ": parameter count " + std::to_string(declared) + " does not match the side-" + std::to_string(side) + " architecture (expected " + std::to_string(l.total) + ")");
  if (data.size() - pos != 8 * declared) throw format_error(path + ": parameter blob has " + std::to_string(data.size() - pos) + " bytes, expected " + std::to_string(8 * declared));

  ByteReader in(data);
  in.pos = pos;
  p.theta.resize(declared);
  for (std::size_t k = 0; k < declared; ++k) p.theta[k] = in.f64();
  try {
    p.check();
  } catch (const std::invalid_argument& e) {
    throw format_error(path + ": " + e.what());
  }
  return out;
}

}  // namespace bhdeskew
