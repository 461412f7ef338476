#pragma once

// Numerical foundation: electrical-to-magnetic conversion, periodic
// interpolation, circular skew shifting, loop construction, and core-loss
// integration.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bhdeskew/common.hpp"

namespace bhdeskew {

enum class ShapeTag : std::uint8_t { triangular = 0, sinusoidal = 1, trapezoidal = 2, other = 3 };

inline const char* to_string(ShapeTag t) {
  switch (t) {
    case ShapeTag::triangular: return "triangular";
    case ShapeTag::sinusoidal: return "sinusoidal";
    case ShapeTag::trapezoidal: return "trapezoidal";
    default: return "other";
  }
}

inline ShapeTag shape_from_string(const std::string& s) {
  if (s == "triangular") return ShapeTag::triangular;
  if (s == "sinusoidal") return ShapeTag::sinusoidal;
  if (s == "trapezoidal") return ShapeTag::trapezoidal;
  if (s == "other") return ShapeTag::other;
  throw format_error("unknown shape tag: '" + s + "'");
}

// Uniform samples spanning exactly one fundamental period; index arithmetic
// wraps modulo length.
struct TimeSeries {
  std::vector<double> values;
  double frequency = 0.0;  // Hz

  TimeSeries() = default;
  TimeSeries(std::vector<double> v, double f) : values(std::move(v)), frequency(f) {
    if (values.size() < 3) throw std::invalid_argument("TimeSeries: need at least 3 samples, got " + std::to_string(values.size()));
    if (!(frequency > 0.0)) throw std::invalid_argument("TimeSeries: frequency must be positive");
  }

  std::size_t size() const { return values.size(); }
};

// One operating point. `origin` is a provenance tag assigned at ingest or
// synthesis time; augmented samples inherit it so train/test leakage can be
// detected after splitting.
struct WaveformRecord {
  TimeSeries b;  // tesla
  TimeSeries h;  // ampere/meter
  std::string material;
  std::string origin;
  double temperature = 25.0;  // celsius
  double dc_bias = 0.0;       // A/m
  ShapeTag shape = ShapeTag::other;

  void check() const {
    if (b.size() != h.size()) throw std::invalid_argument("WaveformRecord: B and H lengths differ (" + std::to_string(b.size()) + " vs " + std::to_string(h.size()) + ")");
    if (b.frequency != h.frequency) throw std::invalid_argument("WaveformRecord: B and H frequencies differ");
  }
};

// Wraps an arbitrary offset into [0, n).
inline long long wrap_index(long long i, long long n) {
  long long r = i % n;
  return r < 0 ? r + n : r;
}

// Wraps a skew into the centered representative in (-period/2, period/2].
inline long long wrap_centered(long long d, long long period) {
  long long r = wrap_index(d, period);
  return r > period / 2 ? r - period : r;
}

// Signed skew in interpolated-sample index units over a base period of
// length L sampled at interpolation factor K.
struct SkewOffset {
  long long delta = 0;
  long long interp_factor = 1;  // K
  long long base_length = 0;    // L

  SkewOffset() = default;
  SkewOffset(long long d, long long k, long long l) : delta(d), interp_factor(k), base_length(l) {
    if (k < 1) throw std::invalid_argument("SkewOffset: interpolation factor must be >= 1");
    if (l < 3) throw std::invalid_argument("SkewOffset: base length must be >= 3");
    if (std::llabs(d) >= period()) throw std::invalid_argument("SkewOffset: |delta| = " + std::to_string(std::llabs(d)) + " must be below one full period " + std::to_string(period()));
  }

  long long period() const { return base_length * interp_factor; }
  double degrees() const { return 360.0 * (double)delta / (double)period(); }
  double seconds(double frequency) const {
    if (!(frequency > 0.0)) throw std::invalid_argument("SkewOffset::seconds: frequency must be positive");
    return (double)delta / ((double)period() * frequency);
  }
};

// Ordered closed polyline of (H, B) coordinates; the last point connects
// back to the first.
struct BhLoop {
  struct Point {
    double h;  // A/m
    double b;  // tesla
  };
  std::vector<Point> points;

  bool degenerate() const {
    if (points.empty()) return true;
    for (const auto& p : points)
      if (p.h != points[0].h || p.b != points[0].b) return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Electrical-to-magnetic conversion.

// Cumulative trapezoidal integral of the sense-winding voltage over one
// period, scaled by 1/(n2*ae), anchored at B(0) = 0.
inline TimeSeries b_from_voltage(const TimeSeries& v, int n2, double ae) {
  if (n2 < 1) throw std::invalid_argument("b_from_voltage: turn count n2 must be >= 1");
  if (!(ae > 0.0)) throw std::invalid_argument("b_from_voltage: core cross-section ae must be positive");
  const std::size_t n = v.size();
  const double dt = 1.0 / (v.frequency * (double)n);
  const double scale = dt / ((double)n2 * ae);
  std::vector<double> b(n);
  b[0] = 0.0;
  NeumaierSum acc;
  for (std::size_t t = 1; t < n; ++t) {
    acc.add(0.5 * (v.values[t - 1] + v.values[t]) * scale);
    b[t] = acc.value();
  }
  return TimeSeries(std::move(b), v.frequency);
}

// Pointwise H = n1 * i / le.
inline TimeSeries h_from_current(const TimeSeries& i, int n1, double le) {
  if (n1 < 1) throw std::invalid_argument("h_from_current: turn count n1 must be >= 1");
  if (!(le > 0.0)) throw std::invalid_argument("h_from_current: path length le must be positive");
  std::vector<double> h(i.size());
  const double scale = (double)n1 / le;
  for (std::size_t t = 0; t < i.size(); ++t) h[t] = scale * i.values[t];
  return TimeSeries(std::move(h), i.frequency);
}

// ---------------------------------------------------------------------------
// Periodic linear interpolation by an integer factor k. Original samples are
// preserved bit-exactly at indexes j*k; the segment from the last sample
// wraps back to the first.
inline std::vector<double> interpolate_periodic(const std::vector<double>& s, std::size_t k) {
  if (k == 0) throw std::invalid_argument("interpolate_periodic: factor must be >= 1");
  if (s.empty()) throw std::invalid_argument("interpolate_periodic: empty series");
  if (k == 1) return s;
  const std::size_t n = s.size();
  std::vector<double> out(n * k);
  for (std::size_t t = 0; t < n; ++t) {
    const double a = s[t];
    const double step = (s[(t + 1) % n] - a) / (double)k;
    double* o = out.data() + t * k;
    o[0] = a;
    for (std::size_t m = 1; m < k; ++m) o[m] = a + step * (double)m;
  }
  return out;
}

inline TimeSeries interpolate_periodic(const TimeSeries& s, std::size_t k) {
  return TimeSeries(interpolate_periodic(s.values, k), s.frequency);
}

// ---------------------------------------------------------------------------
// Circular skew shift: out[t] = h[(t + delta) mod length]. Only H is ever
// shifted; B keeps its reference timing.
inline TimeSeries apply_skew(const TimeSeries& h, const SkewOffset& d) {
  const long long n = (long long)h.size();
  if (n != d.period()) throw std::invalid_argument("apply_skew: series length " + std::to_string(n) + " does not match skew period " + std::to_string(d.period()));
  std::vector<double> out((std::size_t)n);
  const long long start = wrap_index(d.delta, n);
  for (long long t = 0; t < n; ++t) out[(std::size_t)t] = h.values[(std::size_t)((t + start) % n)];
  return TimeSeries(std::move(out), h.frequency);
}

// ---------------------------------------------------------------------------
// Loop construction and loss integration.

inline BhLoop make_loop(const TimeSeries& b, const TimeSeries& h) {
  if (b.size() != h.size()) throw std::invalid_argument("make_loop: B and H lengths differ (" + std::to_string(b.size()) + " vs " + std::to_string(h.size()) + ")");
  BhLoop loop;
  loop.points.resize(b.size());
  for (std::size_t t = 0; t < b.size(); ++t) loop.points[t] = {h.values[t], b.values[t]};
  return loop;
}

// Signed loop area, oriented so a dissipative loop is positive. Terms use a
// fused difference-of-products and compensated summation, so polygon areas
// are exact to ~1 ulp and zero-lag loops built from exactly proportional
// samples come out exactly zero.
inline double loop_energy_density(const BhLoop& loop) {
  const std::size_t n = loop.points.size();
  if (n < 3) return 0.0;
  NeumaierSum acc;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = loop.points[i];
    const auto& q = loop.points[(i + 1) % n];
    acc.add(diff_of_products(p.h, q.b, q.h, p.b));
  }
  return 0.5 * acc.value();
}

inline double core_loss_density(const BhLoop& loop, double f) {
  if (!(f > 0.0)) throw std::invalid_argument("core_loss_density: frequency must be positive");
  return f * loop_energy_density(loop);
}

// ---------------------------------------------------------------------------
// Exact compact polygon of an interpolated-and-skewed record.
//
// Interpolating B and H by factor K and circularly shifting H by delta yields
// an L*K-vertex loop, but every vertex strictly between two slope
// breakpoints is collinear with its neighbours. Keeping only the breakpoints
// gives a polygon with at most 2L vertices whose area equals the full loop's
// area in real arithmetic — this is what makes +/-20-step augmentation at
// K=1000 affordable without materializing million-sample series.
//
// With delta = q*K + r (floored division) and alpha = r/K, the breakpoints
// per raw index t are:
//   even vertex: H = (1-alpha)*H[t+q] + alpha*H[t+q+1],  B = B[t]
//   odd vertex (r > 0 only): H = H[t+q+1],  B = B[t] + (B[t+1]-B[t])*(1-alpha)
// For r == 0 the loop is a pure circular shift of the raw samples.
inline BhLoop skewed_loop(const WaveformRecord& rec, long long delta, long long k) {
  rec.check();
  if (k < 1) throw std::invalid_argument("skewed_loop: interpolation factor must be >= 1");
  const long long L = (long long)rec.b.size();
  const long long period = L * k;
  if (std::llabs(delta) >= period) throw std::invalid_argument("skewed_loop: |delta| = " + std::to_string(std::llabs(delta)) + " must be below one full period " + std::to_string(period));
  long long q = delta / k;
  long long r = delta % k;
  if (r < 0) {
    r += k;
    q -= 1;
  }
  const auto& B = rec.b.values;
  const auto& H = rec.h.values;
  BhLoop loop;
  if (r == 0) {
    loop.points.resize((std::size_t)L);
    for (long long t = 0; t < L; ++t) loop.points[(std::size_t)t] = {H[(std::size_t)wrap_index(t + q, L)], B[(std::size_t)t]};
    return loop;
  }
  const double alpha = (double)r / (double)k;
  const double beta = 1.0 - alpha;
  loop.points.resize((std::size_t)(2 * L));
  for (long long t = 0; t < L; ++t) {
    const std::size_t a = (std::size_t)wrap_index(t + q, L);
    const std::size_t b1 = (std::size_t)wrap_index(t + q + 1, L);
    const std::size_t tn = (std::size_t)wrap_index(t + 1, L);
    loop.points[(std::size_t)(2 * t)] = {beta * H[a] + alpha * H[b1], B[(std::size_t)t]};
    loop.points[(std::size_t)(2 * t + 1)] = {H[b1], B[(std::size_t)t] + (B[tn] - B[(std::size_t)t]) * beta};
  }
  return loop;
}

}  // namespace bhdeskew
