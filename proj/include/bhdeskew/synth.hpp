#pragma once

// Analytic waveform generators: ground-truth oracles and desk-scale training
// corpora independent of any external measurement files.

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bhdeskew/common.hpp"
#include "bhdeskew/waveform.hpp"

namespace bhdeskew {

enum class SynthKind { ellipse, parallelogram, triangular_duty };

inline const char* to_string(SynthKind k) {
  switch (k) {
    case SynthKind::ellipse: return "ellipse";
    case SynthKind::parallelogram: return "parallelogram";
    default: return "triangular-duty";
  }
}

inline SynthKind synth_kind_from_string(const std::string& s) {
  if (s == "ellipse") return SynthKind::ellipse;
  if (s == "parallelogram") return SynthKind::parallelogram;
  if (s == "triangular-duty") return SynthKind::triangular_duty;
  throw usage_error("unknown generator kind: '" + s + "'");
}

struct SynthSpec {
  SynthKind kind = SynthKind::ellipse;
  // Ellipse: B = B0*sin(theta), H = H0*sin(theta + phase). H leads B so the
  // loop is traversed in the dissipative orientation and its energy is
  // +pi*B0*H0*sin(phase).
  double b0 = 0.1;    // tesla
  double h0 = 50.0;   // A/m
  double phase = std::numbers::pi / 6;  // radians
  // Parallelogram / triangular-duty: triangular B with pk-pk swing db and
  // duty D, H = hc*sign(dB/dt) + slope*B.
  double db = 0.2;      // tesla, pk-pk
  double hc = 10.0;     // A/m
  double slope = 200.0; // (A/m)/T
  double duty = 0.5;
  double frequency = 1e5;  // Hz
  long long samples = 1024;
  // Optional damped-sinusoid ringing added to H (setup-artifact stand-in).
  double ring_amp = 0.0;   // A/m
  double ring_mult = 15.0; // multiple of the fundamental
  double ring_damp = 5.0;  // decay constant over one period
  std::uint64_t seed = 0;
  std::string material = "synthetic";
  double temperature = 25.0;  // celsius
  double dc_bias = 0.0;       // A/m
};

namespace detail {

inline void check_spec(const SynthSpec& s) {
  if (s.samples < 16) throw std::invalid_argument("SynthSpec: need at least 16 samples");
  if (!(s.frequency > 0.0)) throw std::invalid_argument("SynthSpec: frequency must be positive");
  if (s.kind == SynthKind::ellipse) {
    if (!(s.b0 > 0.0) || !(s.h0 > 0.0)) throw std::invalid_argument("SynthSpec: ellipse amplitudes must be positive");
    if (!std::isfinite(s.phase)) throw std::invalid_argument("SynthSpec: phase must be finite");
  } else {
    if (!(s.db > 0.0) || !(s.hc > 0.0)) throw std::invalid_argument("SynthSpec: triangular amplitudes must be positive");
    if (!std::isfinite(s.slope)) throw std::invalid_argument("SynthSpec: slope must be finite");
    if (!(s.duty > 0.0 && s.duty < 1.0)) throw std::invalid_argument("SynthSpec: duty must lie in (0, 1)");
  }
  if (s.ring_amp < 0.0) throw std::invalid_argument("SynthSpec: ringing amplitude must be >= 0");
}

inline void add_ringing(std::vector<double>& h, const SynthSpec& s) {
  if (s.ring_amp == 0.0) return;  // bit-exact clean record when disabled
  Rng rng(s.seed);
  const double ph = rng.range(0.0, 2.0 * std::numbers::pi);
  const std::size_t n = h.size();
  for (std::size_t t = 0; t < n; ++t) {
    const double x = (double)t / (double)n;
    h[t] += s.ring_amp * std::exp(-s.ring_damp * x) * std::sin(2.0 * std::numbers::pi * s.ring_mult * x + ph);
  }
}

}  // namespace detail

// Deterministic synthetic operating point.
//
// parallelogram uses a flat-apex sampling: both extremes of B carry two
// samples, one ending each sloped edge and one starting the next, so the
// sampled polyline IS the exact four-corner parallelogram (the horizontal
// caps are its true top/bottom edges) and the shoelace area equals 2*hc*db
// to rounding. triangular-duty is the plain sampled variant of the same
// physics — single-sample apexes whose corner-cutting segments mimic real
// sampled measurements.
inline WaveformRecord generate(const SynthSpec& spec) {
  detail::check_spec(spec);
  const long long n = spec.samples;
  std::vector<double> b((std::size_t)n), h((std::size_t)n);
  WaveformRecord rec;
  rec.material = spec.material;
  rec.temperature = spec.temperature;
  rec.dc_bias = spec.dc_bias;

  switch (spec.kind) {
    case SynthKind::ellipse: {
      const double w = 2.0 * std::numbers::pi / (double)n;
      for (long long t = 0; t < n; ++t) {
        const double th = w * (double)t;
        b[(std::size_t)t] = spec.b0 * std::sin(th);
        h[(std::size_t)t] = spec.h0 * std::sin(th + spec.phase);
      }
      rec.shape = ShapeTag::sinusoidal;
      break;
    }
    case SynthKind::parallelogram: {
      const double half = 0.5 * spec.db;
      long long rise = (long long)std::llround(spec.duty * (double)n);
      if (rise < 1) rise = 1;
      if (rise > n - 3) rise = n - 3;
      const long long fall = n - 1 - rise;  // >= 2 points on the falling edge
      for (long long t = 0; t <= rise; ++t) {
        const double bb = -half + spec.db * ((double)t / (double)rise);
        b[(std::size_t)t] = bb;
        h[(std::size_t)t] = spec.hc + spec.slope * bb;
      }
      for (long long j = 0; j < fall; ++j) {
        const double bb = half - spec.db * ((double)j / (double)(fall - 1));
        b[(std::size_t)(rise + 1 + j)] = bb;
        h[(std::size_t)(rise + 1 + j)] = -spec.hc + spec.slope * bb;
      }
      rec.shape = ShapeTag::triangular;
      break;
    }
    case SynthKind::triangular_duty: {
      const double half = 0.5 * spec.db;
      long long rise = (long long)std::llround(spec.duty * (double)n);
      if (rise < 1) rise = 1;
      if (rise > n - 2) rise = n - 2;
      for (long long t = 0; t < n; ++t) {
        const bool rising = t < rise;
        const double bb = rising ? -half + spec.db * ((double)t / (double)rise)
                                 : half - spec.db * ((double)(t - rise) / (double)(n - rise));
        b[(std::size_t)t] = bb;
        h[(std::size_t)t] = (rising ? spec.hc : -spec.hc) + spec.slope * bb;
      }
      rec.shape = ShapeTag::triangular;
      break;
    }
  }

  detail::add_ringing(h, spec);
  rec.b = TimeSeries(std::move(b), spec.frequency);
  rec.h = TimeSeries(std::move(h), spec.frequency);
  return rec;
}

// ---------------------------------------------------------------------------
// Seeded corpus of randomized operating points drawn from parameter ranges.

struct SynthRanges {
  std::array<double, 2> frequency{5e4, 5e5};
  std::array<double, 2> b0{0.05, 0.3};
  std::array<double, 2> h0{20.0, 80.0};
  std::array<double, 2> phase{0.3, 1.2};
  std::array<double, 2> db{0.1, 0.4};
  std::array<double, 2> hc{5.0, 40.0};
  std::array<double, 2> slope{0.0, 300.0};
  std::array<double, 2> duty{0.25, 0.75};
  std::array<double, 2> ring_amp{0.0, 0.0};
  std::array<double, 2> ring_mult{8.0, 25.0};
  std::array<double, 2> ring_damp{3.0, 8.0};
  long long samples = 1024;
  std::string material = "synthetic";
  double temperature = 25.0;
  double dc_bias = 0.0;
};

// `palette` lists the generator kinds to draw from (uniformly, seeded).
// Records get origins "<material>#<index>".
inline std::vector<WaveformRecord> synth_corpus(const std::vector<SynthKind>& palette, std::size_t count, std::uint64_t seed, const SynthRanges& r = {}) {
  if (palette.empty()) throw std::invalid_argument("synth_corpus: empty kind palette");
  if (count == 0) throw std::invalid_argument("synth_corpus: count must be positive");
  Rng rng(seed);
  std::vector<WaveformRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SynthSpec s;
    s.kind = palette[(std::size_t)rng.below(palette.size())];
    s.frequency = rng.range(r.frequency[0], r.frequency[1]);
    s.b0 = rng.range(r.b0[0], r.b0[1]);
    s.h0 = rng.range(r.h0[0], r.h0[1]);
    s.phase = rng.range(r.phase[0], r.phase[1]);
    s.db = rng.range(r.db[0], r.db[1]);
    s.hc = rng.range(r.hc[0], r.hc[1]);
    s.slope = rng.range(r.slope[0], r.slope[1]);
    s.duty = rng.range(r.duty[0], r.duty[1]);
    s.ring_amp = rng.range(r.ring_amp[0], r.ring_amp[1]);
    s.ring_mult = rng.range(r.ring_mult[0], r.ring_mult[1]);
    s.ring_damp = rng.range(r.ring_damp[0], r.ring_damp[1]);
    s.seed = rng.u64();
    s.samples = r.samples;
    s.material = r.material;
    s.temperature = r.temperature;
    s.dc_bias = r.dc_bias;
    WaveformRecord rec = generate(s);
    rec.origin = r.material + "#" + std::to_string(i);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace bhdeskew
