#pragma once

// Deterministic rendering of a BH loop into the network input: an S x S
// 8-bit composite (left half: whole loop; right half: zoom onto the minimum-H
// region) plus the four raw-scale extrema.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bhdeskew/common.hpp"
#include "bhdeskew/waveform.hpp"

namespace bhdeskew {

struct RasterConfig {
  int side = 256;       // composite is side x side; must be a multiple of 8
  double zoom_w = 0.3;  // zoom window side, fraction of the normalized extent
  double margin = 0.04; // normalized margin on each side of the global view

  void check() const {
    if (side < 16 || side % 8 != 0) throw std::invalid_argument("RasterConfig: side must be a multiple of 8 and >= 16, got " + std::to_string(side));
    if (!(zoom_w > 0.0) || zoom_w > 1.0) throw std::invalid_argument("RasterConfig: zoom window must lie in (0, 1]");
    if (!(margin >= 0.0) || margin >= 0.5) throw std::invalid_argument("RasterConfig: margin must lie in [0, 0.5)");
  }
};

// Raw-scale loop extrema; fed to the network alongside the pixels so the
// scale information lost in normalization stays available.
struct Scalars {
  double h_min = 0.0, h_max = 0.0, b_min = 0.0, b_max = 0.0;
  std::array<double, 4> as_array() const { return {h_min, h_max, b_min, b_max}; }
};

struct LoopImage {
  int side = 0;
  std::vector<std::uint8_t> pixels;  // row-major, 0 background, 255 curve
  Scalars scalars;
  bool zoom_empty = false;  // no segment crossed the zoom window
};

struct NormalizedLoop {
  std::vector<std::array<double, 2>> pts;  // (u, v) in the unit square
  Scalars scalars;
};

// Affine map of the loop onto the unit square with a margin on each side;
// axes scale independently (aspect is not preserved). An axis with zero
// extent collapses to the centerline; both axes degenerate is an error.
inline NormalizedLoop normalize_loop(const BhLoop& loop, double margin = 0.04) {
  if (loop.points.empty()) throw std::invalid_argument("normalize_loop: empty loop");
  Scalars s;
  s.h_min = s.h_max = loop.points[0].h;
  s.b_min = s.b_max = loop.points[0].b;
  for (const auto& p : loop.points) {
    s.h_min = std::min(s.h_min, p.h);
    s.h_max = std::max(s.h_max, p.h);
    s.b_min = std::min(s.b_min, p.b);
    s.b_max = std::max(s.b_max, p.b);
  }
  const double hspan = s.h_max - s.h_min;
  const double bspan = s.b_max - s.b_min;
  if (hspan == 0.0 && bspan == 0.0) throw std::invalid_argument("normalize_loop: degenerate loop (zero extent on both axes)");
  const double inner = 1.0 - 2.0 * margin;
  NormalizedLoop out;
  out.scalars = s;
  out.pts.resize(loop.points.size());
  for (std::size_t i = 0; i < loop.points.size(); ++i) {
    const double u = hspan == 0.0 ? 0.5 : margin + inner * ((loop.points[i].h - s.h_min) / hspan);
    const double v = bspan == 0.0 ? 0.5 : margin + inner * ((loop.points[i].b - s.b_min) / bspan);
    out.pts[i] = {u, v};
  }
  return out;
}

// Vertex the zoom view centers on: minimum H, ties broken by minimum B,
// then by lowest index.
inline std::size_t min_h_vertex(const BhLoop& loop) {
  if (loop.points.empty()) throw std::invalid_argument("min_h_vertex: empty loop");
  std::size_t best = 0;
  for (std::size_t i = 1; i < loop.points.size(); ++i) {
    const auto& p = loop.points[i];
    const auto& q = loop.points[best];
    if (p.h < q.h || (p.h == q.h && p.b < q.b)) best = i;
  }
  return best;
}

struct ZoomWindow {
  double cx = 0.5, cy = 0.5, w = 0.3;
};

// Square window of side w in normalized space, centered on the minimum-H
// vertex and clamped inside the unit square. Note that with the default
// margin the minimum-H vertex always normalizes onto the left margin line,
// so the window's x-center sits at w/2 whenever margin < w/2; the window
// still contains the vertex, just off-center.
inline ZoomWindow zoom_window(const BhLoop& loop, const NormalizedLoop& norm, double w = 0.3) {
  if (!(w > 0.0) || w > 1.0) throw std::invalid_argument("zoom_window: side must lie in (0, 1]");
  const std::size_t idx = min_h_vertex(loop);
  ZoomWindow win;
  win.w = w;
  win.cx = std::min(std::max(norm.pts[idx][0], w / 2.0), 1.0 - w / 2.0);
  win.cy = std::min(std::max(norm.pts[idx][1], w / 2.0), 1.0 - w / 2.0);
  return win;
}

namespace detail {

// Canonical 1-pixel line: classic midpoint/Bresenham with the strict D > 0
// step rule, endpoints normalized so the scan always runs along the major
// axis in increasing order. Byte-deterministic: integers only.
inline void plot_line_low(std::vector<std::uint8_t>& px, int stride, int x0, int y0, int x1, int y1) {
  const int dx = x1 - x0;
  int dy = y1 - y0;
  int yi = 1;
  if (dy < 0) {
    yi = -1;
    dy = -dy;
  }
  int d = 2 * dy - dx;
  int y = y0;
  for (int x = x0; x <= x1; ++x) {
    px[(std::size_t)y * (std::size_t)stride + (std::size_t)x] = 255;
    if (d > 0) {
      y += yi;
      d += 2 * (dy - dx);
    } else {
      d += 2 * dy;
    }
  }
}

inline void plot_line_high(std::vector<std::uint8_t>& px, int stride, int x0, int y0, int x1, int y1) {
  const int dy = y1 - y0;
  int dx = x1 - x0;
  int xi = 1;
  if (dx < 0) {
    xi = -1;
    dx = -dx;
  }
  int d = 2 * dx - dy;
  int x = x0;
  for (int y = y0; y <= y1; ++y) {
    px[(std::size_t)y * (std::size_t)stride + (std::size_t)x] = 255;
    if (d > 0) {
      x += xi;
      d += 2 * (dx - dy);
    } else {
      d += 2 * dx;
    }
  }
}

inline void draw_line(std::vector<std::uint8_t>& px, int stride, int x0, int y0, int x1, int y1) {
  if (std::abs(y1 - y0) < std::abs(x1 - x0)) {
    if (x0 > x1)
      plot_line_low(px, stride, x1, y1, x0, y0);
    else
      plot_line_low(px, stride, x0, y0, x1, y1);
  } else {
    if (y0 > y1)
      plot_line_high(px, stride, x1, y1, x0, y0);
    else
      plot_line_high(px, stride, x0, y0, x1, y1);
  }
}

// Liang-Barsky segment clip against an axis-aligned box; returns false when
// the segment misses the box entirely.
inline bool clip_segment(double& x0, double& y0, double& x1, double& y1, double xmin, double xmax, double ymin, double ymax) {
  const double dx = x1 - x0, dy = y1 - y0;
  double t0 = 0.0, t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {x0 - xmin, xmax - x0, y0 - ymin, ymax - y0};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
    } else {
      const double r = q[i] / p[i];
      if (p[i] < 0.0) {
        if (r > t1) return false;
        if (r > t0) t0 = r;
      } else {
        if (r < t0) return false;
        if (r < t1) t1 = r;
      }
    }
  }
  const double nx0 = x0 + t0 * dx, ny0 = y0 + t0 * dy;
  const double nx1 = x0 + t1 * dx, ny1 = y0 + t1 * dy;
  x0 = nx0;
  y0 = ny0;
  x1 = nx1;
  y1 = ny1;
  return true;
}

inline int to_px(double u, int n) {
  long long p = std::llround(u * (double)(n - 1));
  if (p < 0) p = 0;
  if (p >= n) p = n - 1;
  return (int)p;
}

}  // namespace detail

// Renders the side-by-side composite. Left half (columns [0, S/2)): the
// whole normalized loop. Right half: the zoom window contents re-mapped to
// fill the panel. Every consecutive vertex pair plus the closing segment is
// drawn as a 1-pixel line; no anti-aliasing anywhere.
inline LoopImage render_composite(const BhLoop& loop, const RasterConfig& cfg = {}) {
  cfg.check();
  const NormalizedLoop norm = normalize_loop(loop, cfg.margin);
  const ZoomWindow win = zoom_window(loop, norm, cfg.zoom_w);

  const int S = cfg.side;
  const int W = S / 2;
  LoopImage img;
  img.side = S;
  img.scalars = norm.scalars;
  img.pixels.assign((std::size_t)S * (std::size_t)S, 0);

  const std::size_t n = norm.pts.size();
  const double xmin = win.cx - win.w / 2.0, xmax = win.cx + win.w / 2.0;
  const double ymin = win.cy - win.w / 2.0, ymax = win.cy + win.w / 2.0;
  bool zoom_hit = false;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = norm.pts[i];
    const auto& b = norm.pts[(i + 1) % n];

    // Global view.
    detail::draw_line(img.pixels, S, detail::to_px(a[0], W), detail::to_px(1.0 - a[1], S), detail::to_px(b[0], W), detail::to_px(1.0 - b[1], S));

    // Zoom view: clip to the window, re-map to the unit square, shift right.
    double x0 = a[0], y0 = a[1], x1 = b[0], y1 = b[1];
    if (detail::clip_segment(x0, y0, x1, y1, xmin, xmax, ymin, ymax)) {
      zoom_hit = true;
      const double u0 = (x0 - xmin) / win.w, v0 = (y0 - ymin) / win.w;
      const double u1 = (x1 - xmin) / win.w, v1 = (y1 - ymin) / win.w;
      detail::draw_line(img.pixels, S, W + detail::to_px(u0, W), detail::to_px(1.0 - v0, S), W + detail::to_px(u1, W), detail::to_px(1.0 - v1, S));
    }
  }
  img.zoom_empty = !zoom_hit;
  return img;
}

// ---------------------------------------------------------------------------
// Binary PGM (P5, maxval 255), bit-exact.

inline std::string write_pgm(const LoopImage& img) {
  std::string out = "P5\n" + std::to_string(img.side) + " " + std::to_string(img.side) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

struct Pgm {
  int width = 0, height = 0;
  std::vector<std::uint8_t> bytes;
};

inline Pgm parse_pgm(const std::string& data) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < data.size() && (data[pos] == ' ' || data[pos] == '\n' || data[pos] == '\t' || data[pos] == '\r')) ++pos;
    std::size_t start = pos;
    while (pos < data.size() && !(data[pos] == ' ' || data[pos] == '\n' || data[pos] == '\t' || data[pos] == '\r')) ++pos;
    if (start == pos) throw format_error("PGM: truncated header");
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw format_error("PGM: expected binary magic P5");
  Pgm p;
  p.width = std::stoi(token());
  p.height = std::stoi(token());
  if (token() != "255") throw format_error("PGM: expected maxval 255");
  ++pos;  // single whitespace after maxval
  const std::size_t need = (std::size_t)p.width * (std::size_t)p.height;
  if (data.size() - pos < need) throw format_error("PGM: pixel payload truncated");
  p.bytes.assign(data.begin() + (std::ptrdiff_t)pos, data.begin() + (std::ptrdiff_t)(pos + need));
  return p;
}

}  // namespace bhdeskew
