#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, compensated summation,
// little-endian byte IO, atomic file writes, and the fixed-segment parallel
// runner that keeps reductions bit-identical at any thread cap.

#include <atomic>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace bhdeskew {

// Error taxonomy, mapped to CLI exit codes: usage 1, data/format 2, numeric 3.
// Library preconditions throw std::invalid_argument (also exit code 2).
struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Shortest decimal form that parses back to the same double, so a text
// write/read cycle is bit-exact.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic RNG. std::uniform_*_distribution and std::shuffle are
// implementation-defined, so everything that must reproduce byte-identical
// artifacts across toolchains draws through this wrapper instead.
struct Rng {
  std::mt19937_64 eng;

  explicit Rng(std::uint64_t seed) : eng(seed) {}

  std::uint64_t u64() { return eng(); }

  // Uniform in [0, 1), 53 mantissa bits.
  double unit() { return double(eng() >> 11) * 0x1.0p-53; }

  double range(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // Uniform in [0, n), rejection-sampled so the result is unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = eng();
    } while (x >= limit);
    return x % n;
  }

  // Uniform integer in [lo, hi], inclusive.
  long long between(long long lo, long long hi) {
    if (lo > hi) throw std::invalid_argument("Rng::between: empty range");
    return lo + (long long)below(std::uint64_t(hi - lo) + 1);
  }

  // Fisher-Yates, own loop so the permutation is toolchain-independent.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = (std::size_t)below(i);
      std::swap(v[i - 1], v[j]);
    }
  }
};

// ---------------------------------------------------------------------------
// Neumaier compensated summation — keeps polygon areas accurate to ~1 ulp of
// the true sum even when terms cancel heavily.
struct NeumaierSum {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }

  double value() const { return sum + comp; }
};

// Difference of products a*b - c*d with one rounding (Kahan's determinant
// trick). Exact zero whenever a*b == c*d holds in real arithmetic.
inline double diff_of_products(double a, double b, double c, double d) {
  double w = c * d;
  double e = std::fma(c, d, -w);  // rounding error of w, exactly
  double f = std::fma(a, b, -w);
  return f - e;
}

// ---------------------------------------------------------------------------
// Little-endian byte IO (explicit assembly, so files are identical on any
// host byte order).
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw format_error("truncated input: expected " + std::to_string(n) + " more bytes at offset " + std::to_string(pos));
  }

  std::uint8_t u8() {
    need(1);
    return std::uint8_t(buf[pos++]);
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }

  double f64() { return std::bit_cast<double>(u64()); }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }

  bool done() const { return pos == buf.size(); }
};

// ---------------------------------------------------------------------------
// Whole-file IO. Writes go through a temp file + rename so readers never see
// a partially written artifact.
inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw format_error("read failed: " + path);
  return data;
}

inline void atomic_write_file(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw format_error("cannot create file: " + tmp);
    out.write(data.data(), (std::streamsize)data.size());
    out.flush();
    if (!out) throw format_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw format_error("cannot move " + tmp + " into place: " + ec.message());
}

// ---------------------------------------------------------------------------
// Parallelism. BH_DESKEW_THREADS caps worker threads; 0 or unset is the
// single-threaded deterministic reference mode. Work is always cut into the
// same fixed segments and merged in segment order, so results are
// bit-identical at every cap.
inline unsigned thread_cap() {
  const char* s = std::getenv("BH_DESKEW_THREADS");
  if (!s || !*s) return 0;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || v < 0) return 0;
  return unsigned(v);
}

inline constexpr std::size_t kSegments = 16;

// Invokes fn(seg, lo, hi) for each of kSegments fixed slices of [0, count).
// fn may run on worker threads but only ever touches segment-local state;
// callers merge per-segment results in segment order afterwards.
template <class Fn>
void run_segments(std::size_t count, Fn&& fn) {
  if (count == 0) return;
  const std::size_t nseg = std::min(kSegments, count);
  auto bounds = [&](std::size_t seg) {
    return std::pair<std::size_t, std::size_t>{count * seg / nseg, count * (seg + 1) / nseg};
  };
  const unsigned cap = thread_cap();
  if (cap <= 1) {
    for (std::size_t seg = 0; seg < nseg; ++seg) {
      auto [lo, hi] = bounds(seg);
      fn(seg, lo, hi);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t seg = next.fetch_add(1);
      if (seg >= nseg || failed.load()) return;
      try {
        auto [lo, hi] = bounds(seg);
        fn(seg, lo, hi);
      } catch (...) {
        std::scoped_lock lk(error_mu);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const unsigned nworkers = std::min<std::size_t>(cap, nseg);
  pool.reserve(nworkers);
  for (unsigned i = 0; i < nworkers; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace bhdeskew
