#pragma once

// Corpus handling: CSV ingest of measurement directories, operating-condition
// filters, seeded operating-point splits, and skew-grid augmentation.
//
// Canonical corpus layout, one directory per material (directory name becomes
// the material tag, row r becomes origin "<material>#<r>", rows 0-based):
//   b.csv    N rows x 1024 comma-separated flux-density samples [T]
//   h.csv    N rows x 1024 field samples [A/m]
//   freq.csv N rows x 1 fundamental frequency [Hz]
//   temp.csv (optional) N rows x 1 temperature [C], default 25
//   bias.csv (optional) N rows x 1 DC bias [A/m], default 0
//   shape.csv (optional) N rows x 1 tag from {triangular, sinusoidal,
//            trapezoidal, other}, default triangular

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bhdeskew/common.hpp"
#include "bhdeskew/waveform.hpp"

namespace bhdeskew {

inline constexpr std::size_t kRowSamples = 1024;

namespace detail {

// Splits file content into data lines; tolerates CRLF and a trailing newline.
inline std::vector<std::string_view> csv_lines(const std::string& data) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < data.size()) {
    std::size_t end = data.find('\n', start);
    if (end == std::string::npos) end = data.size();
    std::string_view line(data.data() + start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

inline double parse_cell(std::string_view cell, const std::string& file, std::size_t row, std::size_t col) {
  double v = 0.0;
  auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
    throw format_error(file + ": row " + std::to_string(row) + ", column " + std::to_string(col) + ": not a number: '" + std::string(cell) + "'");
  return v;
}

inline std::vector<double> parse_csv_row(std::string_view line, const std::string& file, std::size_t row) {
  std::vector<double> out;
  std::size_t start = 0;
  std::size_t col = 0;
  while (true) {
    std::size_t end = line.find(',', start);
    const std::string_view cell = line.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
    out.push_back(parse_cell(cell, file, row, col));
    ++col;
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

// Reads a single-column CSV; every row must hold exactly one value.
inline std::vector<double> read_column(const std::string& path) {
  const std::string data = read_file(path);
  const std::string name = std::filesystem::path(path).filename().string();
  auto lines = csv_lines(data);
  std::vector<double> out;
  out.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto row = parse_csv_row(lines[r], name, r);
    if (row.size() != 1) throw format_error(name + ": row " + std::to_string(r) + ": expected a single value, got " + std::to_string(row.size()));
    out.push_back(row[0]);
  }
  return out;
}

inline std::vector<std::vector<double>> read_matrix(const std::string& path) {
  const std::string data = read_file(path);
  const std::string name = std::filesystem::path(path).filename().string();
  auto lines = csv_lines(data);
  std::vector<std::vector<double>> out;
  out.reserve(lines.size());
  for (std::size_t r = 0; r < lines.size(); ++r) {
    auto row = parse_csv_row(lines[r], name, r);
    if (row.size() != kRowSamples)
      throw format_error(name + ": row " + std::to_string(r) + ": expected " + std::to_string(kRowSamples) + " samples per period, got " + std::to_string(row.size()) + " (resample the series to " + std::to_string(kRowSamples) + " columns before ingesting)");
    out.push_back(std::move(row));
  }
  return out;
}

inline std::string dir_material(const std::string& dir) {
  std::filesystem::path p(dir);
  std::string name = p.filename().string();
  if (name.empty() || name == ".") name = p.parent_path().filename().string();
  return name;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Ingest. One WaveformRecord per CSV row; optional metadata files may be
// absent entirely but must line up row-for-row when present.
inline std::vector<WaveformRecord> ingest(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto b_rows = detail::read_matrix((fs::path(dir) / "b.csv").string());
  const auto h_rows = detail::read_matrix((fs::path(dir) / "h.csv").string());
  const auto freq = detail::read_column((fs::path(dir) / "freq.csv").string());
  const std::size_t n = b_rows.size();
  if (n == 0) throw format_error(dir + ": b.csv holds no data rows");
  if (h_rows.size() != n) throw format_error(dir + ": b.csv has " + std::to_string(n) + " rows but h.csv has " + std::to_string(h_rows.size()));
  if (freq.size() != n) throw format_error(dir + ": b.csv has " + std::to_string(n) + " rows but freq.csv has " + std::to_string(freq.size()));

  auto optional_column = [&](const char* name) -> std::optional<std::vector<double>> {
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) return std::nullopt;
    auto col = detail::read_column(p.string());
    if (col.size() != n) throw format_error(dir + ": b.csv has " + std::to_string(n) + " rows but " + std::string(name) + " has " + std::to_string(col.size()));
    return col;
  };
  const auto temp = optional_column("temp.csv");
  const auto bias = optional_column("bias.csv");

  std::optional<std::vector<ShapeTag>> shapes;
  {
    const fs::path p = fs::path(dir) / "shape.csv";
    if (fs::exists(p)) {
      const std::string data = read_file(p.string());
      auto lines = detail::csv_lines(data);
      if (lines.size() != n) throw format_error(dir + ": b.csv has " + std::to_string(n) + " rows but shape.csv has " + std::to_string(lines.size()));
      std::vector<ShapeTag> tags;
      tags.reserve(n);
      for (std::size_t r = 0; r < lines.size(); ++r) {
        try {
          tags.push_back(shape_from_string(std::string(lines[r])));
        } catch (const format_error& e) {
          throw format_error("shape.csv: row " + std::to_string(r) + ": " + e.what());
        }
      }
      shapes = std::move(tags);
    }
  }

  const std::string material = detail::dir_material(dir);
  std::vector<WaveformRecord> records;
  records.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (!(freq[r] > 0.0)) throw format_error("freq.csv: row " + std::to_string(r) + ": frequency must be positive, got " + detail::format_double(freq[r]));
    WaveformRecord rec;
    rec.b = TimeSeries(b_rows[r], freq[r]);
    rec.h = TimeSeries(h_rows[r], freq[r]);
    rec.material = material;
    rec.origin = material + "#" + std::to_string(r);
    rec.temperature = temp ? (*temp)[r] : 25.0;
    rec.dc_bias = bias ? (*bias)[r] : 0.0;
    rec.shape = shapes ? (*shapes)[r] : ShapeTag::triangular;
    records.push_back(std::move(rec));
  }
  return records;
}

// Writes the canonical layout (all six files) with round-trip-exact number
// formatting. The directory name, not the records' material field, is what a
// later ingest reports as the material.
inline void write_corpus_csv(const std::string& dir, const std::vector<WaveformRecord>& records) {
  if (records.empty()) throw std::invalid_argument("write_corpus_csv: no records");
  std::filesystem::create_directories(dir);
  std::string b_csv, h_csv, freq_csv, temp_csv, bias_csv, shape_csv;
  for (const auto& rec : records) {
    rec.check();
    for (std::size_t t = 0; t < rec.b.size(); ++t) {
      if (t) {
        b_csv.push_back(',');
        h_csv.push_back(',');
      }
      b_csv += detail::format_double(rec.b.values[t]);
      h_csv += detail::format_double(rec.h.values[t]);
    }
    b_csv.push_back('\n');
    h_csv.push_back('\n');
    freq_csv += detail::format_double(rec.b.frequency);
    freq_csv.push_back('\n');
    temp_csv += detail::format_double(rec.temperature);
    temp_csv.push_back('\n');
    bias_csv += detail::format_double(rec.dc_bias);
    bias_csv.push_back('\n');
    shape_csv += to_string(rec.shape);
    shape_csv.push_back('\n');
  }
  namespace fs = std::filesystem;
  atomic_write_file((fs::path(dir) / "b.csv").string(), b_csv);
  atomic_write_file((fs::path(dir) / "h.csv").string(), h_csv);
  atomic_write_file((fs::path(dir) / "freq.csv").string(), freq_csv);
  atomic_write_file((fs::path(dir) / "temp.csv").string(), temp_csv);
  atomic_write_file((fs::path(dir) / "bias.csv").string(), bias_csv);
  atomic_write_file((fs::path(dir) / "shape.csv").string(), shape_csv);
}

// ---------------------------------------------------------------------------
// Binary corpus container — the compact intermediate the CLI passes between
// `ingest`/`synth` and the training stages.
inline constexpr char kCorpusMagic[] = "BHDCORP1";

inline std::string serialize_corpus(const std::vector<WaveformRecord>& records) {
  std::string out(kCorpusMagic, 8);
  put_u64(out, records.size());
  for (const auto& rec : records) {
    rec.check();
    put_u64(out, rec.b.size());
    put_f64(out, rec.b.frequency);
    put_f64(out, rec.temperature);
    put_f64(out, rec.dc_bias);
    out.push_back(char(static_cast<std::uint8_t>(rec.shape)));
    put_u64(out, rec.material.size());
    out += rec.material;
    put_u64(out, rec.origin.size());
    out += rec.origin;
    for (double v : rec.b.values) put_f64(out, v);
    for (double v : rec.h.values) put_f64(out, v);
  }
  return out;
}

inline std::vector<WaveformRecord> parse_corpus(const std::string& data) {
  ByteReader in(data);
  if (in.bytes(8) != std::string(kCorpusMagic, 8)) throw format_error("corpus file: bad magic, expected BHDCORP1");
  const std::uint64_t count = in.u64();
  std::vector<WaveformRecord> records;
  records.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t len = in.u64();
    if (len < 3 || len > (std::uint64_t(1) << 32)) throw format_error("corpus file: record " + std::to_string(i) + ": implausible series length " + std::to_string(len));
    const double freq = in.f64();
    if (!(freq > 0.0)) throw format_error("corpus file: record " + std::to_string(i) + ": frequency must be positive");
    WaveformRecord rec;
    rec.temperature = in.f64();
    rec.dc_bias = in.f64();
    const std::uint8_t shape = in.u8();
    if (shape > 3) throw format_error("corpus file: record " + std::to_string(i) + ": unknown shape tag byte " + std::to_string(shape));
    rec.shape = static_cast<ShapeTag>(shape);
    rec.material = in.bytes(in.u64());
    rec.origin = in.bytes(in.u64());
    std::vector<double> b(len), h(len);
    for (auto& v : b) v = in.f64();
    for (auto& v : h) v = in.f64();
    rec.b = TimeSeries(std::move(b), freq);
    rec.h = TimeSeries(std::move(h), freq);
    records.push_back(std::move(rec));
  }
  if (!in.done()) throw format_error("corpus file: " + std::to_string(data.size() - in.pos) + " trailing bytes");
  return records;
}

inline void save_corpus(const std::string& path, const std::vector<WaveformRecord>& records) {
  atomic_write_file(path, serialize_corpus(records));
}

inline std::vector<WaveformRecord> load_corpus(const std::string& path) {
  return parse_corpus(read_file(path));
}

// ---------------------------------------------------------------------------
// Operating-condition filter. Empty shape list admits every shape; absent
// optionals admit everything; temperature and bias match exactly (the corpus
// metadata is quantized, so equality is meaningful); frequency bounds are
// inclusive.
struct DatasetFilter {
  std::vector<ShapeTag> shapes;
  std::optional<double> temperature;
  std::optional<double> dc_bias;
  std::optional<double> freq_min;
  std::optional<double> freq_max;

  void check() const {
    if (freq_min && freq_max && *freq_min > *freq_max)
      throw std::invalid_argument("DatasetFilter: frequency bounds inverted: " + detail::format_double(*freq_min) + " > " + detail::format_double(*freq_max));
  }

  bool admits(const WaveformRecord& rec) const {
    if (!shapes.empty()) {
      bool found = false;
      for (ShapeTag t : shapes)
        if (t == rec.shape) {
          found = true;
          break;
        }
      if (!found) return false;
    }
    if (temperature && rec.temperature != *temperature) return false;
    if (dc_bias && rec.dc_bias != *dc_bias) return false;
    if (freq_min && rec.b.frequency < *freq_min) return false;
    if (freq_max && rec.b.frequency > *freq_max) return false;
    return true;
  }
};

inline std::vector<WaveformRecord> filter(const std::vector<WaveformRecord>& records, const DatasetFilter& f) {
  f.check();
  std::vector<WaveformRecord> out;
  for (const auto& rec : records)
    if (f.admits(rec)) out.push_back(rec);
  return out;
}

// ---------------------------------------------------------------------------
// Operating-point split. Happens BEFORE augmentation, so no augmented sibling
// of a test loop can leak into training. Explicit counts take precedence over
// the ratio; both sides preserve the corpus order.
struct SplitSpec {
  double ratio = 0.8;
  std::optional<std::size_t> train_count;
  std::optional<std::size_t> test_count;
  std::uint64_t seed = 0;

  void check() const {
    if (train_count.has_value() != test_count.has_value())
      throw std::invalid_argument("SplitSpec: train and test counts must be given together");
    if (!train_count && !(ratio > 0.0 && ratio < 1.0))
      throw std::invalid_argument("SplitSpec: train fraction must lie in (0, 1), got " + detail::format_double(ratio));
  }
};

inline std::pair<std::vector<WaveformRecord>, std::vector<WaveformRecord>> split(const std::vector<WaveformRecord>& records, const SplitSpec& s) {
  s.check();
  const std::size_t n = records.size();
  if (n == 0) throw std::invalid_argument("split: corpus is empty");
  std::size_t train_n;
  if (s.train_count) {
    if (*s.train_count + *s.test_count != n)
      throw std::invalid_argument("split: counts " + std::to_string(*s.train_count) + "+" + std::to_string(*s.test_count) + " do not sum to the corpus size " + std::to_string(n));
    train_n = *s.train_count;
  } else {
    train_n = std::min<std::size_t>(n, (std::size_t)std::llround(s.ratio * (double)n));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(s.seed);
  rng.shuffle(order);

  std::vector<bool> in_train(n, false);
  for (std::size_t i = 0; i < train_n; ++i) in_train[order[i]] = true;
  std::pair<std::vector<WaveformRecord>, std::vector<WaveformRecord>> out;
  out.first.reserve(train_n);
  out.second.reserve(n - train_n);
  for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.first : out.second).push_back(records[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Skew-grid augmentation. Each sample points back at its source record and
// renders its loop on demand through the compact skewed polygon, so a
// 41-label grid keeps one copy of the underlying series.
struct LabeledSample {
  std::shared_ptr<const WaveformRecord> source;
  SkewOffset target;
  std::string origin_id;

  BhLoop loop() const { return skewed_loop(*source, target.delta, target.interp_factor); }
};

inline std::vector<LabeledSample> augment(std::shared_ptr<const WaveformRecord> record, long long n, long long step, long long interp_factor) {
  if (!record) throw std::invalid_argument("augment: null record");
  record->check();
  if (record->origin.empty()) throw std::invalid_argument("augment: record has no origin tag; assign one so train/test leakage stays detectable");
  if (n < 0) throw std::invalid_argument("augment: grid half-width must be >= 0, got " + std::to_string(n));
  if (step < 1) throw std::invalid_argument("augment: grid step must be >= 1, got " + std::to_string(step));
  const long long L = (long long)record->b.size();
  const long long period = L * interp_factor;
  if (n * step >= period)
    throw std::invalid_argument("augment: grid reach " + std::to_string(n) + "*" + std::to_string(step) + " = " + std::to_string(n * step) + " exceeds the available skew range; it must stay below one full period = " + std::to_string(period) + " interpolated samples");
  std::vector<LabeledSample> out;
  out.reserve((std::size_t)(2 * n + 1));
  for (long long i = -n; i <= n; ++i) out.push_back({record, SkewOffset(i * step, interp_factor, L), record->origin});
  return out;
}

inline std::vector<LabeledSample> augment(const WaveformRecord& record, long long n, long long step, long long interp_factor) {
  return augment(std::make_shared<const WaveformRecord>(record), n, step, interp_factor);
}

inline std::vector<LabeledSample> augment_all(const std::vector<WaveformRecord>& records, long long n, long long step, long long interp_factor) {
  std::vector<LabeledSample> out;
  out.reserve(records.size() * (std::size_t)(2 * n + 1));
  for (const auto& rec : records) {
    auto one = augment(rec, n, step, interp_factor);
    for (auto& s : one) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace bhdeskew
