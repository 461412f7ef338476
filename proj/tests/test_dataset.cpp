#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <bhdeskew/dataset.hpp>
#include <bhdeskew/synth.hpp>

using namespace bhdeskew;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace fs = std::filesystem;

namespace {

// Fresh scratch directory per test case, relative to the test's working dir.
std::string scratch(const std::string& name) {
  const std::string dir = "t_dataset/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void require_equal(const WaveformRecord& a, const WaveformRecord& b) {
  REQUIRE(a.b.values == b.b.values);
  REQUIRE(a.h.values == b.h.values);
  REQUIRE(a.b.frequency == b.b.frequency);
  REQUIRE(a.h.frequency == b.h.frequency);
  REQUIRE(a.material == b.material);
  REQUIRE(a.origin == b.origin);
  REQUIRE(a.temperature == b.temperature);
  REQUIRE(a.dc_bias == b.dc_bias);
  REQUIRE(a.shape == b.shape);
}

std::string numeric_row(std::size_t cols, double offset) {
  std::string row;
  for (std::size_t i = 0; i < cols; ++i) {
    if (i) row.push_back(',');
    row += detail::format_double(offset + 0.001 * (double)i);
  }
  return row;
}

std::vector<std::string> origins(const std::vector<WaveformRecord>& recs) {
  std::vector<std::string> out;
  for (const auto& r : recs) out.push_back(r.origin);
  return out;
}

}  // namespace

TEST_CASE("ingest: CSV write/read round-trips records bit-exactly") {
  const std::string base = scratch("roundtrip");
  SynthRanges ranges;
  ranges.material = "alpha";
  ranges.ring_amp = {0.5, 2.0};  // exercise non-trivial H values
  auto corpus = synth_corpus({SynthKind::ellipse, SynthKind::parallelogram, SynthKind::triangular_duty}, 5, 77, ranges);
  corpus[1].temperature = 90.0;
  corpus[2].dc_bias = 1.0;
  corpus[3].shape = ShapeTag::trapezoidal;
  corpus[4].shape = ShapeTag::other;

  const std::string dir = base + "/alpha";
  write_corpus_csv(dir, corpus);
  auto back = ingest(dir);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    INFO("record " << i);
    require_equal(back[i], corpus[i]);
  }
}

TEST_CASE("ingest: optional metadata defaults") {
  const std::string base = scratch("defaults");
  const std::string dir = base + "/beta";
  auto corpus = synth_corpus({SynthKind::ellipse}, 2, 3);
  write_corpus_csv(dir, corpus);
  fs::remove(dir + "/temp.csv");
  fs::remove(dir + "/bias.csv");
  fs::remove(dir + "/shape.csv");

  auto back = ingest(dir);
  REQUIRE(back.size() == 2);
  for (const auto& rec : back) {
    REQUIRE(rec.temperature == 25.0);
    REQUIRE(rec.dc_bias == 0.0);
    REQUIRE(rec.shape == ShapeTag::triangular);
    REQUIRE(rec.material == "beta");
  }
  REQUIRE(back[0].origin == "beta#0");
  REQUIRE(back[1].origin == "beta#1");
}

TEST_CASE("ingest: errors name the offending file and row") {
  const std::string base = scratch("errors");

  SECTION("missing required file") {
    const std::string dir = base + "/missing";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", numeric_row(kRowSamples, 0.0) + "\n");
    atomic_write_file(dir + "/freq.csv", "100000\n");
    REQUIRE_THROWS_WITH(ingest(dir), ContainsSubstring("h.csv"));
  }

  SECTION("wrong row width suggests resampling") {
    const std::string dir = base + "/short";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", "1,2,3\n");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("row 0") && ContainsSubstring("1024") && ContainsSubstring("resample")));
  }

  SECTION("non-numeric cell reports row and column") {
    const std::string dir = base + "/nan";
    fs::create_directories(dir);
    std::string bad = numeric_row(kRowSamples, 0.0);
    atomic_write_file(dir + "/b.csv", bad + "\n");
    // corrupt h.csv's first row, third cell
    std::string h = "0.1,0.2,oops";
    for (std::size_t i = 3; i < kRowSamples; ++i) h += ",0";
    atomic_write_file(dir + "/h.csv", h + "\n");
    atomic_write_file(dir + "/freq.csv", "100000\n");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("h.csv") && ContainsSubstring("row 0") && ContainsSubstring("column 2") && ContainsSubstring("oops")));
  }

  SECTION("row-count mismatch across files") {
    const std::string dir = base + "/counts";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", numeric_row(kRowSamples, 0.0) + "\n" + numeric_row(kRowSamples, 1.0) + "\n");
    atomic_write_file(dir + "/h.csv", numeric_row(kRowSamples, 0.0) + "\n" + numeric_row(kRowSamples, 1.0) + "\n");
    atomic_write_file(dir + "/freq.csv", "100000\n");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("freq.csv") && ContainsSubstring("2") && ContainsSubstring("1")));
  }

  SECTION("non-positive frequency") {
    const std::string dir = base + "/freq0";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", numeric_row(kRowSamples, 0.0) + "\n");
    atomic_write_file(dir + "/h.csv", numeric_row(kRowSamples, 0.0) + "\n");
    atomic_write_file(dir + "/freq.csv", "0\n");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("freq.csv") && ContainsSubstring("positive")));
  }

  SECTION("empty data files are an error, not an empty corpus") {
    const std::string dir = base + "/empty";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", "");
    atomic_write_file(dir + "/h.csv", "");
    atomic_write_file(dir + "/freq.csv", "");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error, Catch::Matchers::MessageMatches(ContainsSubstring("no data rows")));
  }

  SECTION("unknown shape tag") {
    const std::string dir = base + "/shape";
    fs::create_directories(dir);
    atomic_write_file(dir + "/b.csv", numeric_row(kRowSamples, 0.0) + "\n");
    atomic_write_file(dir + "/h.csv", numeric_row(kRowSamples, 0.0) + "\n");
    atomic_write_file(dir + "/freq.csv", "100000\n");
    atomic_write_file(dir + "/shape.csv", "bogus\n");
    REQUIRE_THROWS_MATCHES(ingest(dir), format_error,
                           Catch::Matchers::MessageMatches(ContainsSubstring("shape.csv") && ContainsSubstring("row 0") && ContainsSubstring("bogus")));
  }
}

TEST_CASE("binary corpus: round trip and corruption detection") {
  auto corpus = synth_corpus({SynthKind::ellipse, SynthKind::triangular_duty}, 4, 11);
  corpus[2].shape = ShapeTag::trapezoidal;
  const std::string blob = serialize_corpus(corpus);
  auto back = parse_corpus(blob);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    INFO("record " << i);
    require_equal(back[i], corpus[i]);
  }

  REQUIRE_THROWS_MATCHES(parse_corpus("NOTMAGIC" + blob.substr(8)), format_error, Catch::Matchers::MessageMatches(ContainsSubstring("magic")));
  REQUIRE_THROWS_AS(parse_corpus(blob.substr(0, blob.size() - 9)), format_error);
  REQUIRE_THROWS_MATCHES(parse_corpus(blob + "x"), format_error, Catch::Matchers::MessageMatches(ContainsSubstring("trailing")));

  // flip the shape byte of record 0 to an undefined tag
  std::string bad = blob;
  const std::size_t shape_at = 8 + 8 + 8 + 8 + 8 + 8;  // magic, count, len, freq, temp, bias
  bad[shape_at] = char(7);
  REQUIRE_THROWS_MATCHES(parse_corpus(bad), format_error, Catch::Matchers::MessageMatches(ContainsSubstring("shape")));

  const std::string path = scratch("binary") + "/corpus.bhd";
  save_corpus(path, corpus);
  auto loaded = load_corpus(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) require_equal(loaded[i], corpus[i]);
}

TEST_CASE("filter: predicates, identity, idempotence") {
  auto corpus = synth_corpus({SynthKind::ellipse, SynthKind::parallelogram}, 12, 5);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    corpus[i].temperature = (i % 3 == 0) ? 25.0 : 70.0;
    corpus[i].dc_bias = (i % 4 == 0) ? 1.0 : 0.0;
  }

  SECTION("pass-all filter is the identity") {
    auto out = filter(corpus, DatasetFilter{});
    REQUIRE(out.size() == corpus.size());
    REQUIRE(origins(out) == origins(corpus));
  }

  SECTION("shape allow-list") {
    DatasetFilter f;
    f.shapes = {ShapeTag::triangular};
    auto out = filter(corpus, f);
    REQUIRE(!out.empty());
    for (const auto& r : out) REQUIRE(r.shape == ShapeTag::triangular);
    std::size_t expected = 0;
    for (const auto& r : corpus)
      if (r.shape == ShapeTag::triangular) ++expected;
    REQUIRE(out.size() == expected);
  }

  SECTION("exact temperature and bias, inclusive frequency bounds") {
    DatasetFilter f;
    f.temperature = 25.0;
    f.dc_bias = 1.0;
    auto out = filter(corpus, f);
    for (const auto& r : out) {
      REQUIRE(r.temperature == 25.0);
      REQUIRE(r.dc_bias == 1.0);
    }
    // temp 25 at {0,3,6,9}, bias 1 at {0,4,8}; both only at index 0
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].origin == corpus[0].origin);
  }

  SECTION("frequency bounds are inclusive") {
    DatasetFilter f;
    f.freq_min = corpus[3].b.frequency;
    f.freq_max = corpus[3].b.frequency;
    auto out = filter(corpus, f);
    REQUIRE(out.size() == 1);
    REQUIRE(out[0].origin == corpus[3].origin);
  }

  SECTION("idempotence") {
    DatasetFilter f;
    f.shapes = {ShapeTag::sinusoidal};
    f.temperature = 70.0;
    auto once = filter(corpus, f);
    auto twice = filter(once, f);
    REQUIRE(origins(once) == origins(twice));
  }

  SECTION("inverted frequency bounds rejected") {
    DatasetFilter f;
    f.freq_min = 2e5;
    f.freq_max = 1e5;
    REQUIRE_THROWS_AS(filter(corpus, f), std::invalid_argument);
  }
}

TEST_CASE("split: counts, determinism, and disjointness across seeds") {
  auto corpus = synth_corpus({SynthKind::ellipse}, 30, 9);

  SECTION("explicit counts partition exactly") {
    SplitSpec s;
    s.train_count = 25;
    s.test_count = 5;
    s.seed = 42;
    auto [train, test] = split(corpus, s);
    REQUIRE(train.size() == 25);
    REQUIRE(test.size() == 5);

    auto [train2, test2] = split(corpus, s);
    REQUIRE(origins(train) == origins(train2));
    REQUIRE(origins(test) == origins(test2));
  }

  SECTION("counts must sum to the corpus size") {
    SplitSpec s;
    s.train_count = 25;
    s.test_count = 6;
    REQUIRE_THROWS_AS(split(corpus, s), std::invalid_argument);
    s.train_count = 31;
    s.test_count = 0;
    REQUIRE_THROWS_AS(split(corpus, s), std::invalid_argument);
  }

  SECTION("ratio path rounds to the nearest count") {
    SplitSpec s;
    s.ratio = 0.8;
    auto [train, test] = split(corpus, s);
    REQUIRE(train.size() == 24);
    REQUIRE(test.size() == 6);
  }

  SECTION("ratio validation") {
    SplitSpec s;
    s.ratio = 0.0;
    REQUIRE_THROWS_AS(split(corpus, s), std::invalid_argument);
    s.ratio = 1.0;
    REQUIRE_THROWS_AS(split(corpus, s), std::invalid_argument);
    s.ratio = 0.5;
    REQUIRE_THROWS_AS(split({}, s), std::invalid_argument);
  }

  SECTION("origin sets are disjoint and exhaustive for every seed") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      SplitSpec s;
      s.train_count = 22;
      s.test_count = 8;
      s.seed = seed;
      auto [train, test] = split(corpus, s);
      std::set<std::string> train_set, test_set;
      for (const auto& r : train) train_set.insert(r.origin);
      for (const auto& r : test) test_set.insert(r.origin);
      REQUIRE(train_set.size() == 22);
      REQUIRE(test_set.size() == 8);
      std::vector<std::string> common;
      std::set_intersection(train_set.begin(), train_set.end(), test_set.begin(), test_set.end(), std::back_inserter(common));
      INFO("seed " << seed);
      REQUIRE(common.empty());
      REQUIRE(train_set.size() + test_set.size() == corpus.size());
    }
  }

  SECTION("both sides preserve corpus order") {
    SplitSpec s;
    s.train_count = 20;
    s.test_count = 10;
    s.seed = 3;
    auto [train, test] = split(corpus, s);
    auto position = [&](const std::string& origin) {
      for (std::size_t i = 0; i < corpus.size(); ++i)
        if (corpus[i].origin == origin) return i;
      FAIL("unknown origin " << origin);
      return std::size_t(0);
    };
    for (std::size_t i = 1; i < train.size(); ++i) REQUIRE(position(train[i - 1].origin) < position(train[i].origin));
    for (std::size_t i = 1; i < test.size(); ++i) REQUIRE(position(test[i - 1].origin) < position(test[i].origin));
  }
}

TEST_CASE("augment: grid shape, zero sample, and validation") {
  SynthSpec spec;
  WaveformRecord rec = generate(spec);
  rec.origin = "synthetic#0";

  SECTION("41-label grid with exact targets") {
    auto samples = augment(rec, 20, 1000, 1000);
    REQUIRE(samples.size() == 41);
    for (long long i = -20; i <= 20; ++i) {
      const auto& s = samples[(std::size_t)(i + 20)];
      REQUIRE(s.target.delta == i * 1000);
      REQUIRE(s.target.interp_factor == 1000);
      REQUIRE(s.target.base_length == 1024);
      REQUIRE(s.origin_id == "synthetic#0");
    }
  }

  SECTION("zero-skew sample reproduces the source loop bit-exactly") {
    auto samples = augment(rec, 2, 500, 1000);
    const BhLoop original = make_loop(rec.b, rec.h);
    const BhLoop zero = samples[2].loop();
    REQUIRE(zero.points.size() == original.points.size());
    for (std::size_t t = 0; t < zero.points.size(); ++t) {
      REQUIRE(zero.points[t].h == original.points[t].h);
      REQUIRE(zero.points[t].b == original.points[t].b);
    }
  }

  SECTION("n = 0 yields exactly the original with zero target") {
    auto samples = augment(rec, 0, 1000, 1000);
    REQUIRE(samples.size() == 1);
    REQUIRE(samples[0].target.delta == 0);
  }

  SECTION("grid reach beyond one period is rejected") {
    REQUIRE_THROWS_MATCHES(augment(rec, 600, 2000, 1), std::invalid_argument, Catch::Matchers::MessageMatches(ContainsSubstring("period")));
    REQUIRE_THROWS_AS(augment(rec, -1, 1000, 1000), std::invalid_argument);
    REQUIRE_THROWS_AS(augment(rec, 1, 0, 1000), std::invalid_argument);
    WaveformRecord anon = rec;
    anon.origin.clear();
    REQUIRE_THROWS_MATCHES(augment(anon, 1, 1000, 1000), std::invalid_argument, Catch::Matchers::MessageMatches(ContainsSubstring("origin")));
  }

  SECTION("corpus-level counts multiply out") {
    // the published operating-point counts, as pure arithmetic
    REQUIRE(41 * 1197 == 49077);
    REQUIRE(41 * 1879 == 77039);
    REQUIRE(41 * 197 == 8077);
    REQUIRE(41 * 279 == 11439);

    auto corpus = synth_corpus({SynthKind::ellipse, SynthKind::parallelogram}, 6, 21);
    auto all = augment_all(corpus, 3, 1000, 1000);
    REQUIRE(all.size() == 6 * 7);
    // record-major order: sample i*7+j belongs to record i
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 7; ++j) REQUIRE(all[i * 7 + j].origin_id == corpus[i].origin);
    // siblings share one underlying record
    REQUIRE(all[0].source.get() == all[6].source.get());
    REQUIRE(all[0].source.get() != all[7].source.get());
  }
}

TEST_CASE("split before augmentation keeps origin sets disjoint") {
  auto corpus = synth_corpus({SynthKind::ellipse, SynthKind::triangular_duty}, 10, 31);
  SplitSpec s;
  s.train_count = 8;
  s.test_count = 2;
  s.seed = 17;
  auto [train_recs, test_recs] = split(corpus, s);
  auto train = augment_all(train_recs, 2, 1000, 1000);
  auto test = augment_all(test_recs, 2, 1000, 1000);
  REQUIRE(train.size() == 8 * 5);
  REQUIRE(test.size() == 2 * 5);

  std::set<std::string> train_origins, test_origins;
  for (const auto& x : train) train_origins.insert(x.origin_id);
  for (const auto& x : test) test_origins.insert(x.origin_id);
  REQUIRE(train_origins.size() == 8);
  REQUIRE(test_origins.size() == 2);
  for (const auto& o : test_origins) REQUIRE(train_origins.count(o) == 0);
}
