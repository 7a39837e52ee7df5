#include <bit>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "dps/codec.hpp"
#include "dps/config.hpp"
#include "dps/error.hpp"
#include "dps/pattern_store.hpp"
#include "support/oracles.hpp"

namespace dps {
namespace {

template <class F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected dps::Error";
  return Errc::io;
}

std::uint32_t read_u32_le(std::string_view s, std::size_t at) {
  const auto* b = reinterpret_cast<const unsigned char*>(s.data() + at);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double read_f64_le(std::string_view s, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(i)]);
  return std::bit_cast<double>(bits);
}

// Bits of a few awkward doubles, including subnormals and signed zero.
std::vector<double> awkward_values() {
  return {0.0, -0.0, 1.0, -1.5, 4.9e-324, 2.2250738585072014e-308, 1.7976931348623157e308, 0.1, -1e-300};
}

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

TEST(DatasetCodec, HeaderLayoutMatchesFormat) {
  Rng rng(1);
  Batch b;
  b.images = testing::random_tensor({3, 2, 4, 5}, rng);
  b.labels = {2, 0, 7};
  const std::string bytes = encode_dataset(b);
  EXPECT_EQ(bytes.substr(0, 4), "DPSD");
  EXPECT_EQ(read_u32_le(bytes, 4), 3u);
  EXPECT_EQ(read_u32_le(bytes, 8), 2u);
  EXPECT_EQ(read_u32_le(bytes, 12), 4u);
  EXPECT_EQ(read_u32_le(bytes, 16), 5u);
  EXPECT_EQ(bytes.size(), 20u + 8u * 120u + 4u * 3u);
  EXPECT_TRUE(same_bits(read_f64_le(bytes, 20), b.images[0]));
  EXPECT_EQ(read_u32_le(bytes, 20 + 8 * 120 + 4), 0u);
}

TEST(DatasetCodec, RoundTripIsBitExact) {
  Rng rng(2);
  Batch b;
  b.images = testing::random_tensor({2, 1, 3, 3}, rng);
  const auto odd = awkward_values();
  std::copy(odd.begin(), odd.end(), b.images.values().begin());
  b.labels = {1, 4};
  const Batch d = decode_dataset(encode_dataset(b));
  EXPECT_EQ(d.images.shape(), b.images.shape());
  EXPECT_EQ(d.labels, b.labels);
  for (std::size_t i = 0; i < b.images.size(); ++i) EXPECT_TRUE(same_bits(d.images[i], b.images[i]));
}

TEST(DatasetCodec, TruncationAndMagicAreFormatErrors) {
  Rng rng(3);
  Batch b;
  b.images = testing::random_tensor({2, 1, 2, 2}, rng);
  b.labels = {0, 1};
  const std::string bytes = encode_dataset(b);
  for (std::size_t cut : {0ul, 3ul, 10ul, 20ul, bytes.size() - 1}) {
    EXPECT_EQ(code_of([&] { decode_dataset(std::string_view(bytes).substr(0, cut)); }), Errc::format) << cut;
  }
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_dataset(bad); }), Errc::format);
  EXPECT_EQ(code_of([&] { decode_dataset(bytes + "x"); }), Errc::format);
}

ModelCheckpoint sample_model() {
  ModelCheckpoint m = make_model({2, 8, 8}, standard_cnn_layers(std::vector<std::size_t>{3, 4}, 5), 42);
  Rng rng(4);
  for (auto& b : m.biases)
    for (double& v : b) v = rng.normal();
  m.weights[0][0] = -0.0;
  m.weights[0][1] = 4.9e-324;
  return m;
}

TEST(CheckpointCodec, RoundTripIsBitExact) {
  const auto m = sample_model();
  const std::string bytes = encode_checkpoint(m);
  const auto d = decode_checkpoint(bytes);
  EXPECT_EQ(d.layers, m.layers);
  EXPECT_EQ(d.input, m.input);
  EXPECT_EQ(d.rng_seed, 42u);
  EXPECT_EQ(d.target_layer_index, m.target_layer_index);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    ASSERT_EQ(d.weights[l].size(), m.weights[l].size());
    for (std::size_t i = 0; i < m.weights[l].size(); ++i) EXPECT_TRUE(same_bits(d.weights[l][i], m.weights[l][i]));
    for (std::size_t i = 0; i < m.biases[l].size(); ++i) EXPECT_TRUE(same_bits(d.biases[l][i], m.biases[l][i]));
  }
  EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(CheckpointCodec, HeaderIsReadableText) {
  const auto m = sample_model();
  const std::string bytes = encode_checkpoint(m);
  EXPECT_EQ(bytes.rfind("DPSCKPT 1\n", 0), 0u);
  EXPECT_NE(bytes.find("\nlayers " + std::to_string(m.layers.size()) + "\n"), std::string::npos);
  EXPECT_NE(bytes.find("\nconv 3 3 1 1\n"), std::string::npos);
  EXPECT_NE(bytes.find("\ntarget_layer "), std::string::npos);
  EXPECT_NE(bytes.find("\nseed 42\n"), std::string::npos);
  EXPECT_NE(bytes.find("\nend\n"), std::string::npos);
}

TEST(CheckpointCodec, CorruptionIsFormatError) {
  const std::string bytes = encode_checkpoint(sample_model());
  for (std::size_t cut : {0ul, 5ul, 30ul, bytes.size() / 2, bytes.size() - 1}) {
    EXPECT_EQ(code_of([&] { decode_checkpoint(std::string_view(bytes).substr(0, cut)); }), Errc::format) << cut;
  }
  std::string bad = bytes;
  bad.replace(0, 7, "NOTCKPT");
  EXPECT_EQ(code_of([&] { decode_checkpoint(bad); }), Errc::format);
  std::string version = bytes;
  version.replace(8, 1, "9");
  EXPECT_EQ(code_of([&] { decode_checkpoint(version); }), Errc::format);
  std::string layer = bytes;
  layer.replace(layer.find("gap"), 3, "gup");
  EXPECT_EQ(code_of([&] { decode_checkpoint(layer); }), Errc::format);
}

TEST(CheckpointCodec, FilesRoundTripAndMissingFileIsIo) {
  TempDir dir("dps_ckpt_test");
  const auto m = sample_model();
  save_checkpoint(m, dir.path() / "m.dpsm");
  EXPECT_EQ(load_checkpoint(dir.path() / "m.dpsm"), m);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "m.dpsm.tmp"));
  EXPECT_EQ(code_of([&] { load_checkpoint(dir.path() / "missing.dpsm"); }), Errc::io);
  EXPECT_EQ(code_of([&] { save_checkpoint(m, dir.path() / "no" / "such" / "dir.dpsm"); }), Errc::io);
}

PatternStore random_store(Rng& rng, std::uint32_t k, std::uint32_t n) {
  PatternStore s;
  s.channels = k;
  for (std::uint32_t i = 0; i < n; ++i) {
    DecisionPattern p;
    p.sample_id = static_cast<std::uint32_t>(rng.next());
    p.true_class = static_cast<std::uint32_t>(rng.below(10));
    p.predicted_class = static_cast<std::uint32_t>(rng.below(10));
    p.class_used = p.true_class;
    p.class_logit = rng.normal() * 1e3;
    p.loss = std::abs(rng.normal());
    p.pattern = testing::random_vector(k, rng);
    if (i == 0) std::fill(p.pattern.begin(), p.pattern.end(), 0.0);
    p.renormalize();
    s.patterns.push_back(std::move(p));
  }
  return s;
}

TEST(PatternStoreCodec, LayoutMatchesFormat) {
  Rng rng(5);
  const auto s = random_store(rng, 3, 2);
  const std::string bytes = encode_pattern_store(s);
  EXPECT_EQ(bytes.substr(0, 4), "DPS1");
  EXPECT_EQ(read_u32_le(bytes, 4), kPatternStoreVersion);
  EXPECT_EQ(read_u32_le(bytes, 8), 3u);
  EXPECT_EQ(read_u32_le(bytes, 12), 2u);
  const std::size_t rec = 16 + 16 + 24;
  EXPECT_EQ(bytes.size(), 16 + 2 * rec);
  const std::size_t r1 = 16 + rec;
  EXPECT_EQ(read_u32_le(bytes, r1), s.patterns[1].sample_id);
  EXPECT_EQ(read_u32_le(bytes, r1 + 4), s.patterns[1].true_class);
  EXPECT_EQ(read_u32_le(bytes, r1 + 8), s.patterns[1].predicted_class);
  EXPECT_EQ(read_u32_le(bytes, r1 + 12), s.patterns[1].class_used);
  EXPECT_TRUE(same_bits(read_f64_le(bytes, r1 + 16), s.patterns[1].class_logit));
  EXPECT_TRUE(same_bits(read_f64_le(bytes, r1 + 24), s.patterns[1].loss));
  EXPECT_TRUE(same_bits(read_f64_le(bytes, r1 + 32), s.patterns[1].pattern[0]));
}

TEST(PatternStoreCodec, RandomRecordsRoundTripBitExact) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const auto s = random_store(rng, 1 + static_cast<std::uint32_t>(rng.below(64)), 1 + static_cast<std::uint32_t>(rng.below(30)));
    const auto d = decode_pattern_store(encode_pattern_store(s));
    ASSERT_EQ(d.channels, s.channels);
    ASSERT_EQ(d.patterns.size(), s.patterns.size());
    for (std::size_t i = 0; i < s.patterns.size(); ++i) {
      const auto& a = s.patterns[i];
      const auto& b = d.patterns[i];
      EXPECT_EQ(a.sample_id, b.sample_id);
      EXPECT_EQ(a.true_class, b.true_class);
      EXPECT_EQ(a.predicted_class, b.predicted_class);
      EXPECT_EQ(a.class_used, b.class_used);
      EXPECT_TRUE(same_bits(a.class_logit, b.class_logit));
      EXPECT_TRUE(same_bits(a.loss, b.loss));
      for (std::size_t k = 0; k < a.pattern.size(); ++k) EXPECT_TRUE(same_bits(a.pattern[k], b.pattern[k]));
      EXPECT_EQ(a.normalized, b.normalized);  // recomputed on load
      EXPECT_EQ(a.degenerate(), b.degenerate());
    }
  }
}

TEST(PatternStoreCodec, EmptyStoreAndErrors) {
  PatternStore empty;
  empty.channels = 8;
  const auto d = decode_pattern_store(encode_pattern_store(empty));
  EXPECT_EQ(d.channels, 8u);
  EXPECT_TRUE(d.patterns.empty());
  Rng rng(7);
  const std::string bytes = encode_pattern_store(random_store(rng, 4, 3));
  EXPECT_EQ(code_of([&] { decode_pattern_store(std::string_view(bytes).substr(0, bytes.size() - 3)); }), Errc::format);
  std::string version = bytes;
  version[4] = 2;
  EXPECT_EQ(code_of([&] { decode_pattern_store(version); }), Errc::format);
  PatternStore wrong = random_store(rng, 4, 1);
  wrong.channels = 5;
  EXPECT_EQ(code_of([&] { encode_pattern_store(wrong); }), Errc::input_shape);
}

TEST(Sidecar, RoundTripAndPath) {
  StoreSidecar s;
  s.checkpoint_hash = "abc123";
  s.target_layer = 6;
  s.split = "test";
  s.config["class_used"] = "true_label";
  const auto d = decode_sidecar(encode_sidecar(s));
  EXPECT_EQ(d.checkpoint_hash, "abc123");
  EXPECT_EQ(d.target_layer, 6u);
  EXPECT_EQ(d.split, "test");
  EXPECT_EQ(d.config, s.config);
  EXPECT_EQ(sidecar_path("runs/x.dps1"), std::filesystem::path("runs/x.dps1.meta"));
}

TEST(Hashing, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(KeyValueConfig, ParsesCommentsListsAndTracksUse) {
  const auto kv = parse_key_values("# header\nname = ideal  # trailing\nseed=7\n\nchannels = 8, 16,16\nratio = 0.25\n");
  EXPECT_EQ(kv.get_string("name"), "ideal");
  EXPECT_EQ(kv.get_uint("seed"), 7u);
  EXPECT_EQ(kv.get_uint_list("channels", {}), (std::vector<std::size_t>{8, 16, 16}));
  EXPECT_EQ(kv.unused_keys(), std::vector<std::string>{"ratio"});
  EXPECT_DOUBLE_EQ(kv.get_real("ratio"), 0.25);
  EXPECT_TRUE(kv.unused_keys().empty());
  EXPECT_EQ(kv.get_uint("absent", 3), 3u);
  EXPECT_EQ(parse_key_values(kv.to_text()).entries(), kv.entries());
}

TEST(KeyValueConfig, Errors) {
  EXPECT_EQ(code_of([] { parse_key_values("novalue\n"); }), Errc::config);
  EXPECT_EQ(code_of([] { parse_key_values("a = 1\na = 2\n"); }), Errc::config);
  EXPECT_EQ(code_of([] { parse_key_values(" = 1\n"); }), Errc::config);
  const auto kv = parse_key_values("n = -3\nx = abc\n");
  EXPECT_EQ(code_of([&] { kv.get_uint("n"); }), Errc::config);
  EXPECT_EQ(code_of([&] { kv.get_real("x"); }), Errc::config);
  EXPECT_EQ(code_of([&] { kv.get_string("missing"); }), Errc::config);
  EXPECT_EQ(code_of([] { load_key_values("/nonexistent/dps.cfg"); }), Errc::config);
}

}  // namespace
}  // namespace dps
