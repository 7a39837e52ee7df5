#include "dps/codec.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dps/error.hpp"

namespace dps {

namespace le {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

std::string_view Reader::take(std::size_t n) {
  if (remaining() < n) {
    throw Error(Errc::format, std::string(what_) + " truncated at byte " + std::to_string(pos_));
  }
  auto s = bytes_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint32_t Reader::u32() {
  const auto s = take(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  return v;
}

double Reader::f64() {
  const auto s = take(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace le

namespace {

constexpr std::string_view kCheckpointMagic = "DPSCKPT";
constexpr std::string_view kDatasetMagic = "DPSD";

std::string layer_line(const LayerSpec& s) {
  std::ostringstream os;
  os << layer_kind_name(s.kind);
  if (s.kind == LayerKind::conv) os << ' ' << s.out_channels << ' ' << s.kernel << ' ' << s.stride << ' ' << s.padding;
  if (s.kind == LayerKind::linear) os << ' ' << s.out_classes;
  return os.str();
}

LayerSpec parse_layer(const std::string& line) {
  std::istringstream is(line);
  std::string kind;
  is >> kind;
  LayerSpec s;
  if (kind == "conv") {
    s.kind = LayerKind::conv;
    is >> s.out_channels >> s.kernel >> s.stride >> s.padding;
  } else if (kind == "relu") {
    s.kind = LayerKind::relu;
  } else if (kind == "maxpool") {
    s.kind = LayerKind::maxpool;
  } else if (kind == "gap") {
    s.kind = LayerKind::gap;
  } else if (kind == "linear") {
    s.kind = LayerKind::linear;
    is >> s.out_classes;
  } else {
    throw Error(Errc::format, "unknown layer '" + kind + "'");
  }
  if (is.fail()) throw Error(Errc::format, "malformed layer line '" + line + "'");
  return s;
}

// Reads one '\n'-terminated header line.
std::string header_line(le::Reader& r) {
  std::string line;
  for (;;) {
    const char c = r.take(1)[0];
    if (c == '\n') return line;
    line.push_back(c);
    if (line.size() > 4096) throw Error(Errc::format, "checkpoint header line too long");
  }
}

template <typename... T>
void expect_fields(const std::string& line, std::string_view key, T&... fields) {
  std::istringstream is(line);
  std::string k;
  is >> k;
  if (k != key) throw Error(Errc::format, "expected '" + std::string(key) + "' in checkpoint header, got '" + line + "'");
  (is >> ... >> fields);
  if (is.fail()) throw Error(Errc::format, "malformed checkpoint header line '" + line + "'");
}

}  // namespace

std::string encode_checkpoint(const ModelCheckpoint& model) {
  validate_model(model);
  std::ostringstream h;
  h << kCheckpointMagic << ' ' << kCheckpointFormatVersion << '\n';
  h << "input " << model.input.channels << ' ' << model.input.height << ' ' << model.input.width << '\n';
  h << "layers " << model.layers.size() << '\n';
  for (const auto& s : model.layers) h << layer_line(s) << '\n';
  h << "seed " << model.rng_seed << '\n';
  h << "target_layer " << model.target_layer_index << '\n';
  std::size_t count = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i) count += model.weights[i].size() + model.biases[i].size();
  h << "params " << count << '\n';
  h << "end\n";
  std::string out = h.str();
  out.reserve(out.size() + 8 * count);
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    for (double v : model.weights[i]) le::put_f64(out, v);
    for (double v : model.biases[i]) le::put_f64(out, v);
  }
  return out;
}

ModelCheckpoint decode_checkpoint(std::string_view bytes) {
  le::Reader r(bytes, "checkpoint");
  std::uint32_t version = 0;
  {
    const auto line = header_line(r);
    if (line.rfind(kCheckpointMagic, 0) != 0) throw Error(Errc::format, "bad checkpoint magic");
    expect_fields(line, kCheckpointMagic, version);
    if (version != kCheckpointFormatVersion) {
      throw Error(Errc::format, "unsupported checkpoint version " + std::to_string(version));
    }
  }
  ModelCheckpoint m;
  expect_fields(header_line(r), "input", m.input.channels, m.input.height, m.input.width);
  std::size_t n_layers = 0;
  expect_fields(header_line(r), "layers", n_layers);
  if (n_layers > 1024) throw Error(Errc::format, "implausible layer count");
  for (std::size_t i = 0; i < n_layers; ++i) m.layers.push_back(parse_layer(header_line(r)));
  expect_fields(header_line(r), "seed", m.rng_seed);
  expect_fields(header_line(r), "target_layer", m.target_layer_index);
  std::size_t count = 0;
  expect_fields(header_line(r), "params", count);
  if (header_line(r) != "end") throw Error(Errc::format, "checkpoint header not terminated by 'end'");

  std::vector<std::pair<std::size_t, std::size_t>> sizes;
  try {
    sizes = parameter_sizes(m.input, m.layers);
  } catch (const Error& e) {
    throw Error(Errc::format, std::string("inconsistent checkpoint architecture: ") + e.what());
  }
  std::size_t expected = 0;
  for (auto [w, b] : sizes) expected += w + b;
  if (expected != count) throw Error(Errc::format, "parameter count does not match architecture");
  if (r.remaining() != 8 * count) throw Error(Errc::format, "checkpoint parameter blob has wrong length");
  for (auto [nw, nb] : sizes) {
    std::vector<double> w(nw), b(nb);
    for (double& v : w) v = r.f64();
    for (double& v : b) v = r.f64();
    m.weights.push_back(std::move(w));
    m.biases.push_back(std::move(b));
  }
  try {
    validate_model(m);
  } catch (const Error& e) {
    throw Error(Errc::format, std::string("invalid checkpoint: ") + e.what());
  }
  return m;
}

std::string encode_dataset(const Batch& batch) {
  validate_batch(batch);
  const auto s = batch.sample_shape();
  std::string out(kDatasetMagic);
  le::put_u32(out, static_cast<std::uint32_t>(batch.size()));
  le::put_u32(out, static_cast<std::uint32_t>(s.channels));
  le::put_u32(out, static_cast<std::uint32_t>(s.height));
  le::put_u32(out, static_cast<std::uint32_t>(s.width));
  out.reserve(out.size() + 8 * batch.images.size() + 4 * batch.size());
  for (double v : batch.images.values()) le::put_f64(out, v);
  for (auto l : batch.labels) le::put_u32(out, l);
  return out;
}

Batch decode_dataset(std::string_view bytes) {
  le::Reader r(bytes, "dataset");
  if (r.take(4) != kDatasetMagic) throw Error(Errc::format, "bad dataset magic (expected DPSD)");
  const std::size_t n = r.u32(), c = r.u32(), h = r.u32(), w = r.u32();
  const std::size_t pixels = n * c * h * w;
  if (r.remaining() != 8 * pixels + 4 * n) throw Error(Errc::format, "dataset payload length mismatch");
  Batch b;
  std::vector<double> data(pixels);
  for (double& v : data) v = r.f64();
  b.images = Tensor({n, c, h, w}, std::move(data));
  b.labels.resize(n);
  for (auto& l : b.labels) l = r.u32();
  return b;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io, "short write to " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::io, "cannot rename into " + path.string());
  }
}

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(model));
}
ModelCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }
void save_dataset(const Batch& batch, const std::filesystem::path& path) { write_file(path, encode_dataset(batch)); }
Batch load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::io, "sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int{md[i]};
  return os.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace dps
