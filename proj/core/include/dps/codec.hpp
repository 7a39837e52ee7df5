#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "dps/model.hpp"

namespace dps {

// Little-endian fixed-width primitives used by every binary format.
namespace le {
void put_u32(std::string& out, std::uint32_t v);
void put_f64(std::string& out, double v);

class Reader {
 public:
  explicit Reader(std::string_view bytes, std::string_view what) : bytes_(bytes), what_(what) {}
  std::uint32_t u32();
  double f64();
  std::string_view take(std::size_t n);
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};
}  // namespace le

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Text header (version, input shape, layer list, seed, target layer) then the
/// parameter blob: per layer, weights then biases, little-endian f64.
std::string encode_checkpoint(const ModelCheckpoint& model);
ModelCheckpoint decode_checkpoint(std::string_view bytes);

/// "DPSD", u32 N, C, H, W, N*C*H*W f64 pixels, N u32 labels.
std::string encode_dataset(const Batch& batch);
Batch decode_dataset(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
/// Writes via a temporary sibling and renames, so readers never observe a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);
void save_dataset(const Batch& batch, const std::filesystem::path& path);
Batch load_dataset(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dps
