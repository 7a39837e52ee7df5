#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dps {

/// Failure categories surfaced by the toolkit. Every thrown dps::Error carries one.
enum class Errc {
  input_shape,
  class_range,
  empty_input,
  degenerate_pattern,
  empty_class,
  insufficient_samples,
  insufficient_classes,
  reference_mismatch,
  degenerate_fit,
  config,
  range,
  format,
  compatibility,
  io,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace dps
