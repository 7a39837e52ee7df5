#include "dps/error.hpp"

namespace dps {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::input_shape: return "input-shape error";
    case Errc::class_range: return "class-range error";
    case Errc::empty_input: return "empty-input error";
    case Errc::degenerate_pattern: return "degenerate-pattern error";
    case Errc::empty_class: return "empty-class error";
    case Errc::insufficient_samples: return "insufficient-samples error";
    case Errc::insufficient_classes: return "insufficient-classes error";
    case Errc::reference_mismatch: return "reference-mismatch error";
    case Errc::degenerate_fit: return "degenerate-fit error";
    case Errc::config: return "config error";
    case Errc::range: return "range error";
    case Errc::format: return "format error";
    case Errc::compatibility: return "compatibility error";
    case Errc::io: return "io error";
  }
  return "error";
}

}  // namespace dps
