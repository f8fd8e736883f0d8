#pragma once

#include <stdexcept>

namespace cica {

// malformed file / unparsable input
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// shape or size mismatch between operands
struct dimension_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// attempt to combine sketches built with different operators or modes
struct fingerprint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace cica
