#pragma once

#include <stdexcept>
#include <string>

namespace gkl {

/// Raised for invalid experiment configuration (unknown keys, missing blocks,
/// out-of-range values). The CLI maps this to exit status 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised for file-system and parse failures (missing files, bad IDX magic,
/// truncated payloads). The CLI maps this to exit status 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace gkl
