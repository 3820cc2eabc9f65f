#ifndef INK_ERRORS_HPP
#define INK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ink {

// Shape or layer-contract violations (mismatched tensor extents, bad kernels).
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: invalid config values, degenerate requests.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing or malformed data on disk: files, manifests, checkpoints.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace ink

#endif  // INK_ERRORS_HPP
