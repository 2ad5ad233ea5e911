// Exception taxonomy shared by the whole library.
#pragma once
#include <stdexcept>
#include <string>

namespace tfm {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error("parse: " + msg) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error("validation: " + msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error("io: " + msg) {}
};

struct NonManifoldError : std::runtime_error {
  explicit NonManifoldError(const std::string& msg) : std::runtime_error("non-manifold: " + msg) {}
};

struct DecimationStuckError : std::runtime_error {
  explicit DecimationStuckError(const std::string& msg) : std::runtime_error("decimation: " + msg) {}
};

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error("shape: " + msg) {}
};

struct NonScalarError : std::runtime_error {
  explicit NonScalarError(const std::string& msg) : std::runtime_error("non-scalar: " + msg) {}
};

struct AllMaskedError : std::runtime_error {
  explicit AllMaskedError(const std::string& msg) : std::runtime_error("all-masked: " + msg) {}
};

struct NoSupervisedSlotError : std::runtime_error {
  explicit NoSupervisedSlotError(const std::string& msg)
      : std::runtime_error("no-supervised-slot: " + msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

struct ManifestError : std::runtime_error {
  explicit ManifestError(const std::string& msg) : std::runtime_error("manifest: " + msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

}  // namespace tfm
