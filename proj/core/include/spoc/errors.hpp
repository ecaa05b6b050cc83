#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace spoc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value, preset name or config key. `key()` names the
/// offending entry when there is one.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message, std::string key = {})
      : Error(key.empty() ? message : "config key '" + key + "': " + message),
        key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Two operands live on different meshes or carry mismatched dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A state, particle or adjoint produced a non-finite value.
class BlowUpError : public Error {
 public:
  BlowUpError(const std::string& what, std::size_t step,
              std::optional<std::size_t> particle = std::nullopt)
      : Error(describe(what, step, particle)), step_(step), particle_(particle) {}

  std::size_t step() const noexcept { return step_; }
  std::optional<std::size_t> particle() const noexcept { return particle_; }

 private:
  static std::string describe(const std::string& what, std::size_t step,
                              std::optional<std::size_t> particle) {
    std::string msg = what + " blew up at step " + std::to_string(step);
    if (particle) msg += " (particle " + std::to_string(*particle) + ")";
    return msg;
  }

  std::size_t step_;
  std::optional<std::size_t> particle_;
};

}  // namespace spoc
