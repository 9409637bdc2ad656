#pragma once

#include <stdexcept>
#include <string>

namespace tetherfem {

/// Invalid user input (domain specs, configs, out-of-range parameters).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mesh topology violations: hanging vertices, non-manifold edges, inverted triangles.
class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration text that fails to parse; carries the offending line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace tetherfem
