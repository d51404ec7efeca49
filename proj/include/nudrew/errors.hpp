#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace nudrew {

// Malformed input: bad graph, bad labels, bad config values.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Run-config schema violation. field() is the dotted path, e.g. "model.hidden".
class ConfigError : public ValidationError {
 public:
  ConfigError(std::string field, const std::string& what) : ValidationError(what), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// Incompatible tensor shapes.
class DimensionError : public std::invalid_argument {
 public:
  explicit DimensionError(const std::string& what) : std::invalid_argument(what) {}
};

// Index outside a valid range (hop beyond k_max, un-pushed layer, ...).
class RangeError : public std::out_of_range {
 public:
  explicit RangeError(const std::string& what) : std::out_of_range(what) {}
};

}  // namespace nudrew
