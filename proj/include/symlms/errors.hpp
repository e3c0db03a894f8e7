#pragma once

#include <stdexcept>
#include <string>

namespace symlms {

/// Linear solve inside the set inversion exceeded the condition-number limit
/// (typically near-coincident first-column roots).
class IllConditionedError : public std::runtime_error {
 public:
  explicit IllConditionedError(const std::string& what) : std::runtime_error(what) {}
};

/// Root sensitivity requested at a (near-)repeated root, where it is infinite.
class RepeatedRootError : public std::runtime_error {
 public:
  explicit RepeatedRootError(const std::string& what) : std::runtime_error(what) {}
};

/// A filter state left the admissible region (non-finite or beyond the guard).
class DivergedError : public std::runtime_error {
 public:
  explicit DivergedError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace symlms
