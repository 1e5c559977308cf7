#pragma once

#include <stdexcept>
#include <string>

namespace ecohmpc {

/// Malformed or inconsistent input data (files, configuration values).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// An optimization problem or a closed-loop run could not be completed.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what) : std::runtime_error(what) {}
};

/// The plant detected a hard safety violation (collision with the lead vehicle).
class SimulationAbort : public InfeasibleError {
 public:
  explicit SimulationAbort(const std::string& what) : InfeasibleError(what) {}
};

}  // namespace ecohmpc
