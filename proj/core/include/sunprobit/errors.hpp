#pragma once

#include <stdexcept>
#include <string>

namespace sunprobit {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotFactorizable : Error {
  using Error::Error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

struct ToleranceNotMet : Error {
  using Error::Error;
};

struct InfeasibleRegion : Error {
  using Error::Error;
};

struct DimensionTooLarge : Error {
  using Error::Error;
};

struct IndexOutOfRange : Error {
  using Error::Error;
};

struct MaxTriesExceeded : Error {
  using Error::Error;
};

struct QOverCap : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

}  // namespace sunprobit
