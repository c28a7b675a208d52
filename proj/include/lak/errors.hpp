#pragma once

#include <stdexcept>
#include <string>

namespace lak {

/// Base class for all recoverable toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File missing, unreadable, truncated or otherwise not parseable.
struct IoError : Error {
  using Error::Error;
};

/// A file parsed, but its header/columns do not match the expected schema.
struct SchemaError : Error {
  using Error::Error;
};

/// A value inside otherwise well-formed input is out of domain.
struct ValueError : Error {
  using Error::Error;
};

/// Invalid or contradictory configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Two artifacts (model, datastore, checkpoint) do not belong together.
struct CompatError : Error {
  using Error::Error;
};

}  // namespace lak
