#pragma once

#include <stdexcept>
#include <string>

namespace milab {

// Root of every error thrown by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

// Operation requested on a pooling variant that does not support it
// (e.g. attention weights of a mean-pooling model).
class UnsupportedVariant : public Error {
 public:
  using Error::Error;
};

// Operation that needs additive composition called on a joint model.
class UnsupportedComposition : public Error {
 public:
  using Error::Error;
};

class InstanceCountError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace milab
