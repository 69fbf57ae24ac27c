#pragma once

#include <stdexcept>
#include <string>

namespace nytron {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (dataset/basis/model files); message carries the line number.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration (bad hyperparameters, p > n, quota > shard size, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: dimension mismatches and other precondition violations.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Collective/wire protocol violations: bad magic, round or length mismatch.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Transport failures: broken edges, timeouts, peer crashes.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Non-finite values encountered inside a solver.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace nytron
