// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace softmask {

// Each error kind maps onto one status code of the C API.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(const std::string& term, long step)
      : Error("non-finite " + term + " at step " + std::to_string(step)),
        term_(term),
        step_(step) {}

  const std::string& term() const { return term_; }
  long step() const { return step_; }

 private:
  std::string term_;
  long step_;
};

}  // namespace softmask
