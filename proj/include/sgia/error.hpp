// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace sgia {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration or arguments; nothing has been computed or written yet.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (manifests, splits, images).
class DataError : public Error {
 public:
  using Error::Error;
};

// Sequence store access or layout problems.
class StoreError : public Error {
 public:
  using Error::Error;
};

// A store required by the caller is not complete.
class IncompleteStoreError : public StoreError {
 public:
  using StoreError::StoreError;
};

// Non-finite loss during training.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace sgia
