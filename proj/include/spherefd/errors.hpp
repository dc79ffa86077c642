#pragma once

#include <stdexcept>
#include <string>

namespace spherefd {

/// Base class of every structured error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (e.g. chart of an
/// antipodal point).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A kernel was asked for more derivatives at t = 1 than it possesses.
class SmoothnessError : public Error {
 public:
  SmoothnessError(const std::string& msg, int max_depth, int requested_depth)
      : Error(msg), max_depth(max_depth), requested_depth(requested_depth) {}
  int max_depth;
  int requested_depth;
};

/// A local kernel matrix could not be factorized reliably.
class IllConditionedPatch : public Error {
 public:
  IllConditionedPatch(const std::string& msg, int patch_index, double cond)
      : Error(msg), patch_index(patch_index), cond_estimate(cond) {}
  int patch_index;
  double cond_estimate;
};

/// Cap cover construction failed (coverage gap or radius cap reached).
class AtlasConstructionError : public Error {
 public:
  AtlasConstructionError(const std::string& msg, int patch_index)
      : Error(msg), patch_index(patch_index) {}
  int patch_index;
};

/// Non-finite or otherwise unusable sampled data.
class DataError : public Error {
 public:
  DataError(const std::string& msg, int node_index)
      : Error(msg), node_index(node_index) {}
  int node_index;
};

/// Least-squares system is structurally defective or a solver precondition
/// failed.
class SolverError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent configuration; carries the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& msg, std::string key)
      : Error(msg), key(std::move(key)) {}
  std::string key;
};

}  // namespace spherefd
