#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace demd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed data: non-finite coordinates, empty distributions, bad files.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A parameter outside its documented range.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Objects that cannot be combined in their current state.
class InvalidState : public Error {
 public:
  using Error::Error;
};

/// Operation not defined for the supplied configuration.
class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

/// Iterative solver failed to converge or a factorization broke down.
class NumericalFailure : public Error {
 public:
  using Error::Error;
};

/// Kernel rows without any affinity mass.
class DegenerateNode : public Error {
 public:
  DegenerateNode(std::string what, std::vector<int> nodes)
      : Error(std::move(what)), nodes_(std::move(nodes)) {}

  const std::vector<int>& nodes() const noexcept { return nodes_; }

 private:
  std::vector<int> nodes_;
};

/// Failure to read or parse an input file.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace demd
