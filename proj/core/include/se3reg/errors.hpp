#pragma once

#include <stdexcept>
#include <string>

namespace se3reg {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input geometry does not constrain all motion parameters (coincident or
// collinear points, rank-deficient normal equations, S < 3).
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

// The view graph does not connect all scans.
class DisconnectedGraph : public Error {
 public:
  using Error::Error;
};

// Correspondence pruning rejected every candidate pair.
class EmptyAfterPrune : public Error {
 public:
  using Error::Error;
};

// Malformed input file. The message carries the location (line for text
// formats, byte offset for binary payloads).
class ParseError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

}  // namespace se3reg
