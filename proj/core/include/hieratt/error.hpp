#pragma once

#include <stdexcept>
#include <string>

namespace hieratt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or size mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Token id outside the vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

/// Degenerate or out-of-bounds region box.
class RegionError : public Error {
 public:
  using Error::Error;
};

/// Backward pass requested through a node without a backward rule.
class NoBackwardError : public Error {
 public:
  using Error::Error;
};

/// Malformed input text (JSON, CSV, manifest lines).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Cross-reference failure inside otherwise well-formed input.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Unrecognized container layout (bad magic, unknown version).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Container whose manifest and payload disagree.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

}  // namespace hieratt
