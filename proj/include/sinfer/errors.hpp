#pragma once

#include <stdexcept>
#include <string>

namespace sinfer {

// Value cannot be represented in the fixed-point ring at the configured
// precision, or an intermediate sum left the safe accumulation range.
class OverflowError : public std::runtime_error {
 public:
  explicit OverflowError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed file, frame, or tensor payload.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Layer graph is inconsistent (shape mismatch, bad parameter).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Frame-level violation on the wire: truncated frame, unknown tag,
// oversized length.
class FrameError : public FormatError {
 public:
  explicit FrameError(const std::string& what) : FormatError(what) {}
};

// Counterparty violated the protocol (bad phase, bad frame, config mismatch).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& what) : std::runtime_error(what) {}
};

// Session was aborted deliberately (quota exhausted, config rejected).
class AbortError : public std::runtime_error {
 public:
  explicit AbortError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sinfer
