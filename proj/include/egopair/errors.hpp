// Error taxonomy for the whole library. Contract violations and I/O
// failures throw; data-quality findings travel as values (see
// ValidationReport and Verdict), never as exceptions.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace egopair {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- corpus ----------------------------------------------------------------

class MissingFile : public Error {
 public:
  explicit MissingFile(const std::string& path)
      : Error("missing file: " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class SchemaError : public Error {
 public:
  SchemaError(std::string field, std::string reason)
      : Error("schema error at \"" + field + "\": " + reason),
        field_(std::move(field)),
        reason_(std::move(reason)) {}
  const std::string& field() const { return field_; }
  const std::string& reason() const { return reason_; }

 private:
  std::string field_;
  std::string reason_;
};

class InvariantViolation : public Error {
 public:
  InvariantViolation(std::string trajectory_id, std::string detail)
      : Error("invariant violation in trajectory \"" + trajectory_id + "\": " + detail),
        trajectory_id_(std::move(trajectory_id)),
        detail_(std::move(detail)) {}
  const std::string& trajectory_id() const { return trajectory_id_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string trajectory_id_;
  std::string detail_;
};

class NoSkeleton : public Error {
 public:
  explicit NoSkeleton(const std::string& trajectory_id)
      : Error("trajectory \"" + trajectory_id + "\" has no subtask skeleton") {}
};

class OutOfRange : public Error {
 public:
  using Error::Error;
};

// ---- sampling --------------------------------------------------------------

class EmptyTrajectory : public Error {
 public:
  explicit EmptyTrajectory(const std::string& trajectory_id)
      : Error("trajectory \"" + trajectory_id + "\" has no frames") {}
};

class OrderViolation : public Error {
 public:
  using Error::Error;
};

class EqualFrames : public Error {
 public:
  using Error::Error;
};

// ---- planner / builder -----------------------------------------------------

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::string raw)
      : Error("parse error: " + what), raw_(std::move(raw)) {}
  // Original response text, retained for audit.
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

class MissingSkeleton : public Error {
 public:
  using Error::Error;
};

class AnnotatorUnavailable : public Error {
 public:
  using Error::Error;
};

class LabelMismatch : public Error {
 public:
  LabelMismatch(const std::string& what, std::string raw)
      : Error("annotation rejected: " + what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// ---- model gateway ---------------------------------------------------------

class BackendError : public Error {
 public:
  using Error::Error;
};

class Timeout : public BackendError {
 public:
  using BackendError::BackendError;
};

class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};

class RateLimited : public BackendError {
 public:
  using BackendError::BackendError;
};

class OversizeImage : public Error {
 public:
  using Error::Error;
};

// ---- evaluation ------------------------------------------------------------

class DatasetError : public Error {
 public:
  using Error::Error;
};

class EmptyResults : public Error {
 public:
  EmptyResults() : Error("no results to aggregate") {}
};

class EvalAborted : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace egopair
