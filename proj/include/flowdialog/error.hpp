#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace flowdialog {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownNodeError : public Error {
 public:
  explicit UnknownNodeError(const std::string& id)
      : Error("unknown node: '" + id + "'"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class NoMatchingEdgeError : public Error {
 public:
  NoMatchingEdgeError(const std::string& node, const std::string& condition,
                      std::vector<std::string> available);
  const std::vector<std::string>& available() const noexcept { return available_; }

 private:
  std::vector<std::string> available_;
};

class PathExplosionError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

/// Parse failure with a 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column);
  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

class UnsupportedConstructError : public SyntaxError {
 public:
  UnsupportedConstructError(const std::string& construct, int line, int column);
  const std::string& construct() const noexcept { return construct_; }

 private:
  std::string construct_;
};

// Gateway errors. Retryable ones are retried by the remote binding before
// they escape.
class GatewayError : public Error {
 public:
  using Error::Error;
  virtual bool retryable() const noexcept { return false; }
};

class TransportError : public GatewayError {
 public:
  using GatewayError::GatewayError;
  bool retryable() const noexcept override { return true; }
};

class RateLimitError : public TransportError {
 public:
  using TransportError::TransportError;
};

class MalformedResponseError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class UnparseableVerdictError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowdialog
