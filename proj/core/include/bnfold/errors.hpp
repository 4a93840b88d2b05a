#pragma once

#include <stdexcept>
#include <string>

namespace bnfold {

/// Base class for all library errors. Most carry the id of the offending
/// node so callers can point at the culprit.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class CycleDetected : public Error {
public:
  explicit CycleDetected(const std::string& node_id)
      : Error("cycle detected involving node '" + node_id + "'"), node_id(node_id) {}
  std::string node_id;
};

class UnknownId : public Error {
public:
  UnknownId(const std::string& node_id, const std::string& ref)
      : Error("node '" + node_id + "' references unknown id '" + ref + "'"),
        node_id(node_id), ref(ref) {}
  std::string node_id;
  std::string ref;
};

class ArityMismatch : public Error {
public:
  ArityMismatch(const std::string& node_id, const std::string& detail)
      : Error("arity mismatch at node '" + node_id + "': " + detail), node_id(node_id) {}
  std::string node_id;
};

class ShapeMismatch : public Error {
public:
  ShapeMismatch(const std::string& node_id, const std::string& detail)
      : Error("shape mismatch at node '" + node_id + "': " + detail), node_id(node_id) {}
  std::string node_id;
};

class NotABatchNorm : public Error {
public:
  explicit NotABatchNorm(const std::string& node_id)
      : Error("node '" + node_id + "' is not a batch-norm node"), node_id(node_id) {}
  std::string node_id;
};

class NonInvertibleAffine : public Error {
public:
  explicit NonInvertibleAffine(const std::string& detail)
      : Error("non-invertible channel affine: " + detail) {}
};

class UnsupportedPush : public Error {
public:
  explicit UnsupportedPush(const std::string& detail)
      : Error("unsupported push: " + detail) {}
};

class StalePlan : public Error {
public:
  explicit StalePlan(const std::string& bn_id)
      : Error("fold plan for '" + bn_id + "' was built against a different graph"), bn_id(bn_id) {}
  std::string bn_id;
};

class SignatureMismatch : public Error {
public:
  explicit SignatureMismatch(const std::string& detail)
      : Error("graph signature mismatch: " + detail) {}
};

class InvalidDims : public Error {
public:
  explicit InvalidDims(const std::string& detail) : Error("invalid dims: " + detail) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string& detail) : Error("io error: " + detail) {}
};

class ParseError : public Error {
public:
  ParseError(int line, const std::string& reason)
      : Error("parse error at line " + std::to_string(line) + ": " + reason),
        line(line), reason(reason) {}
  int line;
  std::string reason;
};

class VersionMismatch : public Error {
public:
  explicit VersionMismatch(int found)
      : Error("unsupported format_version " + std::to_string(found)), found(found) {}
  int found;
};

}  // namespace bnfold
