#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace bnfold {

/// Dense tensor shape. Convention: dims[0] is the batch axis and is stored
/// as 0 meaning "any batch size"; the channel axis is always index 1.
/// Vector features are [batch, channels], images [batch, channels, h, w].
struct TensorShape {
  std::vector<int64_t> dims;

  TensorShape() = default;
  TensorShape(std::initializer_list<int64_t> d) : dims(d) {}
  explicit TensorShape(std::vector<int64_t> d) : dims(std::move(d)) {}

  int64_t rank() const { return static_cast<int64_t>(dims.size()); }
  int64_t channels() const { return rank() >= 2 ? dims[1] : 0; }
  bool has_symbolic_batch() const { return !dims.empty() && dims[0] == 0; }

  /// Element count excluding the batch axis.
  int64_t elements_per_sample() const {
    int64_t n = 1;
    for (size_t i = 1; i < dims.size(); ++i) n *= dims[i];
    return n;
  }

  /// Same shape with the batch axis replaced by a concrete value.
  TensorShape with_batch(int64_t batch) const {
    TensorShape s = *this;
    if (!s.dims.empty()) s.dims[0] = batch;
    return s;
  }

  bool operator==(const TensorShape& other) const = default;

  std::string to_string() const {
    std::string s = "[";
    for (size_t i = 0; i < dims.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims[i]);
    }
    return s + "]";
  }
};

/// Returns true when the two shapes agree up to batch substitution (a
/// symbolic batch on either side matches anything on the other).
inline bool shapes_compatible(const TensorShape& a, const TensorShape& b) {
  if (a.dims.size() != b.dims.size()) return false;
  for (size_t i = 0; i < a.dims.size(); ++i) {
    if (i == 0 && (a.dims[0] == 0 || b.dims[0] == 0)) continue;
    if (a.dims[i] != b.dims[i]) return false;
  }
  return true;
}

/// Concrete tensor: shape plus row-major 64-bit data. All arithmetic in the
/// library runs on doubles so folding error stays far below verification
/// tolerances.
struct TensorValue {
  TensorShape shape;
  std::vector<double> data;

  TensorValue() = default;
  TensorValue(TensorShape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

  static TensorValue zeros(const TensorShape& s) {
    int64_t n = 1;
    for (int64_t d : s.dims) n *= d;
    return TensorValue(s, std::vector<double>(static_cast<size_t>(n), 0.0));
  }

  int64_t batch() const { return shape.dims.empty() ? 0 : shape.dims[0]; }

  bool operator==(const TensorValue& other) const = default;
};

}  // namespace bnfold
