#pragma once

#include <cstdint>
#include <vector>

#include "bnfold/errors.hpp"
#include "bnfold/ops.hpp"

namespace bnfold {

/// Per-channel affine map x -> scale * x + shift; the algebraic currency
/// pushed through the graph while folding. A batch-norm layer is exactly
/// one of these: scale = gamma/(sigma+eps), shift = beta - gamma*mu/(sigma+eps).
struct ChannelAffine {
  std::vector<double> scale;
  std::vector<double> shift;

  ChannelAffine() = default;
  ChannelAffine(std::vector<double> s, std::vector<double> t)
      : scale(std::move(s)), shift(std::move(t)) {}

  static ChannelAffine identity(int64_t channels) {
    return ChannelAffine(std::vector<double>(channels, 1.0), std::vector<double>(channels, 0.0));
  }

  static ChannelAffine from_batch_norm(const BatchNormOp& bn) {
    ChannelAffine a;
    a.scale.resize(bn.gamma.size());
    a.shift.resize(bn.gamma.size());
    for (size_t c = 0; c < bn.gamma.size(); ++c) {
      double denom = bn.sigma[c] + bn.epsilon;
      a.scale[c] = bn.gamma[c] / denom;
      a.shift[c] = bn.beta[c] - bn.gamma[c] * bn.mu[c] / denom;
    }
    return a;
  }

  int64_t channels() const { return static_cast<int64_t>(scale.size()); }

  bool is_identity() const {
    for (double s : scale)
      if (s != 1.0) return false;
    for (double t : shift)
      if (t != 0.0) return false;
    return true;
  }

  bool invertible() const {
    for (double s : scale)
      if (s == 0.0) return false;
    return true;
  }

  double apply(int64_t channel, double x) const { return scale[channel] * x + shift[channel]; }

  /// Composition (this after other): x -> this(other(x)).
  ChannelAffine after(const ChannelAffine& other) const {
    ChannelAffine r;
    r.scale.resize(scale.size());
    r.shift.resize(scale.size());
    for (size_t c = 0; c < scale.size(); ++c) {
      r.scale[c] = scale[c] * other.scale[c];
      r.shift[c] = scale[c] * other.shift[c] + shift[c];
    }
    return r;
  }

  /// Inverse map; throws NonInvertibleAffine on any zero scale entry.
  ChannelAffine inverse() const {
    if (!invertible()) throw NonInvertibleAffine("zero scale entry");
    ChannelAffine r;
    r.scale.resize(scale.size());
    r.shift.resize(scale.size());
    for (size_t c = 0; c < scale.size(); ++c) {
      r.scale[c] = 1.0 / scale[c];
      r.shift[c] = -shift[c] / scale[c];
    }
    return r;
  }

  /// Channel range [begin, end) as its own affine.
  ChannelAffine slice(int64_t begin, int64_t end) const {
    return ChannelAffine(
        std::vector<double>(scale.begin() + begin, scale.begin() + end),
        std::vector<double>(shift.begin() + begin, shift.begin() + end));
  }

  /// Repeats each channel entry `block` times (pushing through Flatten).
  ChannelAffine broadcast(int64_t block) const {
    ChannelAffine r;
    r.scale.reserve(scale.size() * block);
    r.shift.reserve(shift.size() * block);
    for (size_t c = 0; c < scale.size(); ++c)
      for (int64_t k = 0; k < block; ++k) {
        r.scale.push_back(scale[c]);
        r.shift.push_back(shift[c]);
      }
    return r;
  }

  /// Inverse of broadcast: requires entries constant within each block.
  /// Returns false when they are not.
  bool unbroadcast(int64_t block, ChannelAffine& out) const {
    if (block <= 0 || channels() % block != 0) return false;
    int64_t c_out = channels() / block;
    out.scale.assign(c_out, 0.0);
    out.shift.assign(c_out, 0.0);
    for (int64_t c = 0; c < c_out; ++c) {
      out.scale[c] = scale[c * block];
      out.shift[c] = shift[c * block];
      for (int64_t k = 1; k < block; ++k) {
        if (scale[c * block + k] != out.scale[c] || shift[c * block + k] != out.shift[c])
          return false;
      }
    }
    return true;
  }

  bool operator==(const ChannelAffine&) const = default;
};

}  // namespace bnfold
