#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace bnfold {

/// Fully-connected layer y = Wx + b. Weight is row-major [out][in].
struct DenseOp {
  int64_t out_channels = 0;
  int64_t in_channels = 0;
  std::vector<double> weight;  // out_channels * in_channels
  std::vector<double> bias;    // out_channels

  bool operator==(const DenseOp&) const = default;
};

/// 2-d convolution, stride 1, valid padding. Kernel is row-major
/// [out][in][kh][kw].
struct Conv2DOp {
  int64_t out_channels = 0;
  int64_t in_channels = 0;
  int64_t kh = 0;
  int64_t kw = 0;
  std::vector<double> kernel;  // out * in * kh * kw
  std::vector<double> bias;    // out_channels

  bool operator==(const Conv2DOp&) const = default;
};

/// Inference-mode batch normalization
///   y_c = gamma_c * (x_c - mu_c) / (sigma_c + epsilon) + beta_c
/// with the denominator taken literally as sigma + epsilon.
struct BatchNormOp {
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> mu;
  std::vector<double> sigma;
  double epsilon = 1e-3;

  int64_t channels() const { return static_cast<int64_t>(gamma.size()); }

  bool operator==(const BatchNormOp&) const = default;
};

/// Operators that violate f(ax+b) = a~ f(x) + b~.
struct NonAffineOp {
  enum class Kind { ReLU, Sigmoid, Tanh, MaxPool2D };
  Kind kind = Kind::ReLU;
  int64_t kh = 0;  // pooling window, MaxPool2D only
  int64_t kw = 0;

  bool operator==(const NonAffineOp&) const = default;
};

/// Parameterless affine operators: per-channel affine transforms can be
/// pushed through them but they cannot absorb one.
struct OtherAffineOp {
  enum class Kind { Add, Concat, AvgPool2D, Flatten, Identity };
  Kind kind = Kind::Identity;
  int64_t kh = 0;  // pooling window, AvgPool2D only
  int64_t kw = 0;

  bool operator==(const OtherAffineOp&) const = default;
};

using NodeKind = std::variant<DenseOp, Conv2DOp, BatchNormOp, NonAffineOp, OtherAffineOp>;

/// The four-way taxonomy every pass dispatches on.
enum class LayerClass { Expressive, BatchNorm, OtherAffine, NonAffine };

inline LayerClass classify_kind(const NodeKind& kind) {
  switch (kind.index()) {
    case 0:
    case 1: return LayerClass::Expressive;
    case 2: return LayerClass::BatchNorm;
    case 3: return LayerClass::NonAffine;
    default: return LayerClass::OtherAffine;
  }
}

inline bool is_affine_class(LayerClass c) { return c != LayerClass::NonAffine; }

/// Canonical operator name, also used by the JSON format.
std::string op_name(const NodeKind& kind);

/// Expected input arity for the operator; Add and Concat take at least two
/// inputs (returned as -2 meaning ">= 2"), everything else exactly one.
int op_arity(const NodeKind& kind);

/// Parameter count contributed by one node: Dense out*in+out, Conv2D
/// out*in*kh*kw+out, BatchNorm 4*channels, others 0.
int64_t op_param_count(const NodeKind& kind);

}  // namespace bnfold
