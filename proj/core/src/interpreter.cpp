#include "bnfold/interpreter.hpp"

#include <cmath>

#include "bnfold/errors.hpp"
#include "bnfold/rng.hpp"

namespace bnfold {

namespace {

TensorValue eval_dense(const DenseOp& op, const TensorValue& x) {
  int64_t batch = x.shape.dims[0];
  TensorValue y = TensorValue::zeros(TensorShape{batch, op.out_channels});
  for (int64_t b = 0; b < batch; ++b) {
    const double* row = x.data.data() + b * op.in_channels;
    double* out = y.data.data() + b * op.out_channels;
    for (int64_t o = 0; o < op.out_channels; ++o) {
      double acc = op.bias[o];
      const double* w = op.weight.data() + o * op.in_channels;
      for (int64_t i = 0; i < op.in_channels; ++i) acc += w[i] * row[i];
      out[o] = acc;
    }
  }
  return y;
}

TensorValue eval_conv2d(const Conv2DOp& op, const TensorValue& x) {
  int64_t batch = x.shape.dims[0];
  int64_t in_c = x.shape.dims[1], h = x.shape.dims[2], w = x.shape.dims[3];
  int64_t oh = h - op.kh + 1, ow = w - op.kw + 1;
  TensorValue y = TensorValue::zeros(TensorShape{batch, op.out_channels, oh, ow});
  auto at_in = [&](int64_t b, int64_t c, int64_t i, int64_t j) {
    return x.data[((b * in_c + c) * h + i) * w + j];
  };
  auto k_at = [&](int64_t o, int64_t c, int64_t i, int64_t j) {
    return op.kernel[((o * op.in_channels + c) * op.kh + i) * op.kw + j];
  };
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t o = 0; o < op.out_channels; ++o)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          double acc = op.bias[o];
          for (int64_t c = 0; c < in_c; ++c)
            for (int64_t ki = 0; ki < op.kh; ++ki)
              for (int64_t kj = 0; kj < op.kw; ++kj)
                acc += k_at(o, c, ki, kj) * at_in(b, c, i + ki, j + kj);
          y.data[((b * op.out_channels + o) * oh + i) * ow + j] = acc;
        }
  return y;
}

TensorValue eval_batch_norm(const BatchNormOp& op, const TensorValue& x) {
  TensorValue y = x;
  int64_t channels = x.shape.dims[1];
  int64_t spatial = 1;
  for (size_t d = 2; d < x.shape.dims.size(); ++d) spatial *= x.shape.dims[d];
  int64_t batch = x.shape.dims[0];
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < channels; ++c) {
      double denom = op.sigma[c] + op.epsilon;
      double* p = y.data.data() + (b * channels + c) * spatial;
      for (int64_t s = 0; s < spatial; ++s)
        p[s] = op.gamma[c] * (p[s] - op.mu[c]) / denom + op.beta[c];
    }
  return y;
}

template <typename WindowFn>
TensorValue eval_pool(const TensorValue& x, int64_t kh, int64_t kw, WindowFn fn) {
  int64_t batch = x.shape.dims[0], c = x.shape.dims[1], h = x.shape.dims[2], w = x.shape.dims[3];
  int64_t oh = (h - kh) / kh + 1, ow = (w - kw) / kw + 1;
  TensorValue y = TensorValue::zeros(TensorShape{batch, c, oh, ow});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t i = 0; i < oh; ++i)
        for (int64_t j = 0; j < ow; ++j) {
          const double* base = x.data.data() + ((b * c + ch) * h + i * kh) * w + j * kw;
          y.data[((b * c + ch) * oh + i) * ow + j] = fn(base, kh, kw, w);
        }
  return y;
}

TensorValue eval_non_affine(const NonAffineOp& op, const TensorValue& x) {
  switch (op.kind) {
    case NonAffineOp::Kind::ReLU: {
      TensorValue y = x;
      for (double& v : y.data) v = v > 0.0 ? v : 0.0;
      return y;
    }
    case NonAffineOp::Kind::Sigmoid: {
      TensorValue y = x;
      for (double& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
      return y;
    }
    case NonAffineOp::Kind::Tanh: {
      TensorValue y = x;
      for (double& v : y.data) v = std::tanh(v);
      return y;
    }
    case NonAffineOp::Kind::MaxPool2D:
      return eval_pool(x, op.kh, op.kw, [](const double* base, int64_t kh, int64_t kw, int64_t stride) {
        double m = base[0];
        for (int64_t i = 0; i < kh; ++i)
          for (int64_t j = 0; j < kw; ++j) m = std::max(m, base[i * stride + j]);
        return m;
      });
  }
  throw Error("unhandled non-affine kind");
}

TensorValue eval_other_affine(const OtherAffineOp& op, const std::vector<TensorValue>& in) {
  switch (op.kind) {
    case OtherAffineOp::Kind::Add: {
      TensorValue y = in[0];
      for (size_t k = 1; k < in.size(); ++k)
        for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += in[k].data[i];
      return y;
    }
    case OtherAffineOp::Kind::Concat: {
      TensorShape out = in[0].shape;
      int64_t spatial = 1;
      for (size_t d = 2; d < out.dims.size(); ++d) spatial *= out.dims[d];
      int64_t channels = 0;
      for (const auto& t : in) channels += t.shape.dims[1];
      out.dims[1] = channels;
      TensorValue y = TensorValue::zeros(out);
      int64_t batch = out.dims[0];
      for (int64_t b = 0; b < batch; ++b) {
        int64_t c_off = 0;
        for (const auto& t : in) {
          int64_t c_in = t.shape.dims[1];
          const double* src = t.data.data() + b * c_in * spatial;
          double* dst = y.data.data() + (b * channels + c_off) * spatial;
          std::copy(src, src + c_in * spatial, dst);
          c_off += c_in;
        }
      }
      return y;
    }
    case OtherAffineOp::Kind::AvgPool2D:
      return eval_pool(in[0], op.kh, op.kw, [](const double* base, int64_t kh, int64_t kw, int64_t stride) {
        double acc = 0.0;
        for (int64_t i = 0; i < kh; ++i)
          for (int64_t j = 0; j < kw; ++j) acc += base[i * stride + j];
        return acc / static_cast<double>(kh * kw);
      });
    case OtherAffineOp::Kind::Flatten: {
      TensorValue y = in[0];
      y.shape = TensorShape{in[0].shape.dims[0], in[0].shape.elements_per_sample()};
      return y;
    }
    case OtherAffineOp::Kind::Identity: return in[0];
  }
  throw Error("unhandled other-affine kind");
}

}  // namespace

TensorValue eval_node(const NodeKind& kind, const std::vector<TensorValue>& inputs) {
  switch (kind.index()) {
    case 0: return eval_dense(std::get<DenseOp>(kind), inputs[0]);
    case 1: return eval_conv2d(std::get<Conv2DOp>(kind), inputs[0]);
    case 2: return eval_batch_norm(std::get<BatchNormOp>(kind), inputs[0]);
    case 3: return eval_non_affine(std::get<NonAffineOp>(kind), inputs[0]);
    default: return eval_other_affine(std::get<OtherAffineOp>(kind), inputs);
  }
}

std::map<std::string, TensorValue> eval_graph(const Graph& graph, const InputBinding& bindings) {
  int64_t batch = -1;
  for (const auto& [id, shape] : graph.inputs) {
    auto it = bindings.find(id);
    if (it == bindings.end()) throw ShapeMismatch(id, "graph input not bound");
    if (!shapes_compatible(shape, it->second.shape))
      throw ShapeMismatch(id, "binding shape " + it->second.shape.to_string() +
                                  " incompatible with " + shape.to_string());
    if (batch == -1) batch = it->second.batch();
    else if (batch != it->second.batch())
      throw ShapeMismatch(id, "bindings disagree on batch size");
  }

  std::map<std::string, TensorValue> values;
  for (const auto& [id, _] : graph.inputs) values[id] = bindings.at(id);
  for (const auto& node : graph.nodes) {
    std::vector<TensorValue> in;
    in.reserve(node.inputs.size());
    for (const auto& ref : node.inputs) in.push_back(values.at(ref));
    values[node.id] = eval_node(node.kind, in);
  }

  std::map<std::string, TensorValue> out;
  for (const auto& id : graph.outputs) out[id] = values.at(id);
  return out;
}

InputBinding random_binding(const Graph& graph, int64_t batch, uint64_t seed) {
  Rng rng(seed);
  InputBinding bindings;
  for (const auto& [id, shape] : graph.inputs) {
    TensorValue t = TensorValue::zeros(shape.with_batch(batch));
    for (double& v : t.data) v = rng.next_normal();
    bindings[id] = std::move(t);
  }
  return bindings;
}

}  // namespace bnfold
