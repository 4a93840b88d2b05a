#pragma once

#include <map>
#include <string>

#include "bnfold/graph.hpp"
#include "bnfold/tensor.hpp"

namespace bnfold {

/// Binding of every graph input to a concrete tensor. Shapes must match the
/// declared input shapes up to batch substitution, all with the same batch.
using InputBinding = std::map<std::string, TensorValue>;

/// Ground-truth forward evaluation: each node evaluated once in canonical
/// topological order, no fusion, no fast paths. Deterministic: identical
/// bindings give bitwise-identical outputs.
std::map<std::string, TensorValue> eval_graph(const Graph& graph, const InputBinding& bindings);

/// Evaluates a single operator on concrete inputs.
TensorValue eval_node(const NodeKind& kind, const std::vector<TensorValue>& inputs);

/// Standard-normal binding for every graph input, drawn from `seed`.
/// Inputs are filled in declaration order.
InputBinding random_binding(const Graph& graph, int64_t batch, uint64_t seed);

}  // namespace bnfold
