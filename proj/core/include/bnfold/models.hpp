#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "bnfold/graph.hpp"

namespace bnfold {

/// Figure-derived and synthetic model families used by the corpus, the
/// fuzz suite and the CLI `generate` subcommand.
enum class Archetype {
  Fig2a,      // sequential Dense->BN->ReLU blocks, every BN foldable by both passes
  Fig2b,      // general sequential model with other-affine interiors and a trapped BN
  Fig2c,      // skip-connection graph whose junction BN only the optimal pass folds
  Fig4,       // two paths sharing an ancestor, one ending in an activation: unfoldable
  Fig5a,      // junction with I = two expressive leaves, O = one: foldable
  Fig5b,      // variant of Fig5a with a blocked leaf: unfoldable
  ResNetToy,  // pre-activation residual blocks with BN-after-junction pattern
  RandomDag,  // grammar-generated random valid graph with at least one BN
};

struct ArchetypeDims {
  int64_t channels = 16;
  int64_t height = 8;
  int64_t width = 8;
  int64_t blocks = 3;    // Fig2a / ResNetToy
  int64_t nodes = 12;    // RandomDag size budget
  int64_t head_units = 10;
};

/// Per-BN expected foldability, by algorithm.
struct BnLabel {
  bool naive = false;
  bool banoff = false;
};

struct GeneratedModel {
  Graph graph;
  std::map<std::string, BnLabel> labels;
};

/// Deterministic model for (archetype, dims, seed); weights drawn from a
/// seeded normal, batch-norm sigma strictly positive, gamma bounded away
/// from zero. Throws InvalidDims.
GeneratedModel generate(Archetype archetype, const ArchetypeDims& dims, uint64_t weight_seed);

std::string to_string(Archetype a);
/// Parses names like "fig2a", "resnet", "randomdag". Returns false on
/// unknown names.
bool archetype_from_string(const std::string& name, Archetype& out);

}  // namespace bnfold
