#pragma once

#include <string>

#include "bnfold/equivalence.hpp"
#include "bnfold/fold_transform.hpp"
#include "bnfold/graph.hpp"

namespace bnfold {

/// On-disk interchange format: a single JSON document
///   {"format_version":1, "name":..., "inputs":[{"id","shape"}],
///    "nodes":[{"id","op","inputs",["attrs"],["weights"]}], "outputs":[ids]}
/// Nodes are written in canonical topological order, numbers with full
/// round-trip precision, the batch dim as 0. load(save(g)) == g including
/// weight bits.
std::string graph_to_json(const Graph& graph);
Graph graph_from_json(const std::string& text);

/// Throws IoError on filesystem failures, ParseError{line, reason} on
/// malformed documents, VersionMismatch on unknown format versions.
void save_graph(const Graph& graph, const std::string& path);
Graph load_graph(const std::string& path);

/// JSON renderings of the CLI-facing reports.
std::string fold_report_to_json(const FoldReport& report, const EquivalenceReport& equivalence);
std::string equivalence_report_to_json(const EquivalenceReport& report);

}  // namespace bnfold
