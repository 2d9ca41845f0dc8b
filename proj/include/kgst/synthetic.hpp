#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kgst/graph.hpp"

namespace kgst {

std::vector<std::string> default_label_vocabulary();
std::vector<std::string> default_relation_vocabulary();

struct SyntheticConfig {
  int count = 600;
  int min_nodes = 8;
  int max_nodes = 16;
  std::vector<std::string> labels = default_label_vocabulary();
  std::vector<std::string> relations = default_relation_vocabulary();
};

// Complete graphs with uniformly sampled node labels and edge relations. Each
// unordered node pair is stored as one directed triple with a uniformly
// random orientation, so a graph on n nodes has exactly n(n-1)/2 triples.
// Output is deterministic in (config, seed).
std::vector<KnowledgeGraph> generate_synthetic(const SyntheticConfig& config,
                                               std::uint64_t seed);

}  // namespace kgst
