#include "kgst/synthetic.hpp"

#include <iomanip>
#include <sstream>

namespace kgst {

std::vector<std::string> default_label_vocabulary() {
  return {"Doctor", "Teacher", "Engineer", "Artist", "Nurse", "Lawyer"};
}

std::vector<std::string> default_relation_vocabulary() {
  return {"knows", "supervises", "mentors", "hires"};
}

std::vector<KnowledgeGraph> generate_synthetic(const SyntheticConfig& config,
                                               std::uint64_t seed) {
  if (config.count < 1) {
    throw ConfigError("generate_synthetic: count must be >= 1");
  }
  if (config.min_nodes < 2) {
    throw ConfigError("generate_synthetic: min_nodes must be >= 2");
  }
  if (config.max_nodes < config.min_nodes) {
    throw ConfigError("generate_synthetic: max_nodes < min_nodes");
  }
  if (config.labels.empty() || config.relations.empty()) {
    throw ConfigError("generate_synthetic: label/relation vocabulary is empty");
  }

  Rng rng(seed);
  std::uniform_int_distribution<int> node_dist(config.min_nodes,
                                               config.max_nodes);
  std::uniform_int_distribution<size_t> label_dist(0, config.labels.size() - 1);
  std::uniform_int_distribution<size_t> rel_dist(0, config.relations.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);

  std::vector<KnowledgeGraph> graphs;
  graphs.reserve(static_cast<size_t>(config.count));
  for (int g = 0; g < config.count; ++g) {
    KnowledgeGraph graph;
    std::ostringstream id;
    id << "synth-" << std::setw(4) << std::setfill('0') << g;
    graph.graph_id = id.str();

    for (size_t r = 0; r < config.relations.size(); ++r) {
      graph.relations.push_back({static_cast<int>(r), config.relations[r]});
    }

    const int n = node_dist(rng);
    for (int i = 0; i < n; ++i) {
      graph.entities.push_back({i, config.labels[label_dist(rng)]});
    }
    for (int u = 0; u < n; ++u) {
      for (int v = u + 1; v < n; ++v) {
        const int rel = static_cast<int>(rel_dist(rng));
        if (coin(rng) == 0) {
          graph.triples.push_back({u, rel, v});
        } else {
          graph.triples.push_back({v, rel, u});
        }
      }
    }
    validate_graph(graph);
    graphs.push_back(std::move(graph));
  }
  return graphs;
}

}  // namespace kgst
