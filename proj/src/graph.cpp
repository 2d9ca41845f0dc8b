#include "kgst/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

namespace kgst {

const std::string& KnowledgeGraph::label_of(int entity_id) const {
  if (entity_id < 0 || entity_id >= node_count()) {
    throw LookupError("graph " + graph_id + ": unknown entity id " +
                      std::to_string(entity_id));
  }
  return entities[static_cast<size_t>(entity_id)].label;
}

const std::string& KnowledgeGraph::relation_name(int relation_id) const {
  if (relation_id < 0 || relation_id >= static_cast<int>(relations.size())) {
    throw LookupError("graph " + graph_id + ": unknown relation id " +
                      std::to_string(relation_id));
  }
  return relations[static_cast<size_t>(relation_id)].name;
}

bool KnowledgeGraph::has_triple(int head, int relation, int tail) const {
  return std::any_of(triples.begin(), triples.end(), [&](const Triple& t) {
    return t.head == head && t.relation == relation && t.tail == tail;
  });
}

namespace {

[[noreturn]] void fail(const KnowledgeGraph& g, const std::string& rule) {
  throw ValidationError("graph " + g.graph_id + ": " + rule);
}

}  // namespace

void validate_graph(const KnowledgeGraph& graph) {
  if (graph.graph_id.empty()) fail(graph, "graph_id must be non-empty");
  if (graph.entities.empty()) fail(graph, "graph must have at least one entity");
  for (size_t i = 0; i < graph.entities.size(); ++i) {
    const Entity& e = graph.entities[i];
    if (e.id != static_cast<int>(i)) {
      fail(graph, "entity ids must be contiguous from 0");
    }
    if (e.label.empty()) fail(graph, "entity labels must be non-empty");
  }
  for (size_t i = 0; i < graph.relations.size(); ++i) {
    const Relation& r = graph.relations[i];
    if (r.id != static_cast<int>(i)) {
      fail(graph, "relation ids must be contiguous from 0");
    }
    if (r.name.empty()) fail(graph, "relation names must be non-empty");
  }
  std::set<std::tuple<int, int, int>> seen;
  std::vector<bool> touched(graph.entities.size(), false);
  for (const Triple& t : graph.triples) {
    if (t.head == t.tail) fail(graph, "self-loop triple (head == tail)");
    if (t.head < 0 || t.head >= graph.node_count() || t.tail < 0 ||
        t.tail >= graph.node_count()) {
      fail(graph, "triple references unknown entity id");
    }
    if (t.relation < 0 ||
        t.relation >= static_cast<int>(graph.relations.size())) {
      fail(graph, "triple references unknown relation id");
    }
    if (!seen.insert({t.head, t.relation, t.tail}).second) {
      fail(graph, "duplicate (head, relation, tail) triple");
    }
    touched[static_cast<size_t>(t.head)] = true;
    touched[static_cast<size_t>(t.tail)] = true;
  }
  if (graph.entities.size() > 1) {
    for (size_t i = 0; i < touched.size(); ++i) {
      if (!touched[i]) {
        fail(graph, "entity " + std::to_string(i) + " appears in no triple");
      }
    }
  }
}

std::vector<int> neighbors(const KnowledgeGraph& graph, int node) {
  if (node < 0 || node >= graph.node_count()) {
    throw LookupError("graph " + graph.graph_id + ": unknown node id " +
                      std::to_string(node));
  }
  std::set<int> out;
  for (const Triple& t : graph.triples) {
    if (t.head == node) out.insert(t.tail);
    if (t.tail == node) out.insert(t.head);
  }
  return {out.begin(), out.end()};
}

std::vector<std::string> label_vocabulary(const KnowledgeGraph& graph) {
  std::set<std::string> vocab;
  for (const Entity& e : graph.entities) vocab.insert(e.label);
  return {vocab.begin(), vocab.end()};
}

std::vector<std::string> relation_vocabulary(const KnowledgeGraph& graph) {
  std::set<std::string> vocab;
  for (const Relation& r : graph.relations) vocab.insert(r.name);
  return {vocab.begin(), vocab.end()};
}

bool DatasetSplit::in_train(const std::string& graph_id) const {
  return std::find(train.begin(), train.end(), graph_id) != train.end();
}
bool DatasetSplit::in_validation(const std::string& graph_id) const {
  return std::find(validation.begin(), validation.end(), graph_id) !=
         validation.end();
}
bool DatasetSplit::in_test(const std::string& graph_id) const {
  return std::find(test.begin(), test.end(), graph_id) != test.end();
}

DatasetSplit split_dataset(std::span<const KnowledgeGraph> graphs,
                           std::uint64_t seed) {
  const size_t n = graphs.size();
  if (n < 10) {
    throw ConfigError("split_dataset needs at least 10 graphs, got " +
                      std::to_string(n));
  }
  Rng rng(seed);
  std::vector<size_t> order = shuffled_indices(n, rng);
  const size_t n_val = static_cast<size_t>(
      std::llround(static_cast<double>(n) * 0.1));
  const size_t n_test = n_val;
  const size_t n_train = n - n_val - n_test;

  DatasetSplit split;
  split.seed = seed;
  for (size_t i = 0; i < n; ++i) {
    const std::string& id = graphs[order[i]].graph_id;
    if (i < n_train) {
      split.train.push_back(id);
    } else if (i < n_train + n_val) {
      split.validation.push_back(id);
    } else {
      split.test.push_back(id);
    }
  }
  return split;
}

}  // namespace kgst
