#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kgst/common.hpp"

namespace kgst {

struct Entity {
  int id = 0;
  std::string label;
};

struct Relation {
  int id = 0;
  std::string name;
};

// Directed fact head --relation--> tail. Undirected edges are stored as one
// triple with a fixed orientation; adjacency queries ignore direction while
// property checks respect it.
struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;

  friend bool operator==(const Triple&, const Triple&) = default;
};

struct KnowledgeGraph {
  std::string graph_id;
  std::vector<Entity> entities;
  std::vector<Relation> relations;
  std::vector<Triple> triples;

  int node_count() const { return static_cast<int>(entities.size()); }
  const std::string& label_of(int entity_id) const;
  const std::string& relation_name(int relation_id) const;
  bool has_triple(int head, int relation, int tail) const;
};

// Throws ValidationError naming the graph_id and the violated rule. Rules:
// entity/relation ids contiguous from 0, non-empty names, no self-loops, no
// duplicate triples, ids resolve, and every entity touches a triple unless
// the graph has exactly one entity.
void validate_graph(const KnowledgeGraph& graph);

// Undirected adjacency; sorted, duplicate-free. Throws LookupError for an
// unknown node id.
std::vector<int> neighbors(const KnowledgeGraph& graph, int node);

// Distinct labels / relation names present in the graph, sorted.
std::vector<std::string> label_vocabulary(const KnowledgeGraph& graph);
std::vector<std::string> relation_vocabulary(const KnowledgeGraph& graph);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  bool in_train(const std::string& graph_id) const;
  bool in_validation(const std::string& graph_id) const;
  bool in_test(const std::string& graph_id) const;
};

// Deterministic shuffle by seed, then an 80/10/10 partition (validation and
// test sizes rounded to the nearest graph). Requires at least 10 graphs.
DatasetSplit split_dataset(std::span<const KnowledgeGraph> graphs,
                           std::uint64_t seed);

}  // namespace kgst
