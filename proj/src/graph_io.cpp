#include "kgst/graph_io.hpp"

#include <json.hpp>

#include <fstream>

namespace kgst {

using nlohmann::ordered_json;

std::string graph_to_jsonl_line(const KnowledgeGraph& graph) {
  ordered_json j;
  j["graph_id"] = graph.graph_id;
  auto labels = ordered_json::array();
  for (const Entity& e : graph.entities) labels.push_back(e.label);
  j["labels"] = std::move(labels);
  auto relations = ordered_json::array();
  for (const Relation& r : graph.relations) relations.push_back(r.name);
  j["relations"] = std::move(relations);
  auto triples = ordered_json::array();
  for (const Triple& t : graph.triples) {
    triples.push_back({t.head, t.relation, t.tail});
  }
  j["triples"] = std::move(triples);
  return j.dump();
}

KnowledgeGraph graph_from_jsonl_line(const std::string& line) {
  const auto j = ordered_json::parse(line);
  KnowledgeGraph graph;
  graph.graph_id = j.at("graph_id").get<std::string>();
  int id = 0;
  for (const auto& label : j.at("labels")) {
    graph.entities.push_back({id++, label.get<std::string>()});
  }
  id = 0;
  for (const auto& name : j.at("relations")) {
    graph.relations.push_back({id++, name.get<std::string>()});
  }
  for (const auto& t : j.at("triples")) {
    if (!t.is_array() || t.size() != 3) {
      throw ParseError("triple is not a [head, relation, tail] array");
    }
    graph.triples.push_back(
        {t[0].get<int>(), t[1].get<int>(), t[2].get<int>()});
  }
  validate_graph(graph);
  return graph;
}

std::vector<KnowledgeGraph> load_graphs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open graph file: " + path);
  std::vector<KnowledgeGraph> graphs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      graphs.push_back(graph_from_jsonl_line(line));
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return graphs;
}

void save_graphs(const std::string& path,
                 std::span<const KnowledgeGraph> graphs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open graph file for writing: " + path);
  for (const KnowledgeGraph& g : graphs) {
    out << graph_to_jsonl_line(g) << '\n';
  }
  if (!out) throw IoError("graph file write failed: " + path);
}

}  // namespace kgst
