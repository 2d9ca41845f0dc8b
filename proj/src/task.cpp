#include "kgst/task.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace kgst {

using nlohmann::ordered_json;

std::string task_kind_code(TaskKind kind) {
  switch (kind) {
    case TaskKind::Existence: return "E";
    case TaskKind::Counting: return "C";
    case TaskKind::Identification: return "I";
  }
  throw ContractError("unreachable task kind");
}

std::string label_arity_code(LabelArity arity) {
  switch (arity) {
    case LabelArity::SL: return "SL";
    case LabelArity::DL: return "DL";
    case LabelArity::TL: return "TL";
  }
  throw ContractError("unreachable label arity");
}

TaskKind parse_task_kind(const std::string& code) {
  if (code == "E") return TaskKind::Existence;
  if (code == "C") return TaskKind::Counting;
  if (code == "I") return TaskKind::Identification;
  throw ConfigError("unknown task kind: " + code);
}

LabelArity parse_label_arity(const std::string& code) {
  if (code == "SL") return LabelArity::SL;
  if (code == "DL") return LabelArity::DL;
  if (code == "TL") return LabelArity::TL;
  throw ConfigError("unknown label arity: " + code);
}

bool cell_structure_valid(int hops, LabelArity arity) {
  switch (hops) {
    case 0: return arity == LabelArity::SL;
    case 1: return arity == LabelArity::SL || arity == LabelArity::DL;
    case 2: return true;
    default: return false;
  }
}

std::vector<TaskCell> all_task_cells() {
  std::vector<TaskCell> cells;
  for (TaskKind kind : {TaskKind::Existence, TaskKind::Counting,
                        TaskKind::Identification}) {
    for (const auto& [hops, arity] :
         std::vector<std::pair<int, LabelArity>>{{0, LabelArity::SL},
                                                 {1, LabelArity::SL},
                                                 {1, LabelArity::DL},
                                                 {2, LabelArity::SL},
                                                 {2, LabelArity::DL},
                                                 {2, LabelArity::TL}}) {
      cells.push_back({kind, hops, arity});
    }
  }
  return cells;
}

std::string cell_id(const TaskCell& cell) {
  return task_kind_code(cell.kind) + "-" + label_arity_code(cell.arity) + "-" +
         std::to_string(cell.hops);
}

TaskCell parse_cell_id(const std::string& id) {
  const auto first = id.find('-');
  const auto second = id.find('-', first + 1);
  if (first == std::string::npos || second == std::string::npos) {
    throw ConfigError("malformed task cell id: " + id);
  }
  TaskCell cell;
  cell.kind = parse_task_kind(id.substr(0, first));
  cell.arity = parse_label_arity(id.substr(first + 1, second - first - 1));
  try {
    cell.hops = std::stoi(id.substr(second + 1));
  } catch (const std::exception&) {
    throw ConfigError("malformed task cell id: " + id);
  }
  if (!cell_structure_valid(cell.hops, cell.arity)) {
    throw ConfigError("invalid task cell structure: " + id);
  }
  return cell;
}

namespace {

int label_slot_count(const TaskCell& cell) {
  switch (cell.arity) {
    case LabelArity::SL: return 1;
    case LabelArity::DL: return 2;
    case LabelArity::TL: return 3;
  }
  throw ContractError("unreachable label arity");
}

}  // namespace

void validate_descriptor(const TaskDescriptor& d) {
  if (!cell_structure_valid(d.cell.hops, d.cell.arity)) {
    throw ConfigError("invalid task cell structure: " + cell_id(d.cell));
  }
  const int labels_needed = label_slot_count(d.cell);
  const bool property_needed = d.cell.hops == 2;
  if (!d.label1 || (labels_needed >= 2) != d.label2.has_value() ||
      (labels_needed >= 3) != d.label3.has_value()) {
    throw ConfigError("descriptor label slots do not match arity for " +
                      cell_id(d.cell));
  }
  if (property_needed != d.property.has_value()) {
    throw ConfigError("descriptor property slot does not match hops for " +
                      cell_id(d.cell));
  }
}

void validate_descriptor(const TaskDescriptor& d,
                         std::span<const std::string> label_vocab,
                         std::span<const std::string> relation_vocab) {
  validate_descriptor(d);
  auto in = [](std::span<const std::string> vocab, const std::string& s) {
    return std::find(vocab.begin(), vocab.end(), s) != vocab.end();
  };
  for (const auto& slot : {d.label1, d.label2, d.label3}) {
    if (slot && !in(label_vocab, *slot)) {
      throw ConfigError("descriptor label not in vocabulary: " + *slot);
    }
  }
  if (d.property && !in(relation_vocab, *d.property)) {
    throw ConfigError("descriptor property not in vocabulary: " + *d.property);
  }
}

std::vector<int> answer_node_set(const KnowledgeGraph& graph,
                                 const TaskDescriptor& d) {
  validate_descriptor(d);
  const int n = graph.node_count();

  std::vector<std::vector<int>> adjacency(static_cast<size_t>(n));
  for (int u = 0; u < n; ++u) adjacency[static_cast<size_t>(u)] = neighbors(graph, u);

  // property_hits[v]: exists w with (v, P, w) in T (directed) and
  // label(w) == target label.
  std::vector<char> property_hits;
  if (d.cell.hops == 2) {
    const std::string& target = d.cell.arity == LabelArity::SL ? *d.label1
                                : d.cell.arity == LabelArity::DL ? *d.label2
                                                                 : *d.label3;
    property_hits.assign(static_cast<size_t>(n), 0);
    for (const Triple& t : graph.triples) {
      if (graph.relation_name(t.relation) == *d.property &&
          graph.label_of(t.tail) == target) {
        property_hits[static_cast<size_t>(t.head)] = 1;
      }
    }
  }

  std::vector<int> out;
  for (int u = 0; u < n; ++u) {
    bool hit = false;
    const auto& adj = adjacency[static_cast<size_t>(u)];
    switch (d.cell.hops) {
      case 0:
        hit = graph.label_of(u) == *d.label1;
        break;
      case 1: {
        const std::string& neighbor_label =
            d.cell.arity == LabelArity::SL ? *d.label1 : *d.label2;
        const bool own_ok = d.cell.arity == LabelArity::SL ||
                            graph.label_of(u) == *d.label1;
        hit = own_ok && std::any_of(adj.begin(), adj.end(), [&](int v) {
                return graph.label_of(v) == neighbor_label;
              });
        break;
      }
      case 2: {
        const bool own_ok = d.cell.arity == LabelArity::SL ||
                            graph.label_of(u) == *d.label1;
        if (!own_ok) break;
        if (d.cell.arity == LabelArity::TL) {
          hit = std::any_of(adj.begin(), adj.end(), [&](int v) {
            return graph.label_of(v) == *d.label2 &&
                   property_hits[static_cast<size_t>(v)];
          });
        } else {
          hit = std::any_of(adj.begin(), adj.end(), [&](int v) {
            return property_hits[static_cast<size_t>(v)] != 0;
          });
        }
        break;
      }
      default:
        throw ContractError("unreachable hops");
    }
    if (hit) out.push_back(u);
  }
  return out;
}

namespace {

std::string question_predicate(const TaskDescriptor& d) {
  switch (d.cell.hops) {
    case 0:
      return "are " + *d.label1 + "s in the graph";
    case 1:
      if (d.cell.arity == LabelArity::SL) {
        return "have a " + *d.label1 + " as neighbor";
      }
      return "are " + *d.label1 + "s and have a " + *d.label2 + " as neighbor";
    case 2:
      switch (d.cell.arity) {
        case LabelArity::SL:
          return "have a neighbor who " + *d.property + " " + *d.label1 + "s";
        case LabelArity::DL:
          return "are " + *d.label1 + "s and have a neighbor who " +
                 *d.property + " " + *d.label2 + "s";
        case LabelArity::TL:
          return "are " + *d.label1 + "s and have a " + *d.label2 +
                 " as neighbor who " + *d.property + " " + *d.label3 + "s";
      }
      break;
  }
  throw ContractError("unreachable question structure");
}

}  // namespace

std::string render_question(const TaskDescriptor& d) {
  validate_descriptor(d);
  const std::string predicate = question_predicate(d);
  switch (d.cell.kind) {
    case TaskKind::Identification:
      return "Which nodes " + predicate + "?";
    case TaskKind::Counting:
      return "How many nodes " + predicate + "?";
    case TaskKind::Existence:
      return "Are there nodes that " + predicate + "?";
  }
  throw ContractError("unreachable task kind");
}

std::string canonical_answer(TaskKind kind, std::span<const int> nodes) {
  switch (kind) {
    case TaskKind::Existence:
      return nodes.empty() ? "no" : "yes";
    case TaskKind::Counting:
      return std::to_string(nodes.size());
    case TaskKind::Identification: {
      if (nodes.empty()) return "none";
      std::vector<int> sorted(nodes.begin(), nodes.end());
      std::sort(sorted.begin(), sorted.end());
      std::ostringstream out;
      for (size_t i = 0; i < sorted.size(); ++i) {
        if (i > 0) out << ", ";
        out << sorted[i];
      }
      return out.str();
    }
  }
  throw ContractError("unreachable task kind");
}

namespace {

constexpr int kDegenerateRetries = 8;

bool has_duplicate_labels(const TaskDescriptor& d) {
  std::vector<std::string> labels;
  for (const auto& slot : {d.label1, d.label2, d.label3}) {
    if (slot) labels.push_back(*slot);
  }
  std::sort(labels.begin(), labels.end());
  return std::adjacent_find(labels.begin(), labels.end()) != labels.end();
}

TaskDescriptor sample_descriptor(const TaskCell& cell,
                                 const std::vector<std::string>& labels,
                                 const std::vector<std::string>& relations,
                                 Rng& rng) {
  std::uniform_int_distribution<size_t> label_dist(0, labels.size() - 1);
  TaskDescriptor d;
  d.cell = cell;
  const int k = label_slot_count(cell);
  d.label1 = labels[label_dist(rng)];
  if (k >= 2) d.label2 = labels[label_dist(rng)];
  if (k >= 3) d.label3 = labels[label_dist(rng)];
  if (cell.hops == 2) {
    std::uniform_int_distribution<size_t> rel_dist(0, relations.size() - 1);
    d.property = relations[rel_dist(rng)];
  }
  return d;
}

}  // namespace

std::vector<QAExample> build_qa_dataset(std::span<const KnowledgeGraph> graphs,
                                        std::span<const TaskCell> grid,
                                        int per_graph, std::uint64_t seed) {
  if (per_graph < 1) throw ConfigError("build_qa_dataset: per_graph must be >= 1");
  Rng rng(seed);
  std::vector<QAExample> out;
  out.reserve(graphs.size() * grid.size() * static_cast<size_t>(per_graph));
  for (const KnowledgeGraph& graph : graphs) {
    const auto labels = label_vocabulary(graph);
    const auto relations = relation_vocabulary(graph);
    for (const TaskCell& cell : grid) {
      if (cell.hops == 2 && relations.empty()) {
        throw ConfigError("graph " + graph.graph_id +
                          " has no relations for a 2-hop cell");
      }
      for (int k = 0; k < per_graph; ++k) {
        TaskDescriptor d;
        std::vector<int> answer;
        bool degenerate = true;
        for (int attempt = 0; attempt <= kDegenerateRetries; ++attempt) {
          d = sample_descriptor(cell, labels, relations, rng);
          answer = answer_node_set(graph, d);
          degenerate = has_duplicate_labels(d) ||
                       static_cast<int>(answer.size()) == graph.node_count();
          if (!degenerate) break;
        }
        QAExample ex;
        ex.graph_id = graph.graph_id;
        ex.descriptor = d;
        ex.question = render_question(d);
        ex.node_answer_set = answer;
        ex.answer = canonical_answer(cell.kind, answer);
        ex.degenerate = degenerate;
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

std::string graph_to_text(const KnowledgeGraph& graph) {
  std::ostringstream out;
  out << "Nodes:";
  for (const Entity& e : graph.entities) {
    out << ' ' << e.id << " is a " << e.label << '.';
  }
  out << " Edges:";
  std::vector<Triple> sorted = graph.triples;
  std::sort(sorted.begin(), sorted.end(), [](const Triple& a, const Triple& b) {
    return std::tie(a.head, a.relation, a.tail) <
           std::tie(b.head, b.relation, b.tail);
  });
  for (const Triple& t : sorted) {
    out << ' ' << t.head << ' ' << graph.relation_name(t.relation) << ' '
        << t.tail << '.';
  }
  return out.str();
}

std::string qa_to_jsonl_line(const QAExample& ex) {
  ordered_json task;
  task["kind"] = task_kind_code(ex.descriptor.cell.kind);
  task["hops"] = ex.descriptor.cell.hops;
  task["arity"] = label_arity_code(ex.descriptor.cell.arity);
  auto labels = ordered_json::array();
  for (const auto& slot :
       {ex.descriptor.label1, ex.descriptor.label2, ex.descriptor.label3}) {
    if (slot) labels.push_back(*slot);
  }
  task["labels"] = std::move(labels);
  task["property"] =
      ex.descriptor.property ? ordered_json(*ex.descriptor.property)
                             : ordered_json(nullptr);
  ordered_json j;
  j["graph_id"] = ex.graph_id;
  j["task"] = std::move(task);
  j["question"] = ex.question;
  j["answer"] = ex.answer;
  j["answer_nodes"] = ex.node_answer_set;
  j["degenerate"] = ex.degenerate;
  return j.dump();
}

QAExample qa_from_jsonl_line(const std::string& line) {
  const auto j = ordered_json::parse(line);
  QAExample ex;
  ex.graph_id = j.at("graph_id").get<std::string>();
  const auto& task = j.at("task");
  ex.descriptor.cell.kind = parse_task_kind(task.at("kind").get<std::string>());
  ex.descriptor.cell.hops = task.at("hops").get<int>();
  ex.descriptor.cell.arity =
      parse_label_arity(task.at("arity").get<std::string>());
  const auto& labels = task.at("labels");
  if (labels.size() >= 1) ex.descriptor.label1 = labels[0].get<std::string>();
  if (labels.size() >= 2) ex.descriptor.label2 = labels[1].get<std::string>();
  if (labels.size() >= 3) ex.descriptor.label3 = labels[2].get<std::string>();
  if (!task.at("property").is_null()) {
    ex.descriptor.property = task.at("property").get<std::string>();
  }
  validate_descriptor(ex.descriptor);
  ex.question = j.at("question").get<std::string>();
  ex.answer = j.at("answer").get<std::string>();
  ex.node_answer_set = j.at("answer_nodes").get<std::vector<int>>();
  ex.degenerate = j.at("degenerate").get<bool>();
  return ex;
}

std::vector<QAExample> load_qa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open qa file: " + path);
  std::vector<QAExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(qa_from_jsonl_line(line));
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void save_qa(const std::string& path, std::span<const QAExample> examples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open qa file for writing: " + path);
  for (const QAExample& ex : examples) {
    out << qa_to_jsonl_line(ex) << '\n';
  }
  if (!out) throw IoError("qa file write failed: " + path);
}

}  // namespace kgst
