#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgst/graph.hpp"

namespace kgst {

enum class TaskKind { Existence, Counting, Identification };
enum class LabelArity { SL, DL, TL };

std::string task_kind_code(TaskKind kind);        // "E" / "C" / "I"
std::string label_arity_code(LabelArity arity);   // "SL" / "DL" / "TL"
TaskKind parse_task_kind(const std::string& code);
LabelArity parse_label_arity(const std::string& code);

// One cell of the task grid: kind x hops x arity. Valid structures are
// (0,SL), (1,SL), (1,DL), (2,SL), (2,DL), (2,TL), giving 18 cells over the
// three kinds.
struct TaskCell {
  TaskKind kind = TaskKind::Existence;
  int hops = 0;
  LabelArity arity = LabelArity::SL;

  friend bool operator==(const TaskCell&, const TaskCell&) = default;
};

bool cell_structure_valid(int hops, LabelArity arity);
std::vector<TaskCell> all_task_cells();          // the 18-cell grid
std::string cell_id(const TaskCell& cell);       // e.g. "E-SL-0", "I-TL-2"
TaskCell parse_cell_id(const std::string& id);

// A cell with its slots filled. Slot roles by structure:
//   (0,SL)  label1 = queried node label
//   (1,SL)  label1 = neighbor label
//   (1,DL)  label1 = node label, label2 = neighbor label
//   (2,SL)  property, label1 = property-target label
//   (2,DL)  label1 = node label, property, label2 = property-target label
//   (2,TL)  label1 = node label, label2 = neighbor label, property,
//           label3 = property-target label
struct TaskDescriptor {
  TaskCell cell;
  std::optional<std::string> label1;
  std::optional<std::string> label2;
  std::optional<std::string> label3;
  std::optional<std::string> property;

  friend bool operator==(const TaskDescriptor&, const TaskDescriptor&) = default;
};

// Checks slot presence for the cell structure.
void validate_descriptor(const TaskDescriptor& descriptor);
// Additionally checks that every referenced label/relation exists in the
// dataset vocabulary (labels absent from an individual graph are fine: the
// predicate is then unsatisfiable and the answer set empty).
void validate_descriptor(const TaskDescriptor& descriptor,
                         std::span<const std::string> label_vocab,
                         std::span<const std::string> relation_vocab);

// Ground-truth node set by traversal. Neighbor steps ignore direction; the
// 2-hop property step follows the stored triple direction (v, P, w). The
// queried node itself may serve as a witness. Result is sorted ascending.
std::vector<int> answer_node_set(const KnowledgeGraph& graph,
                                 const TaskDescriptor& descriptor);

// Fills the question template for the descriptor. Plural slots append "s" to
// the label; the property slot is rendered as the bare relation name, which
// is expected to be an already-conjugated verb ("knows").
std::string render_question(const TaskDescriptor& descriptor);

// E: "yes"/"no"; C: decimal count; I: ids ascending joined by ", ",
// or "none" when empty.
std::string canonical_answer(TaskKind kind, std::span<const int> nodes);

struct QAExample {
  std::string graph_id;
  TaskDescriptor descriptor;
  std::string question;
  std::string answer;
  std::vector<int> node_answer_set;
  bool degenerate = false;
};

// Samples `per_graph` slot assignments per graph and grid cell from the
// graph's own vocabulary. A sample is degenerate when two label slots
// coincide (DL/TL) or the answer covers every node; degenerate draws are
// resampled up to 8 times, then emitted with the flag set.
std::vector<QAExample> build_qa_dataset(std::span<const KnowledgeGraph> graphs,
                                        std::span<const TaskCell> grid,
                                        int per_graph, std::uint64_t seed);

// Deterministic serialization used for prompting and LM pretraining:
// "Nodes: 0 is a Doctor. 1 is a Teacher. Edges: 0 knows 1."
std::string graph_to_text(const KnowledgeGraph& graph);

// QA JSONL:
// {"graph_id", "task": {"kind","hops","arity","labels":[...],"property"},
//  "question", "answer", "degenerate"}
std::string qa_to_jsonl_line(const QAExample& example);
QAExample qa_from_jsonl_line(const std::string& line);
std::vector<QAExample> load_qa(const std::string& path);
void save_qa(const std::string& path, std::span<const QAExample> examples);

}  // namespace kgst
