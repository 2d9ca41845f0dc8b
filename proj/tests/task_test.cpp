#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "kgst/synthetic.hpp"
#include "kgst/task.hpp"

using namespace kgst;

namespace {

// Independent reference oracle: evaluates the template quantifiers literally
// against the raw triple list, with no precomputation shared with the
// implementation.
bool ref_is_neighbor(const KnowledgeGraph& g, int u, int v) {
  for (const Triple& t : g.triples) {
    if ((t.head == u && t.tail == v) || (t.head == v && t.tail == u)) return true;
  }
  return false;
}

bool ref_property_to_label(const KnowledgeGraph& g, int v,
                           const std::string& property, const std::string& label) {
  for (const Triple& t : g.triples) {
    if (t.head == v && g.relation_name(t.relation) == property &&
        g.label_of(t.tail) == label) {
      return true;
    }
  }
  return false;
}

std::vector<int> ref_answer(const KnowledgeGraph& g, const TaskDescriptor& d) {
  std::vector<int> out;
  for (int u = 0; u < g.node_count(); ++u) {
    bool hit = false;
    if (d.cell.hops == 0) {
      hit = g.label_of(u) == *d.label1;
    } else if (d.cell.hops == 1) {
      const std::string& neighbor_label =
          d.cell.arity == LabelArity::SL ? *d.label1 : *d.label2;
      for (int v = 0; v < g.node_count() && !hit; ++v) {
        if (v != u && ref_is_neighbor(g, u, v) &&
            g.label_of(v) == neighbor_label) {
          hit = true;
        }
      }
      if (d.cell.arity == LabelArity::DL && g.label_of(u) != *d.label1) hit = false;
    } else {
      const std::string& target = d.cell.arity == LabelArity::SL ? *d.label1
                                  : d.cell.arity == LabelArity::DL ? *d.label2
                                                                   : *d.label3;
      for (int v = 0; v < g.node_count() && !hit; ++v) {
        if (v == u || !ref_is_neighbor(g, u, v)) continue;
        if (d.cell.arity == LabelArity::TL && g.label_of(v) != *d.label2) continue;
        if (ref_property_to_label(g, v, *d.property, target)) hit = true;
      }
      if (d.cell.arity != LabelArity::SL && g.label_of(u) != *d.label1) hit = false;
    }
    if (hit) out.push_back(u);
  }
  return out;
}

// entities {0:Doctor, 1:Teacher, 2:Doctor}, triples (0,knows,1), (1,knows,2)
KnowledgeGraph g0() {
  KnowledgeGraph g;
  g.graph_id = "g0";
  g.entities = {{0, "Doctor"}, {1, "Teacher"}, {2, "Doctor"}};
  g.relations = {{0, "knows"}};
  g.triples = {{0, 0, 1}, {1, 0, 2}};
  validate_graph(g);
  return g;
}

TaskDescriptor descriptor(TaskKind kind, int hops, LabelArity arity,
                          std::optional<std::string> l1 = {},
                          std::optional<std::string> l2 = {},
                          std::optional<std::string> l3 = {},
                          std::optional<std::string> property = {}) {
  TaskDescriptor d;
  d.cell = {kind, hops, arity};
  d.label1 = std::move(l1);
  d.label2 = std::move(l2);
  d.label3 = std::move(l3);
  d.property = std::move(property);
  return d;
}

}  // namespace

TEST_CASE("the task grid has 18 cells with round-tripping ids") {
  const auto cells = all_task_cells();
  CHECK(cells.size() == 18);
  std::set<std::string> ids;
  for (const TaskCell& cell : cells) {
    const std::string id = cell_id(cell);
    CHECK(ids.insert(id).second);
    CHECK(parse_cell_id(id) == cell);
  }
  CHECK(ids.count("E-SL-0") == 1);
  CHECK(ids.count("I-TL-2") == 1);
  CHECK_THROWS_AS(parse_cell_id("E-TL-0"), ConfigError);
  CHECK_THROWS_AS(parse_cell_id("bogus"), ConfigError);
}

TEST_CASE("answer_node_set matches the hand-derived sets on the 3-node path") {
  const KnowledgeGraph g = g0();
  // 0-hop: nodes labeled Doctor
  CHECK(answer_node_set(g, descriptor(TaskKind::Identification, 0, LabelArity::SL,
                                      "Doctor")) == std::vector<int>{0, 2});
  // 1-hop: nodes with a Doctor neighbor -- only the middle Teacher
  CHECK(answer_node_set(g, descriptor(TaskKind::Identification, 1, LabelArity::SL,
                                      "Doctor")) == std::vector<int>{1});
  // 2-hop: neighbors of node 1, which has the directed edge (1,knows,2) to a
  // Doctor
  CHECK(answer_node_set(g, descriptor(TaskKind::Identification, 2, LabelArity::SL,
                                      "Doctor", {}, {}, "knows")) ==
        std::vector<int>{0, 2});
  // label absent from this graph: unsatisfiable predicate
  CHECK(answer_node_set(g, descriptor(TaskKind::Identification, 0, LabelArity::SL,
                                      "Lawyer"))
            .empty());
}

TEST_CASE("2-hop respects the stored triple direction") {
  KnowledgeGraph g = g0();
  // reverse (1,knows,2) -> (2,knows,1): node 1 no longer knows a Doctor, but
  // node 2 now knows the Teacher, and (0,knows,1) still points at a Teacher
  g.triples = {{0, 0, 1}, {2, 0, 1}};
  validate_graph(g);
  CHECK(answer_node_set(g, descriptor(TaskKind::Identification, 2, LabelArity::SL,
                                      "Doctor", {}, {}, "knows"))
            .empty());
  const auto teachers = answer_node_set(
      g, descriptor(TaskKind::Identification, 2, LabelArity::SL, "Teacher", {}, {},
                    "knows"));
  // witnesses v=0 and v=2 both know a Teacher; their neighbors are {1} each,
  // and 1 is adjacent to both
  CHECK(teachers == std::vector<int>{1});
}

TEST_CASE("answer_node_set agrees with the reference oracle on random graphs") {
  SyntheticConfig config;
  config.count = 25;
  config.min_nodes = 4;
  config.max_nodes = 10;
  const auto graphs = generate_synthetic(config, 17);
  const auto cells = all_task_cells();
  Rng rng(5);
  for (const auto& g : graphs) {
    const auto labels = label_vocabulary(g);
    const auto relations = relation_vocabulary(g);
    std::uniform_int_distribution<size_t> ld(0, labels.size() - 1);
    std::uniform_int_distribution<size_t> rd(0, relations.size() - 1);
    for (const TaskCell& cell : cells) {
      TaskDescriptor d;
      d.cell = cell;
      d.label1 = labels[ld(rng)];
      if (cell.arity != LabelArity::SL) d.label2 = labels[ld(rng)];
      if (cell.arity == LabelArity::TL) d.label3 = labels[ld(rng)];
      if (cell.hops == 2) d.property = relations[rd(rng)];
      CHECK(answer_node_set(g, d) == ref_answer(g, d));
    }
  }
}

TEST_CASE("task kinds are mutually consistent and monotone") {
  SyntheticConfig config;
  config.count = 40;
  config.min_nodes = 4;
  config.max_nodes = 12;
  const auto graphs = generate_synthetic(config, 23);
  Rng rng(9);
  for (const auto& g : graphs) {
    const auto labels = label_vocabulary(g);
    const auto relations = relation_vocabulary(g);
    std::uniform_int_distribution<size_t> ld(0, labels.size() - 1);
    std::uniform_int_distribution<size_t> rd(0, relations.size() - 1);
    const std::string l1 = labels[ld(rng)];
    const std::string l2 = labels[ld(rng)];
    const std::string l3 = labels[ld(rng)];
    const std::string property = relations[rd(rng)];

    // E <=> C > 0 <=> I != "none", and C == |I| for shared slots
    for (const TaskCell& cell : all_task_cells()) {
      TaskDescriptor d;
      d.cell = cell;
      d.label1 = l1;
      if (cell.arity != LabelArity::SL) d.label2 = l2;
      if (cell.arity == LabelArity::TL) d.label3 = l3;
      if (cell.hops == 2) d.property = property;
      const auto nodes = answer_node_set(g, d);
      const std::string e = canonical_answer(TaskKind::Existence, nodes);
      const std::string c = canonical_answer(TaskKind::Counting, nodes);
      const std::string i = canonical_answer(TaskKind::Identification, nodes);
      CHECK((e == "yes") == (c != "0"));
      CHECK((e == "yes") == (i != "none"));
      CHECK(std::stoul(c) == nodes.size());
    }

    // TL subset DL subset SL for matched slots (2-hop)
    const auto sl = answer_node_set(
        g, descriptor(TaskKind::Identification, 2, LabelArity::SL, l3, {}, {},
                      property));
    const auto dl = answer_node_set(
        g, descriptor(TaskKind::Identification, 2, LabelArity::DL, l1, l3, {},
                      property));
    const auto tl = answer_node_set(
        g, descriptor(TaskKind::Identification, 2, LabelArity::TL, l1, l2, l3,
                      property));
    CHECK(std::includes(sl.begin(), sl.end(), dl.begin(), dl.end()));
    CHECK(std::includes(dl.begin(), dl.end(), tl.begin(), tl.end()));

    // 1-hop DL subset SL with the own-label constraint dropped
    const auto sl1 = answer_node_set(
        g, descriptor(TaskKind::Identification, 1, LabelArity::SL, l2));
    const auto dl1 = answer_node_set(
        g, descriptor(TaskKind::Identification, 1, LabelArity::DL, l1, l2));
    CHECK(std::includes(sl1.begin(), sl1.end(), dl1.begin(), dl1.end()));
  }
}

TEST_CASE("answers are invariant under triple reordering") {
  const auto graphs = generate_synthetic({3, 5, 8}, 31);
  Rng rng(2);
  for (auto g : graphs) {
    const auto labels = label_vocabulary(g);
    const auto relations = relation_vocabulary(g);
    TaskDescriptor d = descriptor(TaskKind::Identification, 2, LabelArity::SL,
                                  labels[0], {}, {}, relations[0]);
    const auto before = answer_node_set(g, d);
    std::shuffle(g.triples.begin(), g.triples.end(), rng);
    CHECK(answer_node_set(g, d) == before);
  }
}

TEST_CASE("render_question fills the exact templates") {
  CHECK(render_question(descriptor(TaskKind::Identification, 0, LabelArity::SL,
                                   "Doctor")) ==
        "Which nodes are Doctors in the graph?");
  CHECK(render_question(descriptor(TaskKind::Existence, 1, LabelArity::SL,
                                   "Doctor")) ==
        "Are there nodes that have a Doctor as neighbor?");
  CHECK(render_question(descriptor(TaskKind::Counting, 2, LabelArity::TL, "A",
                                   "B", "C", "knows")) ==
        "How many nodes are As and have a B as neighbor who knows Cs?");
  CHECK(render_question(descriptor(TaskKind::Identification, 1, LabelArity::DL,
                                   "Nurse", "Artist")) ==
        "Which nodes are Nurses and have a Artist as neighbor?");
  CHECK(render_question(descriptor(TaskKind::Existence, 2, LabelArity::DL,
                                   "Nurse", "Artist", {}, "hires")) ==
        "Are there nodes that are Nurses and have a neighbor who hires Artists?");
  CHECK(render_question(descriptor(TaskKind::Counting, 2, LabelArity::SL,
                                   "Lawyer", {}, {}, "mentors")) ==
        "How many nodes have a neighbor who mentors Lawyers?");
}

TEST_CASE("render_question mentions every filled slot exactly once") {
  const TaskDescriptor d = descriptor(TaskKind::Identification, 2, LabelArity::TL,
                                      "Alpha", "Beta", "Gamma", "links");
  const std::string q = render_question(d);
  for (const std::string slot : {"Alpha", "Beta", "Gamma", "links"}) {
    size_t count = 0, at = 0;
    while ((at = q.find(slot, at)) != std::string::npos) {
      ++count;
      at += slot.size();
    }
    CHECK(count == 1);
  }
}

TEST_CASE("canonical answers use the fixed surface forms") {
  CHECK(canonical_answer(TaskKind::Existence, std::vector<int>{2}) == "yes");
  CHECK(canonical_answer(TaskKind::Existence, std::vector<int>{}) == "no");
  CHECK(canonical_answer(TaskKind::Counting, std::vector<int>{}) == "0");
  CHECK(canonical_answer(TaskKind::Counting, std::vector<int>{4, 7, 9}) == "3");
  CHECK(canonical_answer(TaskKind::Identification, std::vector<int>{3, 1}) ==
        "1, 3");
  CHECK(canonical_answer(TaskKind::Identification, std::vector<int>{}) == "none");
}

TEST_CASE("build_qa_dataset is deterministic with the expected shape") {
  SyntheticConfig config;
  config.count = 12;
  config.min_nodes = 5;
  config.max_nodes = 9;
  const auto graphs = generate_synthetic(config, 77);
  const auto cells = all_task_cells();
  const auto a = build_qa_dataset(graphs, cells, 1, 3);
  CHECK(a.size() == graphs.size() * 18);
  const auto b = build_qa_dataset(graphs, cells, 1, 3);
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].question == b[i].question);
    CHECK(a[i].answer == b[i].answer);
    CHECK(a[i].degenerate == b[i].degenerate);
  }
  for (const QAExample& ex : a) {
    CHECK(ex.answer ==
          canonical_answer(ex.descriptor.cell.kind, ex.node_answer_set));
    CHECK(ex.question == render_question(ex.descriptor));
  }
  CHECK_THROWS_AS(build_qa_dataset(graphs, cells, 0, 3), ConfigError);
}

TEST_CASE("single-label vocabularies force the degenerate flag on DL cells") {
  KnowledgeGraph g;
  g.graph_id = "mono";
  g.relations = {{0, "knows"}};
  for (int i = 0; i < 4; ++i) g.entities.push_back({i, "Same"});
  for (int u = 0; u < 4; ++u) {
    for (int v = u + 1; v < 4; ++v) g.triples.push_back({u, 0, v});
  }
  validate_graph(g);
  const TaskCell dl{TaskKind::Identification, 1, LabelArity::DL};
  const auto qa = build_qa_dataset(std::span<const KnowledgeGraph>(&g, 1),
                                   std::span<const TaskCell>(&dl, 1), 1, 0);
  REQUIRE(qa.size() == 1);
  CHECK(qa[0].degenerate);
}

TEST_CASE("graph_to_text uses the fixed serialization") {
  CHECK(graph_to_text(g0()) ==
        "Nodes: 0 is a Doctor. 1 is a Teacher. 2 is a Doctor. Edges: 0 knows 1. "
        "1 knows 2.");
  KnowledgeGraph single;
  single.graph_id = "single";
  single.entities = {{0, "X"}};
  single.relations = {};
  validate_graph(single);
  CHECK(graph_to_text(single) == "Nodes: 0 is a X. Edges:");
}

TEST_CASE("graph_to_text is injective over a generated corpus") {
  SyntheticConfig config;
  config.count = 120;
  config.min_nodes = 3;
  config.max_nodes = 8;
  const auto graphs = generate_synthetic(config, 13);
  std::set<std::string> texts;
  for (const auto& g : graphs) CHECK(texts.insert(graph_to_text(g)).second);
}

TEST_CASE("qa JSONL round-trips") {
  SyntheticConfig config;
  config.count = 4;
  config.min_nodes = 4;
  config.max_nodes = 6;
  const auto graphs = generate_synthetic(config, 21);
  const auto cells = all_task_cells();
  const auto qa = build_qa_dataset(graphs, cells, 2, 9);
  const std::string path =
      (std::filesystem::temp_directory_path() / "kgst_qa_rt.jsonl").string();
  save_qa(path, qa);
  const auto loaded = load_qa(path);
  REQUIRE(loaded.size() == qa.size());
  for (size_t i = 0; i < qa.size(); ++i) {
    CHECK(loaded[i].graph_id == qa[i].graph_id);
    CHECK(loaded[i].descriptor == qa[i].descriptor);
    CHECK(loaded[i].question == qa[i].question);
    CHECK(loaded[i].answer == qa[i].answer);
    CHECK(loaded[i].node_answer_set == qa[i].node_answer_set);
    CHECK(loaded[i].degenerate == qa[i].degenerate);
  }
}

TEST_CASE("descriptor vocabulary validation catches unknown slots") {
  const auto d = descriptor(TaskKind::Existence, 2, LabelArity::SL, "Ghost", {},
                            {}, "haunts");
  const std::vector<std::string> labels = {"Doctor", "Ghost"};
  const std::vector<std::string> relations = {"knows"};
  CHECK_THROWS_AS(validate_descriptor(d, labels, relations), ConfigError);
  const std::vector<std::string> relations_ok = {"knows", "haunts"};
  CHECK_NOTHROW(validate_descriptor(d, labels, relations_ok));
  // structural violations
  TaskDescriptor bad = d;
  bad.property.reset();
  CHECK_THROWS_AS(validate_descriptor(bad), ConfigError);
}
