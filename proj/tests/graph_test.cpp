#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "kgst/graph_io.hpp"
#include "kgst/synthetic.hpp"

using namespace kgst;

namespace {

KnowledgeGraph path_graph_3() {
  // 0 -knows- 1 -knows- 2
  KnowledgeGraph g;
  g.graph_id = "path3";
  g.entities = {{0, "Doctor"}, {1, "Teacher"}, {2, "Doctor"}};
  g.relations = {{0, "knows"}};
  g.triples = {{0, 0, 1}, {1, 0, 2}};
  validate_graph(g);
  return g;
}

std::string serialize_all(std::span<const KnowledgeGraph> graphs) {
  std::string out;
  for (const auto& g : graphs) out += graph_to_jsonl_line(g) + "\n";
  return out;
}

}  // namespace

TEST_CASE("synthetic graphs are complete with one triple per unordered pair") {
  SyntheticConfig config;
  config.count = 20;
  config.min_nodes = 4;
  config.max_nodes = 9;
  const auto graphs = generate_synthetic(config, 11);
  REQUIRE(graphs.size() == 20);
  for (const auto& g : graphs) {
    const int n = g.node_count();
    CHECK(n >= 4);
    CHECK(n <= 9);
    CHECK(static_cast<int>(g.triples.size()) == n * (n - 1) / 2);
    std::set<std::pair<int, int>> pairs;
    for (const Triple& t : g.triples) {
      const auto pair = std::minmax(t.head, t.tail);
      CHECK(pairs.insert({pair.first, pair.second}).second);
    }
    // every unordered pair appears exactly once
    CHECK(pairs.size() == static_cast<size_t>(n * (n - 1) / 2));
  }
}

TEST_CASE("smallest complete graph has two nodes and one triple") {
  SyntheticConfig config;
  config.count = 1;
  config.min_nodes = 2;
  config.max_nodes = 2;
  const auto graphs = generate_synthetic(config, 3);
  REQUIRE(graphs.size() == 1);
  CHECK(graphs[0].node_count() == 2);
  CHECK(graphs[0].triples.size() == 1);
}

TEST_CASE("synthetic generation is byte-deterministic in the seed") {
  SyntheticConfig config;
  config.count = 5;
  config.min_nodes = 4;
  config.max_nodes = 4;
  const auto a = generate_synthetic(config, 7);
  const auto b = generate_synthetic(config, 7);
  CHECK(serialize_all(a) == serialize_all(b));
  const auto c = generate_synthetic(config, 8);
  CHECK(serialize_all(a) != serialize_all(c));
}

TEST_CASE("synthetic generation rejects bad configuration") {
  SyntheticConfig config;
  config.count = 1;
  config.min_nodes = 1;
  CHECK_THROWS_AS(generate_synthetic(config, 0), ConfigError);
  config.min_nodes = 2;
  config.labels.clear();
  CHECK_THROWS_AS(generate_synthetic(config, 0), ConfigError);
}

TEST_CASE("neighbors ignores direction and is symmetric") {
  const KnowledgeGraph g = path_graph_3();
  CHECK(neighbors(g, 1) == std::vector<int>{0, 2});
  CHECK(neighbors(g, 0) == std::vector<int>{1});
  CHECK_THROWS_AS(neighbors(g, 9), LookupError);

  SyntheticConfig config;
  config.count = 3;
  config.min_nodes = 4;
  config.max_nodes = 8;
  for (const auto& graph : generate_synthetic(config, 5)) {
    for (int u = 0; u < graph.node_count(); ++u) {
      // complete graph: everyone is adjacent to everyone else
      CHECK(neighbors(graph, u).size() ==
            static_cast<size_t>(graph.node_count() - 1));
      for (int v : neighbors(graph, u)) {
        const auto back = neighbors(graph, v);
        CHECK(std::find(back.begin(), back.end(), u) != back.end());
      }
    }
  }
}

TEST_CASE("single-entity graph has no neighbors") {
  KnowledgeGraph g;
  g.graph_id = "lonely";
  g.entities = {{0, "X"}};
  g.relations = {{0, "knows"}};
  validate_graph(g);
  CHECK(neighbors(g, 0).empty());
}

TEST_CASE("split_dataset keeps 80/10/10 proportions") {
  SyntheticConfig config;
  config.count = 600;
  config.min_nodes = 2;
  config.max_nodes = 3;
  const auto graphs = generate_synthetic(config, 1);
  const DatasetSplit split = split_dataset(graphs, 42);
  CHECK(split.train.size() == 480);
  CHECK(split.validation.size() == 60);
  CHECK(split.test.size() == 60);

  config.count = 10;
  const auto ten = generate_synthetic(config, 1);
  const DatasetSplit small = split_dataset(ten, 42);
  CHECK(small.train.size() == 8);
  CHECK(small.validation.size() == 1);
  CHECK(small.test.size() == 1);

  config.count = 9;
  const auto nine = generate_synthetic(config, 1);
  CHECK_THROWS_AS(split_dataset(nine, 42), ConfigError);
}

TEST_CASE("split_dataset is a deterministic disjoint exhaustive partition") {
  SyntheticConfig config;
  config.count = 57;
  config.min_nodes = 2;
  config.max_nodes = 3;
  const auto graphs = generate_synthetic(config, 99);
  const DatasetSplit a = split_dataset(graphs, 7);
  const DatasetSplit b = split_dataset(graphs, 7);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  CHECK(a.test == b.test);

  std::set<std::string> seen;
  for (const auto& part : {a.train, a.validation, a.test}) {
    for (const auto& id : part) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == graphs.size());
}

TEST_CASE("graph JSONL round-trips losslessly") {
  SyntheticConfig config;
  config.count = 12;
  config.min_nodes = 3;
  config.max_nodes = 7;
  const auto graphs = generate_synthetic(config, 33);
  const std::string path =
      (std::filesystem::temp_directory_path() / "kgst_graphs_rt.jsonl").string();
  save_graphs(path, graphs);
  const auto loaded = load_graphs(path);
  REQUIRE(loaded.size() == graphs.size());
  CHECK(serialize_all(loaded) == serialize_all(graphs));

  // second save is byte-identical
  const std::string path2 =
      (std::filesystem::temp_directory_path() / "kgst_graphs_rt2.jsonl").string();
  save_graphs(path2, loaded);
  std::ifstream f1(path), f2(path2);
  const std::string b1{std::istreambuf_iterator<char>(f1), {}};
  const std::string b2{std::istreambuf_iterator<char>(f2), {}};
  CHECK(b1 == b2);
}

TEST_CASE("load_graphs rejects invalid records with line numbers") {
  const auto dir = std::filesystem::temp_directory_path();
  {
    const std::string path = (dir / "kgst_bad_selfloop.jsonl").string();
    std::ofstream out(path);
    out << R"({"graph_id":"g","labels":["A","B"],"relations":["r"],"triples":[[0,0,0]]})"
        << "\n";
    out.close();
    CHECK_THROWS_AS(load_graphs(path), ValidationError);
  }
  {
    const std::string path = (dir / "kgst_bad_json.jsonl").string();
    std::ofstream out(path);
    out << "{not json}\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_graphs(path),
                         doctest::Contains(":1:"), ParseError);
  }
  {
    const std::string path = (dir / "kgst_empty.jsonl").string();
    std::ofstream out(path);
    out.close();
    CHECK(load_graphs(path).empty());
  }
}

TEST_CASE("validate_graph names the violated rule") {
  KnowledgeGraph g;
  g.graph_id = "bad";
  g.entities = {{0, "A"}, {1, "B"}, {2, "C"}};
  g.relations = {{0, "r"}};
  g.triples = {{0, 0, 1}};
  // entity 2 untouched
  CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("appears in no triple"),
                       ValidationError);
  g.triples.push_back({1, 0, 2});
  CHECK_NOTHROW(validate_graph(g));
  g.triples.push_back({1, 0, 2});
  CHECK_THROWS_WITH_AS(validate_graph(g), doctest::Contains("duplicate"),
                       ValidationError);
}

TEST_CASE("bundled mutag-style sample loads with the documented statistics") {
  const auto graphs =
      load_graphs(std::string(KGST_SOURCE_DIR) + "/samples/mutag_mini.jsonl");
  REQUIRE(graphs.size() == 10);
  int nodes = 0, edges = 0;
  for (const auto& g : graphs) {
    nodes += g.node_count();
    edges += static_cast<int>(g.triples.size());
  }
  CHECK(nodes == 180);  // mean 18.0 nodes
  CHECK(edges == 398);  // mean 39.8 edges
}

TEST_CASE("bundled aids-style sample loads") {
  const auto graphs =
      load_graphs(std::string(KGST_SOURCE_DIR) + "/samples/aids_mini.jsonl");
  REQUIRE(graphs.size() == 10);
  int nodes = 0, edges = 0;
  for (const auto& g : graphs) {
    nodes += g.node_count();
    edges += static_cast<int>(g.triples.size());
  }
  CHECK(nodes == 156);  // mean 15.6 nodes
  CHECK(edges == 324);  // mean 32.4 edges
}
