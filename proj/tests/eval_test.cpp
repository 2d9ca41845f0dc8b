#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "kgst/eval.hpp"
#include "kgst/repro.hpp"
#include "kgst/synthetic.hpp"

using namespace kgst;

namespace {

QAExample make_example(const std::string& graph_id, const std::string& question,
                       const std::string& answer, TaskKind kind) {
  QAExample ex;
  ex.graph_id = graph_id;
  ex.descriptor.cell = {kind, 0, LabelArity::SL};
  ex.descriptor.label1 = "Doctor";
  ex.question = question;
  ex.answer = answer;
  return ex;
}

}  // namespace

TEST_CASE("score_predictions computes exact-match accuracy with skips") {
  std::vector<QAExample> examples;
  std::vector<std::string> predictions;
  // 3 positive-existence, 2 negative; predictor always answers "yes"
  for (int i = 0; i < 5; ++i) {
    examples.push_back(make_example("g" + std::to_string(i), "Are there nodes?",
                                    i < 3 ? "yes" : "no", TaskKind::Existence));
    predictions.push_back("yes");
  }
  std::vector<char> skipped(5, 0);
  const ScoredPredictions scored =
      score_predictions(examples, predictions, skipped);
  CHECK(scored.accuracy == doctest::Approx(3.0 / 5.0));
  CHECK(scored.evaluated == 5);
  CHECK(scored.skipped == 0);

  // all-correct predictions give accuracy 1.0
  std::vector<std::string> gold;
  for (const auto& ex : examples) gold.push_back(ex.answer);
  CHECK(score_predictions(examples, gold, skipped).accuracy == 1.0);

  // skipped examples are counted separately, never as correct
  skipped[0] = 1;
  const ScoredPredictions with_skip = score_predictions(examples, gold, skipped);
  CHECK(with_skip.evaluated == 4);
  CHECK(with_skip.skipped == 1);
  CHECK(with_skip.accuracy == 1.0);

  // normalization is case- and whitespace-insensitive
  std::vector<std::string> shouty = {"YES", " yes", "yes ", "No", "NO "};
  CHECK(score_predictions(examples, shouty, std::vector<char>(5, 0)).accuracy ==
        1.0);
}

TEST_CASE("accuracy is invariant to test-set ordering") {
  std::vector<QAExample> examples;
  std::vector<std::string> predictions;
  for (int i = 0; i < 8; ++i) {
    examples.push_back(make_example("g" + std::to_string(i), "q?",
                                    i % 2 ? "yes" : "no", TaskKind::Existence));
    predictions.push_back(i % 3 ? "yes" : "no");
  }
  const double base =
      score_predictions(examples, predictions, std::vector<char>(8, 0)).accuracy;
  std::reverse(examples.begin(), examples.end());
  std::reverse(predictions.begin(), predictions.end());
  CHECK(score_predictions(examples, predictions, std::vector<char>(8, 0))
            .accuracy == doctest::Approx(base));
}

TEST_CASE("filter helpers slice by cell and split membership") {
  SyntheticConfig sc;
  sc.count = 10;
  sc.min_nodes = 3;
  sc.max_nodes = 4;
  const auto graphs = generate_synthetic(sc, 55);
  const auto split = split_dataset(graphs, 56);
  const auto cells = all_task_cells();
  const auto qa = build_qa_dataset(graphs, cells, 1, 57);
  const TaskCell cell = parse_cell_id("I-DL-1");
  const auto one_cell = filter_cell(qa, cell);
  CHECK(one_cell.size() == graphs.size());
  for (const auto& ex : one_cell) CHECK(ex.descriptor.cell == cell);
  const auto test_part = filter_split_membership(one_cell, split, "test");
  CHECK(test_part.size() == 1);
  CHECK_THROWS_AS(filter_split_membership(one_cell, split, "bogus"), ConfigError);
}

TEST_CASE("soft prompt baseline has k x d_LLM parameters") {
  const SoftPromptBaseline baseline = SoftPromptBaseline::init(1, 128, 9);
  CHECK(baseline.vectors.rows() == 1);
  CHECK(baseline.vectors.cols() == 128);
  CHECK(baseline.vectors.size() == 128);
  CHECK_THROWS_AS(SoftPromptBaseline::init(0, 128, 9), ConfigError);
}

TEST_CASE("prompt tuning predictions ignore the graph entirely") {
  Tokenizer tok = Tokenizer::build(std::vector<std::string>{"Doctor", "Nurse"},
                                   std::vector<std::string>{"knows"}, 8);
  LmConfig lc;
  lc.d_model = 16;
  lc.n_layers = 1;
  lc.n_heads = 2;
  lc.ff_mult = 2;
  lc.context = 48;
  FrozenLm lm(lc, tok, 77);
  lm.freeze();
  const SoftPromptBaseline baseline = SoftPromptBaseline::init(1, 16, 1);
  const std::string question = "Are there nodes that are Doctors in the graph?";
  const std::string a = prompt_tuning_predict(lm, baseline, question, 8);
  const std::string b = prompt_tuning_predict(lm, baseline, question, 8);
  CHECK(a == b);

  // two examples with the same question but different graphs and answers get
  // identical predictions
  std::vector<QAExample> pair = {
      make_example("left", question, "yes", TaskKind::Existence),
      make_example("right", question, "no", TaskKind::Existence)};
  EvalOptions options;
  options.threads = 1;
  const EvalRow row = evaluate_prompt_tuning(
      lm, baseline, pair, pair[0].descriptor.cell, options);
  CHECK(row.evaluated == 2);
  // one of the two must be wrong whatever the shared prediction is
  CHECK(row.accuracy == doctest::Approx(0.5));
}

TEST_CASE("report csv and grid render all rows") {
  EvalReport report;
  EvalRow row;
  row.dataset = "synthetic";
  row.method = "ours";
  row.scorer = "rotate";
  row.cell = "E-SL-0";
  row.accuracy = 0.875;
  row.evaluated = 8;
  row.skipped = 1;
  report.rows.push_back(row);
  row.cell = "C-SL-1";
  row.accuracy = 0.25;
  report.rows.push_back(row);
  row.method = "zero-shot";
  row.scorer = "";
  row.failed = true;
  report.rows.push_back(row);

  const std::string csv = report.to_csv();
  CHECK(csv.find("dataset,method,scorer,cell,accuracy,evaluated,skipped,failed") ==
        0);
  CHECK(csv.find("synthetic,ours,rotate,E-SL-0,0.875,8,1,0") != std::string::npos);
  CHECK(csv.find("synthetic,zero-shot,,C-SL-1,") != std::string::npos);

  const std::string grid = report.render_grid("method");
  CHECK(grid.find("ours") != std::string::npos);
  CHECK(grid.find("E-SL-0") != std::string::npos);
  CHECK(grid.find("0.88") != std::string::npos);
  CHECK(grid.find("fail") != std::string::npos);
  // 18 task-cell columns in the header
  const std::string header = grid.substr(0, grid.find('\n'));
  size_t count = 0, at = 0;
  while ((at = header.find("-SL-", at)) != std::string::npos) {
    ++count;
    at += 4;
  }
  CHECK(count == 9);  // 3 kinds x 3 SL hops
}

TEST_CASE("export_embeddings writes deterministic rows for each task") {
  SyntheticConfig sc;
  sc.count = 5;
  sc.min_nodes = 3;
  sc.max_nodes = 4;
  const auto graphs = generate_synthetic(sc, 91);
  KgeConfig kc;
  kc.scorer = Scorer::DistMult;
  kc.dim = 8;
  const KgeVocab vocab = KgeVocab::from_graphs(graphs);
  const KgeModel m1 = KgeModel::init(kc, vocab, 1);
  const KgeModel m2 = KgeModel::init(kc, vocab, 2);
  const Projector p1 = Projector::init(12, 8, 3);
  const Projector p2 = Projector::init(12, 8, 4);
  std::map<std::string, std::pair<const KgeModel*, const Projector*>> encoders;
  encoders.emplace("E-SL-1", std::make_pair(&m1, &p1));
  encoders.emplace("C-SL-1", std::make_pair(&m2, &p2));

  const auto dir = std::filesystem::temp_directory_path();
  const std::string path1 = (dir / "kgst_emb1.csv").string();
  const std::string path2 = (dir / "kgst_emb2.csv").string();
  export_embeddings(encoders, graphs, path1);
  export_embeddings(encoders, graphs, path2);
  std::ifstream f1(path1), f2(path2);
  const std::string b1{std::istreambuf_iterator<char>(f1), {}};
  const std::string b2{std::istreambuf_iterator<char>(f2), {}};
  CHECK(b1 == b2);

  // 5 graphs x 2 tasks data rows + header
  CHECK(std::count(b1.begin(), b1.end(), '\n') == 11);
  CHECK(b1.find("graph_id,task,scorer,g1") == 0);

  std::map<std::string, std::pair<const KgeModel*, const Projector*>> one;
  one.emplace("E-SL-1", std::make_pair(&m1, &p1));
  CHECK_THROWS_AS(export_embeddings(one, graphs, path1), ConfigError);
}

TEST_CASE("chain-of-thought prompt constructors carry their trigger phrases") {
  SyntheticConfig sc;
  sc.count = 3;
  sc.min_nodes = 3;
  sc.max_nodes = 3;
  const auto graphs = generate_synthetic(sc, 15);
  const GraphIndex index = index_graphs(graphs);
  const auto cells = all_task_cells();
  const auto qa = build_qa_dataset(graphs, cells, 1, 16);
  const std::vector<QAExample> exemplars(qa.begin(), qa.begin() + 2);

  const std::string cot =
      cot_prompt(exemplars, index, graphs[2], "Which nodes are Doctors in the graph?");
  CHECK(cot.find("Reasoning:") != std::string::npos);
  CHECK(cot.find("Answer:") != std::string::npos);
  CHECK(cot.find("Which nodes are Doctors in the graph?") != std::string::npos);

  const std::string zero =
      zero_cot_prompt(graphs[2], "How many nodes are Doctors in the graph?");
  CHECK(zero.find("Let's think step by step.") != std::string::npos);

  const std::string bag = cot_bag_prompt(exemplars, index, graphs[2], "q?");
  CHECK(bag.find("Let's construct a graph") != std::string::npos);
}
