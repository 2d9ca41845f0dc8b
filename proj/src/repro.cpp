#include "kgst/repro.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "kgst/digest.hpp"
#include "kgst/graph_io.hpp"

namespace kgst {

namespace fs = std::filesystem;

std::vector<std::string> build_pretrain_corpus(
    std::span<const KnowledgeGraph> graphs, const DatasetSplit& split,
    const CorpusConfig& corpus, std::uint64_t seed) {
  const std::vector<TaskCell> cells = all_task_cells();
  Rng rng(seed);
  std::uniform_int_distribution<size_t> cell_dist(0, cells.size() - 1);
  std::vector<std::string> records;
  for (const KnowledgeGraph& graph : graphs) {
    if (!split.in_train(graph.graph_id)) continue;
    auto sample_qa = [&]() {
      const TaskCell cell = cells[cell_dist(rng)];
      const std::vector<QAExample> drawn = build_qa_dataset(
          std::span<const KnowledgeGraph>(&graph, 1),
          std::span<const TaskCell>(&cell, 1), 1, rng());
      return drawn.front();
    };
    for (int k = 0; k < corpus.qa_records_per_graph; ++k) {
      const QAExample ex = sample_qa();
      records.push_back(ex.question + " <sep> " + ex.answer);
    }
    const std::string graph_text = graph_to_text(graph);
    for (int k = 0; k < corpus.graph_text_records_per_graph; ++k) {
      const QAExample ex = sample_qa();
      records.push_back(graph_text + " <sep> " + ex.question + " <sep> " +
                        ex.answer);
    }
  }
  return records;
}

Tokenizer build_tokenizer(std::span<const KnowledgeGraph> graphs) {
  std::set<std::string> labels, relations;
  int max_nodes = 0;
  for (const KnowledgeGraph& g : graphs) {
    for (const Entity& e : g.entities) labels.insert(e.label);
    for (const Relation& r : g.relations) relations.insert(r.name);
    max_nodes = std::max(max_nodes, g.node_count());
  }
  const std::vector<std::string> label_list(labels.begin(), labels.end());
  const std::vector<std::string> relation_list(relations.begin(), relations.end());
  return Tokenizer::build(label_list, relation_list, max_nodes);
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

}  // namespace

nlohmann::ordered_json run_repro(const RunConfig& config, std::uint64_t seed,
                                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/encoders");
  fs::create_directories(out_dir + "/metrics");
  const int threads = resolve_threads(config.threads);

  // data
  const std::vector<KnowledgeGraph> graphs = generate_synthetic(config.data, seed);
  const std::string graphs_path = out_dir + "/graphs.jsonl";
  save_graphs(graphs_path, graphs);
  const DatasetSplit split = split_dataset(graphs, seed + 1);
  const std::vector<TaskCell> grid = all_task_cells();
  const std::vector<QAExample> qa =
      build_qa_dataset(graphs, grid, config.qa_per_graph, seed + 2);
  const std::string qa_path = out_dir + "/qa.jsonl";
  save_qa(qa_path, qa);
  const GraphIndex graph_index = index_graphs(graphs);

  // frozen language model
  const Tokenizer tokenizer = build_tokenizer(graphs);
  const std::vector<std::string> corpus =
      build_pretrain_corpus(graphs, split, config.corpus, seed + 3);
  PretrainConfig pretrain = config.pretrain;
  pretrain.seed = seed + 4;
  pretrain.threads = threads;
  FrozenLm lm = pretrain_lm(corpus, tokenizer, config.lm, pretrain);
  lm.freeze();
  const std::string lm_path = out_dir + "/lm.ckpt";
  lm.save(lm_path);

  EvalOptions eval_options = config.eval;
  eval_options.dataset = "synthetic";
  eval_options.threads = threads;
  eval_options.placement = config.train.placement;
  eval_options.seed = seed + 5;

  EvalReport report;
  report.metadata["seed"] = seed;
  report.metadata["lm_digest"] = lm.weight_digest();

  std::map<std::string, TrainState> trained_states;
  std::uint64_t cell_seed = seed + 10;
  const auto has_method = [&](const std::string& m) {
    return std::find(config.repro_methods.begin(), config.repro_methods.end(), m) !=
           config.repro_methods.end();
  };

  for (const std::string& cell_name : config.repro_cells) {
    const TaskCell cell = parse_cell_id(cell_name);
    const std::vector<QAExample> cell_examples = filter_cell(qa, cell);
    const std::vector<QAExample> test =
        filter_split_membership(cell_examples, split, "test");
    const std::vector<QAExample> train_pool =
        filter_split_membership(cell_examples, split, "train");

    if (has_method("ours")) {
      TrainConfig tc = config.train;
      tc.seed = cell_seed;
      tc.threads = threads;
      TrainResult trained =
          train(lm, cell_examples, graph_index, split, config.kge, tc);
      save_train_state(out_dir + "/encoders/" + cell_name + ".ckpt",
                       trained.state);
      write_text(out_dir + "/metrics/" + cell_name + ".csv",
                 metrics_to_csv(trained.log));
      report.rows.push_back(evaluate_ours(lm, trained.state.best_kge_model(),
                                          trained.state.best_projector_model(),
                                          test, graph_index, cell, eval_options));
      trained_states.emplace(cell_name, std::move(trained.state));
    }
    if (has_method("prompt-tuning")) {
      TrainConfig tc = config.train;
      tc.seed = cell_seed + 1;
      tc.threads = threads;
      const BaselineTrainResult baseline =
          train_prompt_baseline(lm, cell_examples, split, tc);
      write_text(out_dir + "/metrics/" + cell_name + "-prompt-tuning.csv",
                 metrics_to_csv(baseline.log));
      report.rows.push_back(
          evaluate_prompt_tuning(lm, baseline.baseline, test, cell, eval_options));
    }
    if (has_method("zero-shot")) {
      report.rows.push_back(
          evaluate_zero_shot(lm, test, graph_index, cell, eval_options));
    }
    if (has_method("few-shot")) {
      report.rows.push_back(evaluate_few_shot(lm, test, train_pool, graph_index,
                                              cell, eval_options));
    }
    cell_seed += 2;
  }

  const std::string report_csv_path = out_dir + "/report.csv";
  write_text(report_csv_path, report.to_csv());
  write_text(out_dir + "/report.txt", report.render_grid("method"));

  // embedding export from the best checkpoints of the trained encoders
  std::string embeddings_path;
  {
    std::vector<std::pair<KgeModel, Projector>> best;
    std::map<std::string, std::pair<const KgeModel*, const Projector*>> encoders;
    best.reserve(config.embedding_cells.size());
    for (const std::string& cell_name : config.embedding_cells) {
      const auto it = trained_states.find(cell_name);
      if (it != trained_states.end()) {
        best.emplace_back(it->second.best_kge_model(),
                          it->second.best_projector_model());
        encoders.emplace(cell_name, std::make_pair(&best.back().first,
                                                   &best.back().second));
      }
    }
    if (encoders.size() >= 2) {
      embeddings_path = out_dir + "/embeddings.csv";
      export_embeddings(encoders, graphs, embeddings_path);
    }
  }

  // manifest: versions, seeds, digests of inputs/outputs. Metrics logs are
  // excluded from the digest list (their seconds column is wall-clock).
  nlohmann::ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["format_version"] = kRunConfigFormatVersion;
  manifest["seed"] = seed;
  manifest["config"] = config.to_json();
  manifest["split"] = {{"train", split.train.size()},
                       {"validation", split.validation.size()},
                       {"test", split.test.size()}};
  nlohmann::ordered_json outputs;
  outputs["graphs.jsonl"] = sha256_file(graphs_path);
  outputs["qa.jsonl"] = sha256_file(qa_path);
  outputs["lm.ckpt"] = sha256_file(lm_path);
  for (const auto& [cell_name, state] : trained_states) {
    outputs["encoders/" + cell_name + ".ckpt"] =
        sha256_file(out_dir + "/encoders/" + cell_name + ".ckpt");
  }
  outputs["report.csv"] = sha256_file(report_csv_path);
  if (!embeddings_path.empty()) {
    outputs["embeddings.csv"] = sha256_file(embeddings_path);
  }
  manifest["outputs"] = std::move(outputs);

  std::ofstream out(out_dir + "/manifest.json", std::ios::trunc);
  if (!out) throw IoError("cannot write manifest");
  out << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace kgst
