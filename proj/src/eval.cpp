#include "kgst/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace kgst {

std::string method_name(EvalMethod method) {
  switch (method) {
    case EvalMethod::Ours: return "ours";
    case EvalMethod::ZeroShot: return "zero-shot";
    case EvalMethod::FewShot: return "few-shot";
    case EvalMethod::PromptTuning: return "prompt-tuning";
  }
  throw ContractError("unreachable method");
}

EvalMethod parse_method(const std::string& name) {
  if (name == "ours") return EvalMethod::Ours;
  if (name == "zero-shot") return EvalMethod::ZeroShot;
  if (name == "few-shot") return EvalMethod::FewShot;
  if (name == "prompt-tuning") return EvalMethod::PromptTuning;
  throw ConfigError("unknown method: " + name);
}

std::vector<QAExample> filter_cell(std::span<const QAExample> examples,
                                   const TaskCell& cell) {
  std::vector<QAExample> out;
  for (const QAExample& ex : examples) {
    if (ex.descriptor.cell == cell) out.push_back(ex);
  }
  return out;
}

std::vector<QAExample> filter_split_membership(
    std::span<const QAExample> examples, const DatasetSplit& split,
    const std::string& part) {
  std::vector<QAExample> out;
  for (const QAExample& ex : examples) {
    const bool keep = part == "train"        ? split.in_train(ex.graph_id)
                      : part == "validation" ? split.in_validation(ex.graph_id)
                      : part == "test"       ? split.in_test(ex.graph_id)
                                             : throw ConfigError(
                                                   "unknown split part: " + part);
    if (keep) out.push_back(ex);
  }
  return out;
}

ScoredPredictions score_predictions(std::span<const QAExample> examples,
                                    std::span<const std::string> predictions,
                                    std::span<const char> skipped) {
  if (examples.size() != predictions.size() || examples.size() != skipped.size()) {
    throw ContractError("score_predictions: size mismatch");
  }
  ScoredPredictions out;
  int hits = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    if (skipped[i]) {
      ++out.skipped;
      continue;
    }
    ++out.evaluated;
    if (normalize_answer(predictions[i]) == normalize_answer(examples[i].answer)) {
      ++hits;
    }
  }
  out.accuracy = out.evaluated > 0
                     ? static_cast<double>(hits) / static_cast<double>(out.evaluated)
                     : 0.0;
  return out;
}

namespace {

EvalRow make_row(const EvalOptions& options, const std::string& method,
                 const std::string& scorer, const TaskCell& cell,
                 const ScoredPredictions& scored) {
  EvalRow row;
  row.dataset = options.dataset;
  row.method = method;
  row.scorer = scorer;
  row.cell = cell_id(cell);
  row.accuracy = scored.accuracy;
  row.evaluated = scored.evaluated;
  row.skipped = scored.skipped;
  return row;
}

const KnowledgeGraph& graph_for(const GraphIndex& graphs, const std::string& id) {
  const auto it = graphs.find(id);
  if (it == graphs.end()) throw LookupError("unknown graph in eval: " + id);
  return *it->second;
}

}  // namespace

EvalRow evaluate_ours(const FrozenLm& lm, const KgeModel& kge,
                      const Projector& projector,
                      std::span<const QAExample> test_examples,
                      const GraphIndex& graphs, const TaskCell& cell,
                      const EvalOptions& options) {
  const Tokenizer& tok = lm.tokenizer();
  std::vector<std::string> predictions(test_examples.size());
  std::vector<char> skipped(test_examples.size(), 0);
  parallel_for(test_examples.size(), options.threads, [&](size_t i) {
    const QAExample& ex = test_examples[i];
    const KnowledgeGraph& graph = graph_for(graphs, ex.graph_id);
    try {
      const SoftToken g = encode_graph(kge, projector, graph);
      const EmbeddedSeq prefix =
          build_decode_prefix(tok.encode(ex.question), g.g, options.placement);
      predictions[i] = lm.greedy_decode(prefix, options.max_answer_tokens);
    } catch (const ContextWindowError&) {
      skipped[i] = 1;
    }
  });
  return make_row(options, "ours", scorer_name(kge.config.scorer), cell,
                  score_predictions(test_examples, predictions, skipped));
}

EvalRow evaluate_zero_shot(const FrozenLm& lm,
                           std::span<const QAExample> test_examples,
                           const GraphIndex& graphs, const TaskCell& cell,
                           const EvalOptions& options) {
  const Tokenizer& tok = lm.tokenizer();
  std::vector<std::string> predictions(test_examples.size());
  std::vector<char> skipped(test_examples.size(), 0);
  parallel_for(test_examples.size(), options.threads, [&](size_t i) {
    const QAExample& ex = test_examples[i];
    const KnowledgeGraph& graph = graph_for(graphs, ex.graph_id);
    const std::vector<std::vector<int>> segments = {
        tok.encode(graph_to_text(graph)), tok.encode(ex.question)};
    try {
      const EmbeddedSeq prefix = build_text_prefix(segments);
      predictions[i] = lm.greedy_decode(prefix, options.max_answer_tokens);
      if (static_cast<int>(prefix.size()) >= lm.config().context) skipped[i] = 1;
    } catch (const ContextWindowError&) {
      skipped[i] = 1;
    }
  });
  return make_row(options, "zero-shot", "", cell,
                  score_predictions(test_examples, predictions, skipped));
}

EvalRow evaluate_few_shot(const FrozenLm& lm,
                          std::span<const QAExample> test_examples,
                          std::span<const QAExample> train_pool,
                          const GraphIndex& graphs, const TaskCell& cell,
                          const EvalOptions& options) {
  if (train_pool.empty()) {
    throw ConfigError("few-shot evaluation needs a non-empty exemplar pool");
  }
  // Exemplars fixed per run by seed, drawn from the same task cell.
  Rng rng(options.seed);
  std::vector<size_t> order = shuffled_indices(train_pool.size(), rng);
  const int k = std::min<int>(options.few_shot_k, static_cast<int>(order.size()));
  std::vector<const QAExample*> exemplars;
  for (int i = 0; i < k; ++i) exemplars.push_back(&train_pool[order[static_cast<size_t>(i)]]);

  const Tokenizer& tok = lm.tokenizer();
  std::vector<std::string> predictions(test_examples.size());
  std::vector<char> skipped(test_examples.size(), 0);
  parallel_for(test_examples.size(), options.threads, [&](size_t i) {
    const QAExample& ex = test_examples[i];
    EmbeddedSeq prefix;
    prefix.append_token(Tokenizer::kBos);
    auto append_block = [&](const QAExample& block, bool with_answer) {
      const KnowledgeGraph& g = graph_for(graphs, block.graph_id);
      for (int id : tok.encode(graph_to_text(g))) prefix.append_token(id);
      prefix.append_token(Tokenizer::kSep);
      for (int id : tok.encode(block.question)) prefix.append_token(id);
      prefix.append_token(Tokenizer::kSep);
      if (with_answer) {
        for (int id : tok.encode(block.answer)) prefix.append_token(id);
        prefix.append_token(Tokenizer::kEos);
      }
    };
    for (const QAExample* exemplar : exemplars) append_block(*exemplar, true);
    append_block(ex, false);
    try {
      predictions[i] = lm.greedy_decode(prefix, options.max_answer_tokens);
      if (static_cast<int>(prefix.size()) >= lm.config().context) skipped[i] = 1;
    } catch (const ContextWindowError&) {
      skipped[i] = 1;
    }
  });
  return make_row(options, "few-shot", "", cell,
                  score_predictions(test_examples, predictions, skipped));
}

SoftPromptBaseline SoftPromptBaseline::init(int k, int llm_dim,
                                            std::uint64_t seed) {
  if (k < 1) throw ConfigError("prompt baseline: k must be >= 1");
  SoftPromptBaseline baseline;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  baseline.vectors.resize(k, llm_dim);
  for (Index i = 0; i < baseline.vectors.size(); ++i) {
    baseline.vectors.data()[i] = normal(rng);
  }
  return baseline;
}

namespace {

// <bos> v1..vk <sep> Q <sep>
EmbeddedSeq baseline_prefix(const SoftPromptBaseline& baseline,
                            std::span<const int> question_ids) {
  EmbeddedSeq seq;
  seq.append_token(Tokenizer::kBos);
  for (Index i = 0; i < baseline.vectors.rows(); ++i) {
    seq.append_vector(baseline.vectors.row(i).transpose());
  }
  seq.append_token(Tokenizer::kSep);
  for (int id : question_ids) seq.append_token(id);
  seq.append_token(Tokenizer::kSep);
  return seq;
}

}  // namespace

BaselineTrainResult train_prompt_baseline(const FrozenLm& lm,
                                          std::span<const QAExample> examples,
                                          const DatasetSplit& split,
                                          const TrainConfig& config, int k) {
  config.validate();
  if (!lm.frozen()) {
    throw ContractError("train_prompt_baseline: the language model must be frozen");
  }
  const Tokenizer& tok = lm.tokenizer();

  struct Prepared {
    std::vector<int> question_ids;
    std::vector<int> target_ids;
    std::string gold;
  };
  std::vector<Prepared> train_set, val_set;
  for (const QAExample& ex : examples) {
    Prepared p;
    p.question_ids = tok.encode(ex.question);
    p.target_ids = tok.encode(ex.answer);
    p.target_ids.push_back(Tokenizer::kEos);
    p.gold = normalize_answer(ex.answer);
    if (split.in_train(ex.graph_id)) {
      train_set.push_back(std::move(p));
    } else if (split.in_validation(ex.graph_id)) {
      val_set.push_back(std::move(p));
    }
  }
  if (train_set.empty() || val_set.empty()) {
    throw ConfigError("prompt baseline: empty train or validation subset");
  }

  BaselineTrainResult result;
  result.baseline = SoftPromptBaseline::init(k, lm.config().d_model, config.seed);
  Matrix momentum = Matrix::Zero(k, lm.config().d_model);
  Matrix best = result.baseline.vectors;
  double best_acc = -1.0;
  int rounds_since_best = 0;
  Rng rng(config.seed);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<size_t> order = shuffled_indices(train_set.size(), rng);
    double epoch_loss = 0;
    size_t epoch_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(config.batch_size)) {
      const size_t end =
          std::min(order.size(), start + static_cast<size_t>(config.batch_size));
      const size_t batch = end - start;
      std::vector<Matrix> grads(batch);
      std::vector<double> losses(batch, 0.0);
      std::vector<char> skipped(batch, 0);
      parallel_for(batch, config.threads, [&](size_t bi) {
        const Prepared& p = train_set[order[start + bi]];
        EmbeddedSeq seq = baseline_prefix(result.baseline, p.question_ids);
        for (int id : p.target_ids) seq.append_token(id);
        try {
          double loss = 0;
          const std::vector<Vector> dv =
              lm.injection_gradients(seq, p.target_ids, &loss);
          if (!std::isfinite(loss)) {
            throw ContractError("prompt baseline: non-finite loss");
          }
          losses[bi] = loss;
          grads[bi].resize(result.baseline.vectors.rows(),
                           result.baseline.vectors.cols());
          for (size_t v = 0; v < dv.size(); ++v) {
            grads[bi].row(static_cast<Index>(v)) = dv[v].transpose();
          }
        } catch (const ContextWindowError&) {
          skipped[bi] = 1;
        }
      });
      Matrix total = Matrix::Zero(k, lm.config().d_model);
      size_t evaluated = 0;
      for (size_t bi = 0; bi < batch; ++bi) {
        if (skipped[bi]) continue;
        total += grads[bi];
        epoch_loss += losses[bi];
        ++evaluated;
      }
      if (evaluated == 0) continue;
      epoch_count += evaluated;
      total /= static_cast<double>(evaluated);
      lion_step(result.baseline.vectors, total, momentum, config.lion);
    }

    std::vector<char> correct(val_set.size(), 0);
    parallel_for(val_set.size(), config.threads, [&](size_t i) {
      const Prepared& p = val_set[i];
      const EmbeddedSeq prefix = baseline_prefix(result.baseline, p.question_ids);
      try {
        const std::string decoded =
            lm.greedy_decode(prefix, config.max_answer_tokens);
        correct[i] = normalize_answer(decoded) == p.gold ? 1 : 0;
      } catch (const ContextWindowError&) {
      }
    });
    double hits = 0;
    for (char c : correct) hits += c;
    const double val_acc = hits / static_cast<double>(val_set.size());

    TrainMetricsRow row;
    row.epoch = epoch;
    row.train_loss =
        epoch_count > 0 ? epoch_loss / static_cast<double>(epoch_count) : 0.0;
    row.val_accuracy = val_acc;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    if (config.verbose) {
      std::fprintf(stderr, "[prompt-tuning] epoch %d loss %.4f val %.3f\n",
                   row.epoch, row.train_loss, row.val_accuracy);
    }
    if (val_acc > best_acc) {
      best_acc = val_acc;
      best = result.baseline.vectors;
      rounds_since_best = 0;
    } else if (++rounds_since_best >= config.patience) {
      break;
    }
  }
  result.baseline.vectors = best;
  return result;
}

std::string prompt_tuning_predict(const FrozenLm& lm,
                                  const SoftPromptBaseline& baseline,
                                  const std::string& question,
                                  int max_answer_tokens) {
  const EmbeddedSeq prefix =
      baseline_prefix(baseline, lm.tokenizer().encode(question));
  return lm.greedy_decode(prefix, max_answer_tokens);
}

EvalRow evaluate_prompt_tuning(const FrozenLm& lm,
                               const SoftPromptBaseline& baseline,
                               std::span<const QAExample> test_examples,
                               const TaskCell& cell, const EvalOptions& options) {
  std::vector<std::string> predictions(test_examples.size());
  std::vector<char> skipped(test_examples.size(), 0);
  parallel_for(test_examples.size(), options.threads, [&](size_t i) {
    try {
      predictions[i] = prompt_tuning_predict(lm, baseline, test_examples[i].question,
                                             options.max_answer_tokens);
    } catch (const ContextWindowError&) {
      skipped[i] = 1;
    }
  });
  return make_row(options, "prompt-tuning", "", cell,
                  score_predictions(test_examples, predictions, skipped));
}

EvalReport sensitivity_sweep(const FrozenLm& lm,
                             std::span<const QAExample> examples,
                             const GraphIndex& graphs, const DatasetSplit& split,
                             std::span<const Scorer> scorers,
                             std::span<const TaskCell> cells,
                             const KgeConfig& base_kge,
                             const TrainConfig& train_config,
                             const EvalOptions& options) {
  EvalReport report;
  report.metadata["dataset"] = options.dataset;
  report.metadata["seed"] = train_config.seed;
  for (const Scorer scorer : scorers) {
    KgeConfig kge = base_kge;
    kge.scorer = scorer;
    kge.normalize_entities.reset();  // per-scorer default
    for (const TaskCell& cell : cells) {
      const std::vector<QAExample> cell_examples = filter_cell(examples, cell);
      const std::vector<QAExample> test =
          filter_split_membership(cell_examples, split, "test");
      EvalRow row;
      try {
        TrainResult trained =
            train(lm, cell_examples, graphs, split, kge, train_config);
        row = evaluate_ours(lm, trained.state.best_kge_model(),
                            trained.state.best_projector_model(), test, graphs,
                            cell, options);
      } catch (const std::exception& e) {
        row.dataset = options.dataset;
        row.method = "ours";
        row.scorer = scorer_name(scorer);
        row.cell = cell_id(cell);
        row.failed = true;
        if (train_config.verbose) {
          std::fprintf(stderr, "[sweep] %s/%s failed: %s\n",
                       scorer_name(scorer).c_str(), cell_id(cell).c_str(), e.what());
        }
      }
      report.rows.push_back(row);
    }
  }
  return report;
}

void export_embeddings(
    const std::map<std::string, std::pair<const KgeModel*, const Projector*>>&
        task_encoders,
    std::span<const KnowledgeGraph> graphs, const std::string& path) {
  if (task_encoders.size() < 2) {
    throw ConfigError("export_embeddings: need at least 2 task-trained encoders");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open embeddings file for writing: " + path);
  const Index d_llm = task_encoders.begin()->second.second->W.rows();
  out << "graph_id,task,scorer";
  for (Index j = 0; j < d_llm; ++j) out << ",g" << (j + 1);
  out << '\n';
  char buf[32];
  for (const KnowledgeGraph& graph : graphs) {
    for (const auto& [task, encoder] : task_encoders) {
      const auto& [kge, projector] = encoder;
      const SoftToken g = encode_graph(*kge, *projector, graph);
      out << graph.graph_id << ',' << task << ',' << scorer_name(kge->config.scorer);
      for (Index j = 0; j < g.g.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", g.g[j]);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw IoError("embeddings write failed: " + path);
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "dataset,method,scorer,cell,accuracy,evaluated,skipped,failed\n";
  char buf[64];
  for (const EvalRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%.17g", row.accuracy);
    out << row.dataset << ',' << row.method << ',' << row.scorer << ','
        << row.cell << ',' << buf << ',' << row.evaluated << ',' << row.skipped
        << ',' << (row.failed ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string EvalReport::render_grid(const std::string& row_field) const {
  const std::vector<TaskCell> cells = all_task_cells();
  // column order: grouped by hop as in the reported tables
  std::vector<std::string> columns;
  for (int hops : {0, 1, 2}) {
    for (const TaskCell& cell : cells) {
      if (cell.hops == hops) columns.push_back(cell_id(cell));
    }
  }
  std::vector<std::string> row_keys;
  for (const EvalRow& row : rows) {
    const std::string key = row_field == "scorer" ? row.scorer : row.method;
    if (std::find(row_keys.begin(), row_keys.end(), key) == row_keys.end()) {
      row_keys.push_back(key);
    }
  }
  std::ostringstream out;
  out << std::left;
  const int key_width = 14, col_width = 8;
  out << std::setw(key_width) << (row_field == "scorer" ? "scorer" : "method");
  for (const auto& c : columns) out << std::setw(col_width) << c;
  out << '\n';
  for (const auto& key : row_keys) {
    out << std::setw(key_width) << key;
    for (const auto& c : columns) {
      std::string value = "-";
      for (const EvalRow& row : rows) {
        const std::string row_key = row_field == "scorer" ? row.scorer : row.method;
        if (row_key == key && row.cell == c) {
          if (row.failed) {
            value = "fail";
          } else {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.2f", row.accuracy);
            value = buf;
          }
          break;
        }
      }
      out << std::setw(col_width) << value;
    }
    out << '\n';
  }
  return out.str();
}

namespace {

std::string cot_reasoning_line(const QAExample& ex) {
  std::ostringstream out;
  out << "Reasoning: the nodes satisfying the condition are "
      << (ex.node_answer_set.empty()
              ? std::string("none")
              : canonical_answer(TaskKind::Identification, ex.node_answer_set))
      << ", so the answer is " << ex.answer << '.';
  return out.str();
}

}  // namespace

std::string cot_prompt(std::span<const QAExample> exemplars,
                       const GraphIndex& graphs,
                       const KnowledgeGraph& target_graph,
                       const std::string& target_question) {
  std::ostringstream out;
  for (const QAExample& ex : exemplars) {
    out << graph_to_text(graph_for(graphs, ex.graph_id)) << ' ' << ex.question
        << ' ' << cot_reasoning_line(ex) << ' ' << "Answer: " << ex.answer
        << '\n';
  }
  out << graph_to_text(target_graph) << ' ' << target_question;
  return out.str();
}

std::string zero_cot_prompt(const KnowledgeGraph& target_graph,
                            const std::string& target_question) {
  return graph_to_text(target_graph) + " " + target_question +
         " Let's think step by step.";
}

std::string cot_bag_prompt(std::span<const QAExample> exemplars,
                           const GraphIndex& graphs,
                           const KnowledgeGraph& target_graph,
                           const std::string& target_question) {
  return cot_prompt(exemplars, graphs, target_graph, target_question) +
         " Let's construct a graph with the nodes and edges first.";
}

}  // namespace kgst
