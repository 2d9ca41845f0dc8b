#include "kgst/trainer.hpp"

#include <json.hpp>

#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "kgst/checkpoint.hpp"

namespace kgst {

std::string placement_name(InjectionPlacement placement) {
  return placement == InjectionPlacement::AfterQuestion ? "after-question"
                                                        : "before-question";
}

InjectionPlacement parse_placement(const std::string& name) {
  if (name == "after-question") return InjectionPlacement::AfterQuestion;
  if (name == "before-question") return InjectionPlacement::BeforeQuestion;
  throw ConfigError("unknown injection placement: " + name);
}

void TrainConfig::validate() const {
  lion.validate();
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (max_answer_tokens < 1) throw ConfigError("train: max_answer_tokens must be >= 1");
}

EmbeddedSeq build_decode_prefix(std::span<const int> question_ids,
                                const Vector& soft_token,
                                InjectionPlacement placement) {
  EmbeddedSeq seq;
  seq.append_token(Tokenizer::kBos);
  if (placement == InjectionPlacement::AfterQuestion) {
    for (int id : question_ids) seq.append_token(id);
    seq.append_token(Tokenizer::kSep);
    seq.append_vector(soft_token);
    seq.append_token(Tokenizer::kSep);
  } else {
    seq.append_vector(soft_token);
    seq.append_token(Tokenizer::kSep);
    for (int id : question_ids) seq.append_token(id);
    seq.append_token(Tokenizer::kSep);
  }
  return seq;
}

EmbeddedSeq build_training_sequence(std::span<const int> question_ids,
                                    const Vector& soft_token,
                                    std::span<const int> target_ids,
                                    InjectionPlacement placement) {
  EmbeddedSeq seq = build_decode_prefix(question_ids, soft_token, placement);
  for (int id : target_ids) seq.append_token(id);
  return seq;
}

EmbeddedSeq build_text_prefix(std::span<const std::vector<int>> segments) {
  EmbeddedSeq seq;
  seq.append_token(Tokenizer::kBos);
  for (const auto& segment : segments) {
    for (int id : segment) seq.append_token(id);
    seq.append_token(Tokenizer::kSep);
  }
  return seq;
}

double nll_loss(const FrozenLm& lm, std::span<const int> question_ids,
                const SoftToken& soft_token, std::span<const int> answer_ids,
                InjectionPlacement placement) {
  const EmbeddedSeq seq =
      build_training_sequence(question_ids, soft_token.g, answer_ids, placement);
  return lm.sequence_nll(seq, answer_ids);
}

std::string metrics_to_csv(std::span<const TrainMetricsRow> rows) {
  std::ostringstream out;
  out << "epoch,train_loss,val_accuracy,seconds\n";
  char buf[128];
  for (const TrainMetricsRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.3f\n", row.epoch,
                  row.train_loss, row.val_accuracy, row.seconds);
    out << buf;
  }
  return out.str();
}

KgeModel TrainState::best_kge_model() const {
  KgeModel best = kge;
  best.entity_table = best_entity;
  best.relation_table = best_relation;
  return best;
}

Projector TrainState::best_projector_model() const {
  Projector best;
  best.W = best_proj_w;
  best.b = best_proj_b;
  return best;
}

GraphIndex index_graphs(std::span<const KnowledgeGraph> graphs) {
  GraphIndex index;
  for (const KnowledgeGraph& g : graphs) index[g.graph_id] = &g;
  return index;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) pending_space = true;
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

namespace {

struct PreparedExample {
  const QAExample* example = nullptr;
  const KnowledgeGraph* graph = nullptr;
  std::vector<int> question_ids;
  std::vector<int> target_ids;  // answer tokens + <eos>
  std::string gold_normalized;
};

std::vector<PreparedExample> prepare(const FrozenLm& lm,
                                     std::span<const QAExample> examples,
                                     const GraphIndex& graphs,
                                     const std::function<bool(const std::string&)>& keep) {
  std::vector<PreparedExample> out;
  const Tokenizer& tok = lm.tokenizer();
  for (const QAExample& ex : examples) {
    if (!keep(ex.graph_id)) continue;
    PreparedExample p;
    p.example = &ex;
    const auto it = graphs.find(ex.graph_id);
    if (it == graphs.end()) {
      throw LookupError("qa example references unknown graph " + ex.graph_id);
    }
    p.graph = it->second;
    p.question_ids = tok.encode(ex.question);
    p.target_ids = tok.encode(ex.answer);
    if (tok.any_unknown(p.question_ids) || tok.any_unknown(p.target_ids)) {
      throw ConfigError("example does not tokenize without <unk>: " + ex.question +
                        " / " + ex.answer);
    }
    p.target_ids.push_back(Tokenizer::kEos);
    p.gold_normalized = normalize_answer(ex.answer);
    out.push_back(std::move(p));
  }
  return out;
}

double validation_accuracy(const FrozenLm& lm,
                           std::span<const PreparedExample> val,
                           const KgeModel& kge, const Projector& projector,
                           const TrainConfig& config) {
  if (val.empty()) return 0.0;
  std::vector<char> correct(val.size(), 0);
  parallel_for(val.size(), config.threads, [&](size_t i) {
    const PreparedExample& p = val[i];
    const SoftToken g = encode_graph(kge, projector, *p.graph);
    const EmbeddedSeq prefix =
        build_decode_prefix(p.question_ids, g.g, config.placement);
    try {
      const std::string decoded =
          lm.greedy_decode(prefix, config.max_answer_tokens);
      correct[i] = normalize_answer(decoded) == p.gold_normalized ? 1 : 0;
    } catch (const ContextWindowError&) {
      correct[i] = 0;
    }
  });
  double hits = 0;
  for (char c : correct) hits += c;
  return hits / static_cast<double>(val.size());
}

}  // namespace

TrainResult train(const FrozenLm& lm, std::span<const QAExample> examples,
                  const GraphIndex& graphs, const DatasetSplit& split,
                  const KgeConfig& kge_config, const TrainConfig& config,
                  const TrainState* resume) {
  config.validate();
  kge_config.validate();
  if (!lm.frozen()) {
    throw ContractError("train: the language model must be frozen");
  }

  const auto train_examples = prepare(lm, examples, graphs, [&](const std::string& id) {
    return split.in_train(id);
  });
  const auto val_examples = prepare(lm, examples, graphs, [&](const std::string& id) {
    return split.in_validation(id);
  });
  if (train_examples.empty()) throw ConfigError("train: no training examples");
  if (val_examples.empty()) throw ConfigError("train: no validation examples");

  TrainResult result;
  TrainState& state = result.state;
  Rng rng;
  if (resume) {
    state = *resume;
    std::istringstream in(state.rng_state);
    in >> rng;
    if (!in) throw ConfigError("train: corrupt rng state in resume checkpoint");
  } else {
    std::vector<KnowledgeGraph> graph_values;  // vocabulary over the corpus
    for (const auto& [id, g] : graphs) graph_values.push_back(*g);
    state.kge = KgeModel::init(kge_config, KgeVocab::from_graphs(graph_values),
                               config.seed);
    state.projector = Projector::init(lm.config().d_model,
                                      kge_config.aggregate_dim(), config.seed + 1);
    state.m_entity = Matrix::Zero(state.kge.entity_table.rows(),
                                  state.kge.entity_table.cols());
    state.m_relation = Matrix::Zero(state.kge.relation_table.rows(),
                                    state.kge.relation_table.cols());
    state.m_proj_w = Matrix::Zero(state.projector.W.rows(), state.projector.W.cols());
    state.m_proj_b = Vector::Zero(state.projector.b.size());
    state.best_entity = state.kge.entity_table;
    state.best_relation = state.kge.relation_table;
    state.best_proj_w = state.projector.W;
    state.best_proj_b = state.projector.b;
    rng.seed(config.seed);
  }

  const size_t n_train = train_examples.size();
  std::atomic<int> skipped_total{0};
  for (int epoch = state.epoch + 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<size_t> order = shuffled_indices(n_train, rng);
    double epoch_loss = 0;
    size_t epoch_evaluated = 0;

    for (size_t start = 0; start < n_train; start += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(n_train, start + static_cast<size_t>(config.batch_size));
      const size_t batch = end - start;
      std::vector<KgeGradients> grads(batch);
      std::vector<double> losses(batch, 0.0);
      std::vector<char> skipped(batch, 0);
      parallel_for(batch, config.threads, [&](size_t bi) {
        const PreparedExample& p = train_examples[order[start + bi]];
        grads[bi] = KgeGradients::zeros(state.kge, state.projector);
        try {
          const SoftToken g = encode_graph(state.kge, state.projector, *p.graph);
          const EmbeddedSeq seq = build_training_sequence(
              p.question_ids, g.g, p.target_ids, config.placement);
          double loss = 0;
          const std::vector<Vector> dg =
              lm.injection_gradients(seq, p.target_ids, &loss);
          if (!std::isfinite(loss)) {
            throw ContractError("train: non-finite loss on graph " +
                                p.example->graph_id + " question \"" +
                                p.example->question + "\"");
          }
          losses[bi] = loss;
          encode_graph_backward(state.kge, state.projector, *p.graph, dg.at(0),
                                grads[bi]);
        } catch (const ContextWindowError&) {
          skipped[bi] = 1;
        }
      });

      KgeGradients total = KgeGradients::zeros(state.kge, state.projector);
      size_t evaluated = 0;
      for (size_t bi = 0; bi < batch; ++bi) {
        if (skipped[bi]) {
          skipped_total.fetch_add(1);
          continue;
        }
        total.add(grads[bi]);
        epoch_loss += losses[bi];
        ++evaluated;
      }
      if (evaluated == 0) continue;
      epoch_evaluated += evaluated;
      total.scale(1.0 / static_cast<double>(evaluated));
      lion_step(state.kge.entity_table, total.entity_table, state.m_entity, config.lion);
      lion_step(state.kge.relation_table, total.relation_table, state.m_relation,
                config.lion);
      lion_step(state.projector.W, total.proj_w, state.m_proj_w, config.lion);
      lion_step(state.projector.b, total.proj_b, state.m_proj_b, config.lion);
      enforce_constraints(state.kge);
    }

    const double val_acc =
        validation_accuracy(lm, val_examples, state.kge, state.projector, config);
    TrainMetricsRow row;
    row.epoch = epoch;
    row.train_loss = epoch_evaluated > 0
                         ? epoch_loss / static_cast<double>(epoch_evaluated)
                         : 0.0;
    row.val_accuracy = val_acc;
    row.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(row);
    state.epoch = epoch;
    if (config.verbose) {
      std::fprintf(stderr, "[train] epoch %d loss %.4f val %.3f (%.1fs)\n",
                   row.epoch, row.train_loss, row.val_accuracy, row.seconds);
    }

    if (val_acc > state.best_val_accuracy) {
      state.best_val_accuracy = val_acc;
      state.rounds_since_best = 0;
      state.best_entity = state.kge.entity_table;
      state.best_relation = state.kge.relation_table;
      state.best_proj_w = state.projector.W;
      state.best_proj_b = state.projector.b;
    } else {
      ++state.rounds_since_best;
    }
    if (state.rounds_since_best >= config.patience) break;
  }

  {
    std::ostringstream out;
    out << rng;
    state.rng_state = out.str();
  }
  result.skipped_overlength = skipped_total.load();
  return result;
}

void save_train_state(const std::string& path, const TrainState& state) {
  nlohmann::ordered_json header;
  header["kind"] = "train_state";
  header["scorer"] = scorer_name(state.kge.config.scorer);
  header["d"] = state.kge.config.dim;
  header["d_llm"] = state.projector.W.rows();
  header["norm_p"] = state.kge.config.norm_p;
  header["normalize_entities"] = state.kge.config.normalize_entities_effective();
  header["margin"] = state.kge.config.margin;
  header["negatives_per_positive"] = state.kge.config.negatives_per_positive;
  header["aggregate"] = aggregate_name(state.kge.config.aggregate);
  header["id_encoding_scale"] = state.kge.config.id_encoding_scale;
  header["labels"] = state.kge.vocab.labels;
  header["relations"] = state.kge.vocab.relations;
  header["vocab_digest"] = state.kge.vocab.digest();
  header["epoch"] = state.epoch;
  header["best_val_accuracy"] = state.best_val_accuracy;
  header["rounds_since_best"] = state.rounds_since_best;
  header["rng_state"] = state.rng_state;
  write_checkpoint(path, std::move(header),
                   {{"entity_table", state.kge.entity_table},
                    {"relation_table", state.kge.relation_table},
                    {"proj_w", state.projector.W},
                    {"proj_b", state.projector.b},
                    {"m_entity", state.m_entity},
                    {"m_relation", state.m_relation},
                    {"m_proj_w", state.m_proj_w},
                    {"m_proj_b", state.m_proj_b},
                    {"best_entity", state.best_entity},
                    {"best_relation", state.best_relation},
                    {"best_proj_w", state.best_proj_w},
                    {"best_proj_b", state.best_proj_b}});
}

TrainState load_train_state(const std::string& path) {
  const Checkpoint cp = read_checkpoint(path, "train_state");
  TrainState state;
  state.kge.config.scorer = parse_scorer(cp.header.at("scorer").get<std::string>());
  state.kge.config.dim = cp.header.at("d").get<int>();
  state.kge.config.norm_p = cp.header.at("norm_p").get<int>();
  state.kge.config.normalize_entities =
      cp.header.at("normalize_entities").get<bool>();
  state.kge.config.margin = cp.header.at("margin").get<double>();
  state.kge.config.negatives_per_positive =
      cp.header.at("negatives_per_positive").get<int>();
  state.kge.config.aggregate =
      parse_aggregate(cp.header.at("aggregate").get<std::string>());
  state.kge.config.id_encoding_scale =
      cp.header.at("id_encoding_scale").get<double>();
  state.kge.config.validate();
  state.kge.vocab = KgeVocab::from_lists(
      cp.header.at("labels").get<std::vector<std::string>>(),
      cp.header.at("relations").get<std::vector<std::string>>());
  if (state.kge.vocab.digest() != cp.header.at("vocab_digest").get<std::string>()) {
    throw ConfigError("train_state vocab digest mismatch in " + path);
  }
  state.epoch = cp.header.at("epoch").get<int>();
  state.best_val_accuracy = cp.header.at("best_val_accuracy").get<double>();
  state.rounds_since_best = cp.header.at("rounds_since_best").get<int>();
  state.rng_state = cp.header.at("rng_state").get<std::string>();
  state.kge.entity_table = cp.tensor("entity_table");
  state.kge.relation_table = cp.tensor("relation_table");
  state.projector.W = cp.tensor("proj_w");
  state.projector.b = cp.tensor("proj_b").col(0);
  state.m_entity = cp.tensor("m_entity");
  state.m_relation = cp.tensor("m_relation");
  state.m_proj_w = cp.tensor("m_proj_w");
  state.m_proj_b = cp.tensor("m_proj_b").col(0);
  state.best_entity = cp.tensor("best_entity");
  state.best_relation = cp.tensor("best_relation");
  state.best_proj_w = cp.tensor("best_proj_w");
  state.best_proj_b = cp.tensor("best_proj_b").col(0);
  return state;
}

}  // namespace kgst
