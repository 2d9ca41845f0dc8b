#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgst/kge.hpp"
#include "kgst/lm.hpp"
#include "kgst/task.hpp"

namespace kgst {

// Where the soft token sits relative to the question.
enum class InjectionPlacement { AfterQuestion, BeforeQuestion };

std::string placement_name(InjectionPlacement placement);
InjectionPlacement parse_placement(const std::string& name);

struct TrainConfig {
  LionConfig lion;  // paper-style defaults: lr 1e-3, betas (0.9, 0.99)
  int batch_size = 32;
  int max_epochs = 80;
  int patience = 10;  // validation rounds without improvement
  std::uint64_t seed = 0;
  InjectionPlacement placement = InjectionPlacement::AfterQuestion;
  int max_answer_tokens = 48;
  int threads = 0;
  bool verbose = false;

  void validate() const;
};

// Teacher-forcing layouts. AfterQuestion:
//   <bos> Q <sep> [g] <sep> A... <eos>
// BeforeQuestion:
//   <bos> [g] <sep> Q <sep> A... <eos>
// The answer targets include the closing <eos>.
EmbeddedSeq build_training_sequence(std::span<const int> question_ids,
                                    const Vector& soft_token,
                                    std::span<const int> target_ids,
                                    InjectionPlacement placement);
// The decode-time prefix: everything up to and including the <sep> that
// precedes the answer.
EmbeddedSeq build_decode_prefix(std::span<const int> question_ids,
                                const Vector& soft_token,
                                InjectionPlacement placement);
// Text-only variants used by the prompting baselines: `segments` are joined
// with <sep>, then a final <sep> opens the answer slot.
EmbeddedSeq build_text_prefix(std::span<const std::vector<int>> segments);

// Summed teacher-forced NLL of the answer tokens given
// <bos> question <sep> soft-token <sep>. Throws ContextWindowError when the
// combined sequence exceeds the context.
double nll_loss(const FrozenLm& lm, std::span<const int> question_ids,
                const SoftToken& soft_token, std::span<const int> answer_ids,
                InjectionPlacement placement = InjectionPlacement::AfterQuestion);

struct TrainMetricsRow {
  int epoch = 0;
  double train_loss = 0;
  double val_accuracy = 0;
  double seconds = 0;
};

std::string metrics_to_csv(std::span<const TrainMetricsRow> rows);

struct TrainState {
  KgeModel kge;  // current (last-epoch) parameters; resumable
  Projector projector;
  Matrix m_entity, m_relation, m_proj_w;
  Vector m_proj_b;
  int epoch = 0;
  double best_val_accuracy = -1.0;  // -1 until the first validation round
  int rounds_since_best = 0;
  Matrix best_entity, best_relation, best_proj_w;
  Vector best_proj_b;
  std::string rng_state;

  // The best-validation checkpoint (what evaluation should use).
  KgeModel best_kge_model() const;
  Projector best_projector_model() const;
};

struct TrainResult {
  TrainState state;
  std::vector<TrainMetricsRow> log;
  int skipped_overlength = 0;
};

using GraphIndex = std::map<std::string, const KnowledgeGraph*>;
GraphIndex index_graphs(std::span<const KnowledgeGraph> graphs);

// End-to-end soft-token training: encodes each example's graph, computes the
// answer NLL under the frozen LM, routes gradients to the KGE tables and
// projector only, applies Lion per batch, and early-stops on validation
// exact-match accuracy. Returns the best-validation parameters. `resume`
// continues from a saved state (same config expected).
TrainResult train(const FrozenLm& lm, std::span<const QAExample> examples,
                  const GraphIndex& graphs, const DatasetSplit& split,
                  const KgeConfig& kge_config, const TrainConfig& config,
                  const TrainState* resume = nullptr);

void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

// Exact-match normalization: lowercase, trim, collapse internal whitespace.
std::string normalize_answer(std::string_view text);

}  // namespace kgst
