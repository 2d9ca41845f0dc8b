#pragma once

#include <json.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kgst/trainer.hpp"

namespace kgst {

enum class EvalMethod { Ours, ZeroShot, FewShot, PromptTuning };

std::string method_name(EvalMethod method);
EvalMethod parse_method(const std::string& name);

struct EvalOptions {
  std::string dataset = "synthetic";
  int few_shot_k = 2;
  std::uint64_t seed = 0;
  int max_answer_tokens = 48;
  int threads = 0;
  InjectionPlacement placement = InjectionPlacement::AfterQuestion;
};

struct EvalRow {
  std::string dataset;
  std::string method;
  std::string scorer;  // empty for text baselines
  std::string cell;
  double accuracy = 0.0;
  int evaluated = 0;
  int skipped = 0;
  bool failed = false;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  nlohmann::ordered_json metadata;

  std::string to_csv() const;
  // Fixed-width grid, one row per value of `row_field` ("method" or
  // "scorer"), one column per task cell grouped by hop.
  std::string render_grid(const std::string& row_field) const;
};

std::vector<QAExample> filter_cell(std::span<const QAExample> examples,
                                   const TaskCell& cell);
std::vector<QAExample> filter_split_membership(
    std::span<const QAExample> examples, const DatasetSplit& split,
    const std::string& part);  // "train" | "validation" | "test"

// Exact-match scoring shared by every method: predictions are normalized and
// compared to the canonical answers. `skipped` marks examples that produced
// no prediction (overlength prompts); they never count as correct.
struct ScoredPredictions {
  double accuracy = 0.0;
  int evaluated = 0;
  int skipped = 0;
};
ScoredPredictions score_predictions(std::span<const QAExample> examples,
                                    std::span<const std::string> predictions,
                                    std::span<const char> skipped);

EvalRow evaluate_ours(const FrozenLm& lm, const KgeModel& kge,
                      const Projector& projector,
                      std::span<const QAExample> test_examples,
                      const GraphIndex& graphs, const TaskCell& cell,
                      const EvalOptions& options);

EvalRow evaluate_zero_shot(const FrozenLm& lm,
                           std::span<const QAExample> test_examples,
                           const GraphIndex& graphs, const TaskCell& cell,
                           const EvalOptions& options);

EvalRow evaluate_few_shot(const FrozenLm& lm,
                          std::span<const QAExample> test_examples,
                          std::span<const QAExample> train_pool,
                          const GraphIndex& graphs, const TaskCell& cell,
                          const EvalOptions& options);

// Graph-independent learned prefix: k trainable vectors, no graph input.
struct SoftPromptBaseline {
  Matrix vectors;  // k x d_LLM

  static SoftPromptBaseline init(int k, int llm_dim, std::uint64_t seed);
};

struct BaselineTrainResult {
  SoftPromptBaseline baseline;
  std::vector<TrainMetricsRow> log;
};

// Same NLL objective, Lion settings and early stopping as the main trainer,
// with no graph conditioning.
BaselineTrainResult train_prompt_baseline(const FrozenLm& lm,
                                          std::span<const QAExample> examples,
                                          const DatasetSplit& split,
                                          const TrainConfig& config, int k = 1);

EvalRow evaluate_prompt_tuning(const FrozenLm& lm,
                               const SoftPromptBaseline& baseline,
                               std::span<const QAExample> test_examples,
                               const TaskCell& cell, const EvalOptions& options);

// Decoded answer of the prompt-tuning baseline for a bare question; exposes
// the graph-independence property directly.
std::string prompt_tuning_predict(const FrozenLm& lm,
                                  const SoftPromptBaseline& baseline,
                                  const std::string& question,
                                  int max_answer_tokens);

// Trains and evaluates every (scorer, cell) combination; failed runs are
// marked and the sweep continues.
EvalReport sensitivity_sweep(const FrozenLm& lm,
                             std::span<const QAExample> examples,
                             const GraphIndex& graphs, const DatasetSplit& split,
                             std::span<const Scorer> scorers,
                             std::span<const TaskCell> cells,
                             const KgeConfig& base_kge, const TrainConfig& train_config,
                             const EvalOptions& options);

// CSV rows (graph_id, task, scorer, g1..g_dllm), graphs in corpus order,
// tasks in the given map order. Deterministic for fixed inputs.
void export_embeddings(
    const std::map<std::string, std::pair<const KgeModel*, const Projector*>>&
        task_encoders,
    std::span<const KnowledgeGraph> graphs, const std::string& path);

// Prompt constructors for the chain-of-thought baseline family. They are
// provided for inspection; the toy LM cannot produce intermediate reasoning,
// so these prompts are not scored.
std::string cot_prompt(std::span<const QAExample> exemplars,
                       const GraphIndex& graphs, const KnowledgeGraph& target_graph,
                       const std::string& target_question);
std::string zero_cot_prompt(const KnowledgeGraph& target_graph,
                            const std::string& target_question);
std::string cot_bag_prompt(std::span<const QAExample> exemplars,
                           const GraphIndex& graphs, const KnowledgeGraph& target_graph,
                           const std::string& target_question);

}  // namespace kgst
