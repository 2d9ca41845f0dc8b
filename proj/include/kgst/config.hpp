#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "kgst/eval.hpp"
#include "kgst/synthetic.hpp"

namespace kgst {

inline constexpr int kRunConfigFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// Pretraining corpus mixture: for every training-split graph,
// `qa_records_per_graph` records of the form "Q <sep> A" and
// `graph_text_records_per_graph` of the form "GRAPHTEXT <sep> Q <sep> A".
struct CorpusConfig {
  int qa_records_per_graph = 3;
  int graph_text_records_per_graph = 3;
};

// Everything the pipeline needs, with documented defaults; unknown keys in
// the JSON are rejected. CLI flags override file values.
struct RunConfig {
  int threads = 0;
  SyntheticConfig data;
  int qa_per_graph = 1;
  LmConfig lm;
  PretrainConfig pretrain;
  CorpusConfig corpus;
  KgeConfig kge;
  TrainConfig train;
  EvalOptions eval;
  std::vector<std::string> repro_cells = {"E-SL-0", "E-SL-1", "C-SL-1", "I-SL-1"};
  std::vector<std::string> repro_methods = {"ours", "prompt-tuning", "zero-shot",
                                            "few-shot"};
  std::vector<std::string> embedding_cells = {"E-SL-1", "C-SL-1", "I-SL-1"};

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  nlohmann::ordered_json to_json() const;
};

}  // namespace kgst
