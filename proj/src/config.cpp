#include "kgst/config.hpp"

#include <algorithm>
#include <fstream>

namespace kgst {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::vector<std::string>& known,
                    const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown config key " + scope + "." + key);
    }
  }
}

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  reject_unknown(j,
                 {"format_version", "threads", "data", "qa_per_graph", "lm",
                  "pretrain", "corpus", "kge", "train", "eval", "repro_cells",
                  "repro_methods", "embedding_cells"},
                 "");
  if (j.contains("format_version") &&
      j.at("format_version").get<int>() != kRunConfigFormatVersion) {
    throw ConfigError("config format_version mismatch");
  }
  maybe(j, "threads", c.threads);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    reject_unknown(d, {"count", "min_nodes", "max_nodes", "labels", "relations"},
                   "data");
    maybe(d, "count", c.data.count);
    maybe(d, "min_nodes", c.data.min_nodes);
    maybe(d, "max_nodes", c.data.max_nodes);
    maybe(d, "labels", c.data.labels);
    maybe(d, "relations", c.data.relations);
  }
  maybe(j, "qa_per_graph", c.qa_per_graph);
  if (j.contains("lm")) {
    const auto& d = j.at("lm");
    reject_unknown(d, {"d_model", "n_layers", "n_heads", "ff_mult", "context"},
                   "lm");
    maybe(d, "d_model", c.lm.d_model);
    maybe(d, "n_layers", c.lm.n_layers);
    maybe(d, "n_heads", c.lm.n_heads);
    maybe(d, "ff_mult", c.lm.ff_mult);
    maybe(d, "context", c.lm.context);
  }
  if (j.contains("pretrain")) {
    const auto& d = j.at("pretrain");
    reject_unknown(d,
                   {"learning_rate", "beta1", "beta2", "eps", "batch_size",
                    "max_steps", "eval_every", "patience",
                    "min_rel_improvement", "val_fraction"},
                   "pretrain");
    maybe(d, "learning_rate", c.pretrain.learning_rate);
    maybe(d, "beta1", c.pretrain.beta1);
    maybe(d, "beta2", c.pretrain.beta2);
    maybe(d, "eps", c.pretrain.eps);
    maybe(d, "batch_size", c.pretrain.batch_size);
    maybe(d, "max_steps", c.pretrain.max_steps);
    maybe(d, "eval_every", c.pretrain.eval_every);
    maybe(d, "patience", c.pretrain.patience);
    maybe(d, "min_rel_improvement", c.pretrain.min_rel_improvement);
    maybe(d, "val_fraction", c.pretrain.val_fraction);
  }
  if (j.contains("corpus")) {
    const auto& d = j.at("corpus");
    reject_unknown(d, {"qa_records_per_graph", "graph_text_records_per_graph"},
                   "corpus");
    maybe(d, "qa_records_per_graph", c.corpus.qa_records_per_graph);
    maybe(d, "graph_text_records_per_graph",
          c.corpus.graph_text_records_per_graph);
  }
  if (j.contains("kge")) {
    const auto& d = j.at("kge");
    reject_unknown(d,
                   {"scorer", "dim", "norm_p", "normalize_entities", "margin",
                    "negatives_per_positive", "aggregate", "id_encoding_scale"},
                   "kge");
    if (d.contains("scorer")) c.kge.scorer = parse_scorer(d.at("scorer"));
    maybe(d, "dim", c.kge.dim);
    maybe(d, "norm_p", c.kge.norm_p);
    if (d.contains("normalize_entities") && !d.at("normalize_entities").is_null()) {
      c.kge.normalize_entities = d.at("normalize_entities").get<bool>();
    }
    maybe(d, "margin", c.kge.margin);
    maybe(d, "negatives_per_positive", c.kge.negatives_per_positive);
    if (d.contains("aggregate")) c.kge.aggregate = parse_aggregate(d.at("aggregate"));
    maybe(d, "id_encoding_scale", c.kge.id_encoding_scale);
  }
  if (j.contains("train")) {
    const auto& d = j.at("train");
    reject_unknown(d,
                   {"learning_rate", "beta1", "beta2", "weight_decay",
                    "batch_size", "max_epochs", "patience", "placement",
                    "max_answer_tokens"},
                   "train");
    maybe(d, "learning_rate", c.train.lion.learning_rate);
    maybe(d, "beta1", c.train.lion.beta1);
    maybe(d, "beta2", c.train.lion.beta2);
    maybe(d, "weight_decay", c.train.lion.weight_decay);
    maybe(d, "batch_size", c.train.batch_size);
    maybe(d, "max_epochs", c.train.max_epochs);
    maybe(d, "patience", c.train.patience);
    if (d.contains("placement")) {
      c.train.placement = parse_placement(d.at("placement"));
    }
    maybe(d, "max_answer_tokens", c.train.max_answer_tokens);
  }
  if (j.contains("eval")) {
    const auto& d = j.at("eval");
    reject_unknown(d, {"few_shot_k", "max_answer_tokens"}, "eval");
    maybe(d, "few_shot_k", c.eval.few_shot_k);
    maybe(d, "max_answer_tokens", c.eval.max_answer_tokens);
  }
  maybe(j, "repro_cells", c.repro_cells);
  maybe(j, "repro_methods", c.repro_methods);
  maybe(j, "embedding_cells", c.embedding_cells);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config file " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["format_version"] = kRunConfigFormatVersion;
  j["threads"] = threads;
  j["data"] = {{"count", data.count},
               {"min_nodes", data.min_nodes},
               {"max_nodes", data.max_nodes},
               {"labels", data.labels},
               {"relations", data.relations}};
  j["qa_per_graph"] = qa_per_graph;
  j["lm"] = {{"d_model", lm.d_model},
             {"n_layers", lm.n_layers},
             {"n_heads", lm.n_heads},
             {"ff_mult", lm.ff_mult},
             {"context", lm.context}};
  j["pretrain"] = {{"learning_rate", pretrain.learning_rate},
                   {"beta1", pretrain.beta1},
                   {"beta2", pretrain.beta2},
                   {"eps", pretrain.eps},
                   {"batch_size", pretrain.batch_size},
                   {"max_steps", pretrain.max_steps},
                   {"eval_every", pretrain.eval_every},
                   {"patience", pretrain.patience},
                   {"min_rel_improvement", pretrain.min_rel_improvement},
                   {"val_fraction", pretrain.val_fraction}};
  j["corpus"] = {{"qa_records_per_graph", corpus.qa_records_per_graph},
                 {"graph_text_records_per_graph",
                  corpus.graph_text_records_per_graph}};
  j["kge"] = {{"scorer", scorer_name(kge.scorer)},
              {"dim", kge.dim},
              {"norm_p", kge.norm_p},
              {"normalize_entities",
               kge.normalize_entities
                   ? nlohmann::ordered_json(*kge.normalize_entities)
                   : nlohmann::ordered_json(nullptr)},
              {"margin", kge.margin},
              {"negatives_per_positive", kge.negatives_per_positive},
              {"aggregate", aggregate_name(kge.aggregate)},
              {"id_encoding_scale", kge.id_encoding_scale}};
  j["train"] = {{"learning_rate", train.lion.learning_rate},
                {"beta1", train.lion.beta1},
                {"beta2", train.lion.beta2},
                {"weight_decay", train.lion.weight_decay},
                {"batch_size", train.batch_size},
                {"max_epochs", train.max_epochs},
                {"patience", train.patience},
                {"placement", placement_name(train.placement)},
                {"max_answer_tokens", train.max_answer_tokens}};
  j["eval"] = {{"few_shot_k", eval.few_shot_k},
               {"max_answer_tokens", eval.max_answer_tokens}};
  j["repro_cells"] = repro_cells;
  j["repro_methods"] = repro_methods;
  j["embedding_cells"] = embedding_cells;
  return j;
}

}  // namespace kgst
