#include <doctest.h>

#include "kgst/config.hpp"

using namespace kgst;

TEST_CASE("run config defaults round-trip through json") {
  const RunConfig defaults;
  const auto j = defaults.to_json();
  // every top-level section is present and documented
  for (const char* key : {"format_version", "threads", "data", "qa_per_graph",
                          "lm", "pretrain", "corpus", "kge", "train", "eval"}) {
    CHECK(j.contains(key));
  }
  const RunConfig parsed = RunConfig::from_json(j);
  CHECK(parsed.data.count == defaults.data.count);
  CHECK(parsed.lm.d_model == defaults.lm.d_model);
  CHECK(parsed.kge.dim == 64);
  CHECK(scorer_name(parsed.kge.scorer) == scorer_name(defaults.kge.scorer));
  CHECK(parsed.train.lion.learning_rate == 1e-3);
  CHECK(parsed.train.lion.beta1 == 0.9);
  CHECK(parsed.train.lion.beta2 == 0.99);
  CHECK(parsed.train.patience == 10);
  CHECK(parsed.eval.few_shot_k == 2);
  CHECK(parsed.qa_per_graph == 1);
}

TEST_CASE("unknown config keys are rejected at every level") {
  nlohmann::json j;
  j["bogus"] = 1;
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);

  nlohmann::json nested;
  nested["kge"]["scorer"] = "transe";
  nested["kge"]["typo_key"] = 3;
  CHECK_THROWS_AS(RunConfig::from_json(nested), ConfigError);

  nlohmann::json ok;
  ok["kge"]["scorer"] = "transe";
  CHECK(RunConfig::from_json(ok).kge.scorer == Scorer::TransE);
}

TEST_CASE("config format_version gates compatibility") {
  nlohmann::json j;
  j["format_version"] = 999;
  CHECK_THROWS_AS(RunConfig::from_json(j), ConfigError);
  j["format_version"] = kRunConfigFormatVersion;
  CHECK_NOTHROW(RunConfig::from_json(j));
}

TEST_CASE("partial overrides keep the remaining defaults") {
  nlohmann::json j;
  j["data"]["count"] = 40;
  j["train"]["max_epochs"] = 7;
  const RunConfig c = RunConfig::from_json(j);
  CHECK(c.data.count == 40);
  CHECK(c.data.min_nodes == 8);
  CHECK(c.train.max_epochs == 7);
  CHECK(c.train.batch_size == 32);
}
