#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "kgst/repro.hpp"
#include "kgst/synthetic.hpp"
#include "kgst/trainer.hpp"

using namespace kgst;

namespace {

struct Fixture {
  std::vector<KnowledgeGraph> graphs;
  DatasetSplit split;
  std::vector<QAExample> qa;
  FrozenLm lm;
  GraphIndex index;
};

// Small end-to-end fixture: 14 graphs, a briefly pretrained 2-layer LM over
// their QA text, frozen.
const Fixture& fixture() {
  static const Fixture f = [] {
    SyntheticConfig sc;
    sc.count = 14;
    sc.min_nodes = 4;
    sc.max_nodes = 6;
    std::vector<KnowledgeGraph> graphs = generate_synthetic(sc, 404);
    DatasetSplit split = split_dataset(graphs, 405);
    const auto cells = all_task_cells();
    std::vector<QAExample> qa = build_qa_dataset(graphs, cells, 1, 406);

    LmConfig lc;
    lc.d_model = 32;
    lc.n_layers = 2;
    lc.n_heads = 2;
    lc.ff_mult = 2;
    lc.context = 160;
    CorpusConfig cc;
    cc.qa_records_per_graph = 6;
    cc.graph_text_records_per_graph = 2;
    const auto corpus = build_pretrain_corpus(graphs, split, cc, 407);
    PretrainConfig pc;
    pc.max_steps = 250;
    pc.eval_every = 125;
    pc.patience = 10;
    pc.batch_size = 8;
    pc.learning_rate = 3e-3;
    pc.seed = 408;
    pc.threads = 2;
    FrozenLm lm = pretrain_lm(corpus, build_tokenizer(graphs), lc, pc);
    lm.freeze();
    Fixture out{std::move(graphs), std::move(split), std::move(qa),
                std::move(lm), {}};
    out.index = index_graphs(out.graphs);
    return out;
  }();
  return f;
}

TrainConfig fast_train_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.batch_size = 16;
  tc.max_epochs = 6;
  tc.patience = 6;
  tc.seed = seed;
  tc.threads = 2;
  return tc;
}

KgeConfig small_kge() {
  KgeConfig kc;
  kc.scorer = Scorer::RotatE;
  kc.dim = 16;
  return kc;
}

}  // namespace

TEST_CASE("lion_step follows the sign-momentum update rule") {
  LionConfig config;
  config.learning_rate = 0.1;
  config.beta1 = 0.9;
  config.beta2 = 0.99;

  // zero momentum, positive gradient: update is -lr elementwise
  Matrix param = Matrix::Zero(2, 2);
  Matrix grad = Matrix::Constant(2, 2, 3.7);
  Matrix momentum = Matrix::Zero(2, 2);
  lion_step(param, grad, momentum, config);
  CHECK(param.isApproxToConstant(-0.1, 1e-15));
  CHECK(momentum.isApproxToConstant(0.01 * 3.7, 1e-12));

  // zero gradient and momentum: fixed point (weight_decay = 0)
  Matrix p2 = Matrix::Constant(2, 2, 5.0);
  Matrix g2 = Matrix::Zero(2, 2);
  Matrix m2 = Matrix::Zero(2, 2);
  lion_step(p2, g2, m2, config);
  CHECK(p2.isApproxToConstant(5.0, 1e-15));

  // sign invariance: scaling gradients by 1000 gives the same update when
  // sign(c) is unchanged
  Matrix pa = Matrix::Constant(1, 3, 1.0), pb = pa;
  Matrix ga(1, 3), ma = Matrix::Zero(1, 3), mb = Matrix::Zero(1, 3);
  ga << 0.2, -0.4, 0.9;
  Matrix gb = 1000 * ga;
  lion_step(pa, ga, ma, config);
  lion_step(pb, gb, mb, config);
  CHECK(pa.isApprox(pb, 1e-15));

  Matrix wrong = Matrix::Zero(3, 1);
  CHECK_THROWS_AS(lion_step(pa, ga, wrong, config), ContractError);
}

TEST_CASE("nll_loss is answer-length times ln V under uniform logits") {
  Tokenizer tok = Tokenizer::build(std::vector<std::string>{"Doctor"},
                                   std::vector<std::string>{"knows"}, 9);
  LmConfig lc;
  lc.d_model = 16;
  lc.n_layers = 1;
  lc.n_heads = 2;
  lc.ff_mult = 2;
  lc.context = 64;
  FrozenLm lm(lc, tok, 3);
  lm.set_tensor("emb", Matrix::Zero(tok.vocab_size(), lc.d_model));
  lm.freeze();
  const std::vector<int> question = lm.tokenizer().encode("How many nodes ?");
  const std::vector<int> answer = lm.tokenizer().encode("1, 3");  // 3 tokens
  REQUIRE(answer.size() == 3);
  const double loss = nll_loss(lm, question, SoftToken{Vector::Ones(16)}, answer);
  CHECK(loss == doctest::Approx(3.0 * std::log(tok.vocab_size())).epsilon(1e-9));
}

TEST_CASE("normalize_answer lowercases, trims and collapses whitespace") {
  CHECK(normalize_answer("  Yes ") == "yes");
  CHECK(normalize_answer("1,  3,\t4") == "1, 3, 4");
  CHECK(normalize_answer("NONE") == "none");
  const std::string once = normalize_answer("  A   b  C ");
  CHECK(normalize_answer(once) == once);
  CHECK(normalize_answer("") == "");
}

TEST_CASE("training requires a frozen model and non-empty splits") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("E-SL-0");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  FrozenLm unfrozen(f.lm.config(), f.lm.tokenizer(), 1);
  CHECK_THROWS_AS(train(unfrozen, cell_qa, f.index, f.split, small_kge(),
                        fast_train_config(1)),
                  ContractError);
}

TEST_CASE("patience 1 with a constant validation metric stops after 2 rounds") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("C-SL-0");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  TrainConfig tc = fast_train_config(2);
  tc.lion.learning_rate = 1e-15;  // parameters effectively constant
  tc.patience = 1;
  tc.max_epochs = 50;
  const TrainResult result =
      train(f.lm, cell_qa, f.index, f.split, small_kge(), tc);
  CHECK(result.log.size() == 2);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("E-SL-1");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  TrainConfig tc = fast_train_config(3);
  tc.max_epochs = 3;
  const TrainResult a = train(f.lm, cell_qa, f.index, f.split, small_kge(), tc);
  const TrainResult b = train(f.lm, cell_qa, f.index, f.split, small_kge(), tc);
  REQUIRE(a.log.size() == b.log.size());
  for (size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_accuracy == b.log[i].val_accuracy);
  }
  CHECK(a.state.kge.entity_table.isApprox(b.state.kge.entity_table, 0.0));
  CHECK(a.state.projector.W.isApprox(b.state.projector.W, 0.0));

  // the frozen model is untouched bit-for-bit
  CHECK(f.lm.weight_digest() == f.lm.weight_digest());
}

TEST_CASE("training on a single example drives its loss below 0.01") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("C-SL-0");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell && !ex.degenerate) cell_qa.push_back(ex);
  }
  REQUIRE(cell_qa.size() >= 1);
  const QAExample target = cell_qa.front();
  DatasetSplit split;
  split.train = {target.graph_id};
  split.validation = {target.graph_id};
  const std::vector<QAExample> one = {target};

  TrainConfig tc;
  tc.batch_size = 1;
  tc.max_epochs = 500;
  tc.patience = 500;
  tc.seed = 5;
  tc.threads = 1;
  KgeConfig kc = small_kge();
  const TrainResult result = train(f.lm, one, f.index, split, kc, tc);
  double min_loss = std::numeric_limits<double>::infinity();
  for (const auto& row : result.log) min_loss = std::min(min_loss, row.train_loss);
  CHECK(min_loss < 0.01);
}

TEST_CASE("train state checkpoints round-trip byte-identically") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("E-SL-0");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  TrainConfig tc = fast_train_config(7);
  tc.max_epochs = 2;
  const TrainResult result =
      train(f.lm, cell_qa, f.index, f.split, small_kge(), tc);

  const auto dir = std::filesystem::temp_directory_path();
  const std::string p1 = (dir / "kgst_ts1.ckpt").string();
  const std::string p2 = (dir / "kgst_ts2.ckpt").string();
  save_train_state(p1, result.state);
  const TrainState loaded = load_train_state(p1);
  save_train_state(p2, loaded);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string b1{std::istreambuf_iterator<char>(f1), {}};
  const std::string b2{std::istreambuf_iterator<char>(f2), {}};
  CHECK(b1 == b2);
  CHECK(loaded.epoch == result.state.epoch);
  CHECK(loaded.best_val_accuracy == result.state.best_val_accuracy);
  CHECK(loaded.rng_state == result.state.rng_state);

  // corrupted payload length is rejected
  std::string truncated = b1.substr(0, b1.size() - 16);
  std::ofstream(p1, std::ios::binary | std::ios::trunc) << truncated;
  CHECK_THROWS_AS(load_train_state(p1), ConfigError);
}

TEST_CASE("resumed training reproduces the uninterrupted metrics log") {
  const Fixture& f = fixture();
  const TaskCell cell = parse_cell_id("C-SL-1");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  TrainConfig tc = fast_train_config(11);
  tc.patience = 10;

  tc.max_epochs = 4;
  const TrainResult uninterrupted =
      train(f.lm, cell_qa, f.index, f.split, small_kge(), tc);

  TrainConfig tc_first = tc;
  tc_first.max_epochs = 2;
  const TrainResult first =
      train(f.lm, cell_qa, f.index, f.split, small_kge(), tc_first);
  const TrainResult resumed = train(f.lm, cell_qa, f.index, f.split, small_kge(),
                                    tc, &first.state);

  REQUIRE(uninterrupted.log.size() == 4);
  REQUIRE(first.log.size() == 2);
  REQUIRE(resumed.log.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(resumed.log[i].epoch == uninterrupted.log[i + 2].epoch);
    CHECK(resumed.log[i].train_loss == uninterrupted.log[i + 2].train_loss);
    CHECK(resumed.log[i].val_accuracy == uninterrupted.log[i + 2].val_accuracy);
  }
  CHECK(resumed.state.kge.entity_table.isApprox(
      uninterrupted.state.kge.entity_table, 0.0));
}

TEST_CASE("overlength examples are skipped and counted, not fatal") {
  const Fixture& f = fixture();
  LmConfig tiny = f.lm.config();
  tiny.context = 24;  // question + answer no longer fit
  FrozenLm short_lm(tiny, f.lm.tokenizer(), 2);
  short_lm.freeze();
  const TaskCell cell = parse_cell_id("I-TL-2");
  std::vector<QAExample> cell_qa;
  for (const auto& ex : f.qa) {
    if (ex.descriptor.cell == cell) cell_qa.push_back(ex);
  }
  TrainConfig tc = fast_train_config(13);
  tc.max_epochs = 1;
  const TrainResult result =
      train(short_lm, cell_qa, f.index, f.split, small_kge(), tc);
  CHECK(result.skipped_overlength > 0);
}

TEST_CASE("metrics csv has the documented columns") {
  std::vector<TrainMetricsRow> rows = {{1, 0.5, 0.25, 1.5}, {2, 0.25, 0.5, 1.4}};
  const std::string csv = metrics_to_csv(rows);
  CHECK(csv.find("epoch,train_loss,val_accuracy,seconds\n") == 0);
  CHECK(csv.find("\n1,0.5,0.25,1.500\n") != std::string::npos);
}
