// kgst: knowledge-graph soft-token pipeline driver.
//
// Subcommands cover the full experiment flow: synthetic data generation,
// dataset validation, QA generation, LM pretraining, KGE margin pretraining,
// soft-token training, evaluation, the scorer sensitivity sweep, embedding
// export, and a one-seed end-to-end reproduction run.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "kgst/config.hpp"
#include "kgst/digest.hpp"
#include "kgst/graph_io.hpp"
#include "kgst/repro.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitContract = 4;

using namespace kgst;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? RunConfig{} : RunConfig::load(path);
}

struct TrainedAssets {
  FrozenLm lm;
  std::vector<KnowledgeGraph> graphs;
  GraphIndex index;
  DatasetSplit split;
  std::vector<QAExample> qa;
};

TrainedAssets load_assets(const std::string& lm_path, const std::string& graphs_path,
                          const std::string& qa_path, std::uint64_t split_seed) {
  TrainedAssets assets{FrozenLm::load(lm_path), load_graphs(graphs_path), {}, {}, {}};
  assets.index = index_graphs(assets.graphs);
  assets.split = split_dataset(assets.graphs, split_seed);
  assets.qa = load_qa(qa_path);
  return assets;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-graph soft tokens for a frozen language model"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker threads (0 = KGST_THREADS env or hardware)");

  std::string config_path;
  app.add_option("--config", config_path, "JSON run config (flags override)");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "generate complete synthetic graphs");
  int gen_count = 600, gen_min = 8, gen_max = 16;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--count", gen_count, "number of graphs");
  gen->add_option("--min-nodes", gen_min, "minimum node count");
  gen->add_option("--max-nodes", gen_max, "maximum node count");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--out", gen_out, "output JSONL path")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "validate a graph JSONL file");
  std::string validate_path;
  validate->add_option("file", validate_path, "graph JSONL path")->required();

  // gen-qa
  auto* genqa = app.add_subcommand("gen-qa", "instantiate the 18-cell QA grid");
  std::string genqa_graphs, genqa_out;
  int genqa_per_graph = 1;
  std::uint64_t genqa_seed = 0;
  genqa->add_option("--graphs", genqa_graphs, "graph JSONL path")->required();
  genqa->add_option("--per-graph", genqa_per_graph, "questions per graph per cell");
  genqa->add_option("--seed", genqa_seed, "rng seed");
  genqa->add_option("--out", genqa_out, "output JSONL path")->required();

  // pretrain-lm
  auto* pre = app.add_subcommand("pretrain-lm", "pretrain and freeze the toy LM");
  std::string pre_graphs, pre_out;
  std::uint64_t pre_seed = 0;
  bool pre_verbose = false;
  pre->add_option("--graphs", pre_graphs, "graph JSONL path")->required();
  pre->add_option("--out", pre_out, "LM checkpoint path")->required();
  pre->add_option("--seed", pre_seed, "rng seed");
  pre->add_flag("--verbose", pre_verbose, "log pretraining progress");

  // kge-pretrain
  auto* kgepre = app.add_subcommand("kge-pretrain",
                                    "margin-ranking warm start for the KGE tables");
  std::string kgepre_graphs, kgepre_out, kgepre_scorer = "rotate";
  int kgepre_steps = 1000, kgepre_dim = 64, kgepre_dllm = 128;
  std::uint64_t kgepre_seed = 0;
  kgepre->add_option("--graphs", kgepre_graphs, "graph JSONL path")->required();
  kgepre->add_option("--scorer", kgepre_scorer, "transe|distmult|complex|rotate");
  kgepre->add_option("--steps", kgepre_steps, "optimization steps");
  kgepre->add_option("--dim", kgepre_dim, "embedding dimension");
  kgepre->add_option("--d-llm", kgepre_dllm, "LM embedding dimension");
  kgepre->add_option("--seed", kgepre_seed, "rng seed");
  kgepre->add_option("--out", kgepre_out, "KGE checkpoint path")->required();

  // train
  auto* tr = app.add_subcommand("train", "soft-token training for one task cell");
  std::string tr_lm, tr_graphs, tr_qa, tr_scorer = "rotate", tr_cell = "E-SL-0",
              tr_out;
  std::uint64_t tr_seed = 0;
  bool tr_multi_task = false, tr_verbose = false;
  std::uint64_t tr_split_seed_offset = 1;
  tr->add_option("--lm", tr_lm, "frozen LM checkpoint")->required();
  tr->add_option("--graphs", tr_graphs, "graph JSONL path")->required();
  tr->add_option("--qa", tr_qa, "qa JSONL path")->required();
  tr->add_option("--scorer", tr_scorer, "transe|distmult|complex|rotate");
  tr->add_option("--task-cell", tr_cell, "task cell id, e.g. E-SL-0");
  tr->add_flag("--multi-task", tr_multi_task, "train one model across all cells");
  tr->add_option("--seed", tr_seed, "rng seed");
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_flag("--verbose", tr_verbose, "log per-epoch metrics");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a method on the test split");
  std::string ev_lm, ev_graphs, ev_qa, ev_method = "ours", ev_cell = "E-SL-0",
              ev_encoder, ev_out;
  std::uint64_t ev_seed = 0;
  ev->add_option("--lm", ev_lm, "frozen LM checkpoint")->required();
  ev->add_option("--graphs", ev_graphs, "graph JSONL path")->required();
  ev->add_option("--qa", ev_qa, "qa JSONL path")->required();
  ev->add_option("--method", ev_method, "ours|zero-shot|few-shot|prompt-tuning");
  ev->add_option("--task-cell", ev_cell, "task cell id");
  ev->add_option("--encoder", ev_encoder, "trained encoder checkpoint (ours)");
  ev->add_option("--seed", ev_seed, "rng seed");
  ev->add_option("--out", ev_out, "report CSV path");

  // sweep
  auto* sw = app.add_subcommand("sweep", "train/evaluate all scorers and cells");
  std::string sw_lm, sw_graphs, sw_qa, sw_out;
  std::uint64_t sw_seed = 0;
  bool sw_verbose = false;
  sw->add_option("--lm", sw_lm, "frozen LM checkpoint")->required();
  sw->add_option("--graphs", sw_graphs, "graph JSONL path")->required();
  sw->add_option("--qa", sw_qa, "qa JSONL path")->required();
  sw->add_option("--seed", sw_seed, "rng seed");
  sw->add_option("--out", sw_out, "output directory")->required();
  sw->add_flag("--verbose", sw_verbose, "log sweep progress");

  // export-embeddings
  auto* ex = app.add_subcommand("export-embeddings",
                                "per-graph soft tokens from trained encoders");
  std::string ex_graphs, ex_out;
  std::vector<std::string> ex_encoders;
  ex->add_option("--graphs", ex_graphs, "graph JSONL path")->required();
  ex->add_option("--encoder", ex_encoders,
                 "CELL=checkpoint pair, repeatable (needs >= 2)")
      ->required();
  ex->add_option("--out", ex_out, "CSV path")->required();

  // repro
  auto* rep = app.add_subcommand("repro", "end-to-end synthetic pipeline from one seed");
  std::uint64_t rep_seed = 0;
  std::string rep_out;
  rep->add_option("--seed", rep_seed, "master seed");
  rep->add_option("--out", rep_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    RunConfig config = load_run_config(config_path);
    if (threads > 0) config.threads = threads;
    const int worker_threads = resolve_threads(config.threads);

    if (*gen) {
      SyntheticConfig sc = config.data;
      if (gen->count("--count")) sc.count = gen_count;
      if (gen->count("--min-nodes")) sc.min_nodes = gen_min;
      if (gen->count("--max-nodes")) sc.max_nodes = gen_max;
      if (sc.min_nodes > sc.max_nodes) {
        std::cerr << "gen-synthetic: --min-nodes exceeds --max-nodes\n";
        return kExitUsage;
      }
      save_graphs(gen_out, generate_synthetic(sc, gen_seed));
      std::cout << "wrote " << sc.count << " graphs to " << gen_out << '\n';
    } else if (*validate) {
      const auto graphs = load_graphs(validate_path);
      std::cout << validate_path << ": " << graphs.size() << " graphs valid\n";
    } else if (*genqa) {
      const auto graphs = load_graphs(genqa_graphs);
      const auto cells = all_task_cells();
      const auto qa = build_qa_dataset(graphs, cells, genqa_per_graph, genqa_seed);
      save_qa(genqa_out, qa);
      std::cout << "wrote " << qa.size() << " examples to " << genqa_out << '\n';
    } else if (*pre) {
      const auto graphs = load_graphs(pre_graphs);
      const DatasetSplit split = split_dataset(graphs, pre_seed + 1);
      const Tokenizer tokenizer = build_tokenizer(graphs);
      const auto corpus =
          build_pretrain_corpus(graphs, split, config.corpus, pre_seed + 3);
      PretrainConfig pc = config.pretrain;
      pc.seed = pre_seed + 4;
      pc.threads = worker_threads;
      pc.verbose = pre_verbose;
      FrozenLm lm = pretrain_lm(corpus, tokenizer, config.lm, pc);
      lm.freeze();
      lm.save(pre_out);
      std::cout << "wrote frozen LM (" << lm.parameter_count() << " parameters, digest "
                << lm.weight_digest().substr(0, 12) << "...) to " << pre_out << '\n';
    } else if (*kgepre) {
      const auto graphs = load_graphs(kgepre_graphs);
      KgeConfig kc = config.kge;
      kc.scorer = parse_scorer(kgepre_scorer);
      kc.dim = kgepre_dim;
      KgeModel model =
          KgeModel::init(kc, KgeVocab::from_graphs(graphs), kgepre_seed);
      model = margin_rank_pretrain(model, graphs, kgepre_steps, kgepre_seed + 1,
                                   config.train.lion);
      const Projector projector =
          Projector::init(kgepre_dllm, kc.aggregate_dim(), kgepre_seed + 2);
      save_kge(kgepre_out, model, projector);
      std::cout << "wrote KGE checkpoint to " << kgepre_out << '\n';
    } else if (*tr) {
      auto assets = load_assets(tr_lm, tr_graphs, tr_qa, tr_seed + 1);
      KgeConfig kc = config.kge;
      kc.scorer = parse_scorer(tr_scorer);
      TrainConfig tc = config.train;
      tc.seed = tr_seed;
      tc.threads = worker_threads;
      tc.verbose = tr_verbose;
      std::vector<QAExample> examples =
          tr_multi_task ? assets.qa : filter_cell(assets.qa, parse_cell_id(tr_cell));
      std::filesystem::create_directories(tr_out);
      const TrainResult result =
          train(assets.lm, examples, assets.index, assets.split, kc, tc);
      save_train_state(tr_out + "/encoder.ckpt", result.state);
      write_file(tr_out + "/metrics.csv", metrics_to_csv(result.log));
      std::cout << "best validation accuracy " << result.state.best_val_accuracy
                << " after " << result.state.epoch << " epochs; wrote " << tr_out
                << "/encoder.ckpt\n";
    } else if (*ev) {
      auto assets = load_assets(ev_lm, ev_graphs, ev_qa, ev_seed + 1);
      const TaskCell cell = parse_cell_id(ev_cell);
      const auto cell_examples = filter_cell(assets.qa, cell);
      const auto test = filter_split_membership(cell_examples, assets.split, "test");
      EvalOptions options = config.eval;
      options.threads = worker_threads;
      options.seed = ev_seed + 5;
      options.placement = config.train.placement;
      EvalRow row;
      const EvalMethod method = parse_method(ev_method);
      if (method == EvalMethod::Ours) {
        if (ev_encoder.empty()) {
          std::cerr << "eval --method ours requires --encoder\n";
          return kExitUsage;
        }
        const TrainState state = load_train_state(ev_encoder);
        row = evaluate_ours(assets.lm, state.best_kge_model(),
                            state.best_projector_model(), test, assets.index,
                            cell, options);
      } else if (method == EvalMethod::ZeroShot) {
        row = evaluate_zero_shot(assets.lm, test, assets.index, cell, options);
      } else if (method == EvalMethod::FewShot) {
        const auto pool =
            filter_split_membership(cell_examples, assets.split, "train");
        row = evaluate_few_shot(assets.lm, test, pool, assets.index, cell, options);
      } else {
        TrainConfig tc = config.train;
        tc.seed = ev_seed;
        tc.threads = worker_threads;
        const BaselineTrainResult baseline =
            train_prompt_baseline(assets.lm, cell_examples, assets.split, tc);
        row = evaluate_prompt_tuning(assets.lm, baseline.baseline, test, cell,
                                     options);
      }
      EvalReport report;
      report.rows.push_back(row);
      std::cout << report.render_grid("method");
      if (!ev_out.empty()) write_file(ev_out, report.to_csv());
    } else if (*sw) {
      auto assets = load_assets(sw_lm, sw_graphs, sw_qa, sw_seed + 1);
      TrainConfig tc = config.train;
      tc.seed = sw_seed;
      tc.threads = worker_threads;
      tc.verbose = sw_verbose;
      EvalOptions options = config.eval;
      options.threads = worker_threads;
      options.seed = sw_seed + 5;
      options.placement = config.train.placement;
      const std::vector<Scorer> scorers = {Scorer::TransE, Scorer::DistMult,
                                           Scorer::ComplEx, Scorer::RotatE};
      const auto cells = all_task_cells();
      const EvalReport report =
          sensitivity_sweep(assets.lm, assets.qa, assets.index, assets.split,
                            scorers, cells, config.kge, tc, options);
      std::filesystem::create_directories(sw_out);
      write_file(sw_out + "/sweep.csv", report.to_csv());
      write_file(sw_out + "/sweep.txt", report.render_grid("scorer"));
      std::cout << report.render_grid("scorer");
    } else if (*ex) {
      const auto graphs = load_graphs(ex_graphs);
      std::vector<std::pair<KgeModel, Projector>> loaded;
      std::map<std::string, std::pair<const KgeModel*, const Projector*>> encoders;
      loaded.reserve(ex_encoders.size());
      for (const std::string& spec : ex_encoders) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
          std::cerr << "--encoder expects CELL=checkpoint, got " << spec << '\n';
          return kExitUsage;
        }
        const TrainState state = load_train_state(spec.substr(eq + 1));
        loaded.emplace_back(state.best_kge_model(), state.best_projector_model());
        encoders.emplace(spec.substr(0, eq),
                         std::make_pair(&loaded.back().first, &loaded.back().second));
      }
      export_embeddings(encoders, graphs, ex_out);
      std::cout << "wrote embeddings for " << graphs.size() << " graphs to "
                << ex_out << '\n';
    } else if (*rep) {
      run_repro(config, rep_seed, rep_out);
      std::cout << "repro complete; manifest at " << rep_out << "/manifest.json\n";
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitData;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitData;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitData;
  } catch (const LookupError& e) {
    std::cerr << "lookup error: " << e.what() << '\n';
    return kExitData;
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << '\n';
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitContract;
  }
}
