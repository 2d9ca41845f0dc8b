#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgst/graph.hpp"
#include "kgst/lion.hpp"

namespace kgst {

enum class Scorer { TransE, DistMult, ComplEx, RotatE };
enum class Aggregate { Mean, Sum, ColumnNorm };

std::string scorer_name(Scorer scorer);
Scorer parse_scorer(const std::string& name);
std::string aggregate_name(Aggregate aggregate);
Aggregate parse_aggregate(const std::string& name);

struct KgeConfig {
  Scorer scorer = Scorer::RotatE;
  int dim = 64;
  int norm_p = 1;  // TransE distance norm
  // Unit-normalize entity rows after every update. Defaults to true for
  // TransE, false otherwise.
  std::optional<bool> normalize_entities;
  double margin = 1.0;
  int negatives_per_positive = 1;
  Aggregate aggregate = Aggregate::Mean;
  // Scale of the fixed sinusoidal id channel added to the label-bucket row.
  double id_encoding_scale = 1.0;

  bool complex_pairing() const {
    return scorer == Scorer::ComplEx || scorer == Scorer::RotatE;
  }
  // Aggregate dimension d_s: d for real scorers, d/2 for complex ones.
  int aggregate_dim() const { return complex_pairing() ? dim / 2 : dim; }
  bool normalize_entities_effective() const {
    return normalize_entities.value_or(scorer == Scorer::TransE);
  }
  void validate() const;
};

// Shared embedding vocabulary across graphs: entity rows are keyed by label
// bucket, relation rows by relation name. Node identity enters through a
// fixed sinusoidal id channel, so same-labeled nodes stay distinguishable.
struct KgeVocab {
  std::vector<std::string> labels;
  std::vector<std::string> relations;
  std::unordered_map<std::string, int> label_index;
  std::unordered_map<std::string, int> relation_index;

  static KgeVocab from_graphs(std::span<const KnowledgeGraph> graphs);
  static KgeVocab from_lists(std::vector<std::string> labels,
                             std::vector<std::string> relations);
  int label_bucket(const std::string& label) const;
  int relation_bucket(const std::string& name) const;
  std::string digest() const;
};

// For ComplEx/RotatE coordinate 2k is the real part and 2k+1 the imaginary
// part of complex coordinate k.
struct KgeModel {
  KgeConfig config;
  KgeVocab vocab;
  Matrix entity_table;    // |labels| x d
  Matrix relation_table;  // |relations| x d

  static KgeModel init(KgeConfig config, KgeVocab vocab, std::uint64_t seed);

  Vector entity_embedding(const KnowledgeGraph& graph, int entity_id) const;
  Vector relation_embedding(const KnowledgeGraph& graph, int relation_id) const;
};

// Fixed positional channel: pairs (sin, cos) of id * 10000^(-2k/d), scaled.
Vector sinusoidal_id_encoding(int id, int dim, double scale);

// Scoring functions on raw embedding vectors.
double score_transe(const Vector& h, const Vector& r, const Vector& t, int norm_p);
double score_distmult(const Vector& h, const Vector& r, const Vector& t);
double score_complex(const Vector& h, const Vector& r, const Vector& t);
double score_rotate(const Vector& h, const Vector& r, const Vector& t);
double score_triple(const KgeConfig& config, const Vector& h, const Vector& r,
                    const Vector& t);

// Plausibility of a triple under the model.
double score(const KgeModel& model, const KnowledgeGraph& graph,
             const Triple& triple);

// n x d_s matrix of pre-reduction per-dimension terms; each row reduces back
// to score() under the scorer's reduction (plain sum for DistMult/ComplEx
// and TransE p=1; -sum for TransE p=2 against the squared distance; L2
// composition for RotatE).
Matrix per_dim_contributions(const KgeModel& model, const KnowledgeGraph& graph,
                             std::span<const Triple> triples);

// Column-wise reduction over the sample dimension.
Vector aggregate(const Matrix& contributions, Aggregate kind);

struct Projector {
  Matrix W;  // d_LLM x d_s
  Vector b;  // d_LLM

  static Projector init(int llm_dim, int aggregate_dim, std::uint64_t seed);
};

struct SoftToken {
  Vector g;
};

SoftToken project(const Projector& projector, const Vector& s);

// g = W * aggregate(contributions(graph)) + b. Graphs without triples cannot
// be encoded.
SoftToken encode_graph(const KgeModel& model, const Projector& projector,
                       const KnowledgeGraph& graph);

struct KgeGradients {
  Matrix entity_table;
  Matrix relation_table;
  Matrix proj_w;
  Vector proj_b;

  static KgeGradients zeros(const KgeModel& model, const Projector& projector);
  void add(const KgeGradients& other);
  void scale(double factor);
};

// Accumulates d(loss)/d(parameters) into `grads` given d(loss)/d(g).
void encode_graph_backward(const KgeModel& model, const Projector& projector,
                           const KnowledgeGraph& graph, const Vector& d_soft_token,
                           KgeGradients& grads);

// Accumulates upstream * d(score)/d(parameters) into `grads` (used by the
// margin-ranking objective, which differentiates the scalar score).
void score_backward(const KgeModel& model, const KnowledgeGraph& graph,
                    const Triple& triple, double upstream, KgeGradients& grads);

// Re-applies the parameter constraints: unit L2 entity rows when configured,
// unit modulus per complex coordinate for RotatE relation rows.
void enforce_constraints(KgeModel& model);

// Optional warm start: hinge loss max(0, margin + f(corrupted) - f(positive))
// with head-or-tail corruption sampled within the owning graph, optimized
// with Lion. steps == 0 returns the model unchanged. Graphs provide the label
// context for the shared entity buckets.
KgeModel margin_rank_pretrain(KgeModel model,
                              std::span<const KnowledgeGraph> graphs, int steps,
                              std::uint64_t seed,
                              const LionConfig& lion = LionConfig{});

void save_kge(const std::string& path, const KgeModel& model,
              const Projector& projector);
std::pair<KgeModel, Projector> load_kge(const std::string& path);

}  // namespace kgst
