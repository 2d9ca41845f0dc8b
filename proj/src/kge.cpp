#include "kgst/kge.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "kgst/checkpoint.hpp"
#include "kgst/digest.hpp"

namespace kgst {

namespace {
constexpr double kTiny = 1e-300;  // guards norm kinks at exactly zero
}

std::string scorer_name(Scorer scorer) {
  switch (scorer) {
    case Scorer::TransE: return "transe";
    case Scorer::DistMult: return "distmult";
    case Scorer::ComplEx: return "complex";
    case Scorer::RotatE: return "rotate";
  }
  throw ContractError("unreachable scorer");
}

Scorer parse_scorer(const std::string& name) {
  if (name == "transe") return Scorer::TransE;
  if (name == "distmult") return Scorer::DistMult;
  if (name == "complex") return Scorer::ComplEx;
  if (name == "rotate") return Scorer::RotatE;
  throw ConfigError("unknown scorer: " + name +
                    " (expected transe|distmult|complex|rotate)");
}

std::string aggregate_name(Aggregate aggregate) {
  switch (aggregate) {
    case Aggregate::Mean: return "mean";
    case Aggregate::Sum: return "sum";
    case Aggregate::ColumnNorm: return "column-norm";
  }
  throw ContractError("unreachable aggregate");
}

Aggregate parse_aggregate(const std::string& name) {
  if (name == "mean") return Aggregate::Mean;
  if (name == "sum") return Aggregate::Sum;
  if (name == "column-norm") return Aggregate::ColumnNorm;
  throw ConfigError("unknown aggregate: " + name);
}

void KgeConfig::validate() const {
  if (dim < 1) throw ConfigError("kge: dim must be positive");
  if (complex_pairing() && dim % 2 != 0) {
    throw ConfigError("kge: dim must be even for complex scorers");
  }
  if (norm_p != 1 && norm_p != 2) throw ConfigError("kge: norm_p must be 1 or 2");
  if (margin < 0) throw ConfigError("kge: margin must be >= 0");
  if (negatives_per_positive < 1) {
    throw ConfigError("kge: negatives_per_positive must be >= 1");
  }
}

KgeVocab KgeVocab::from_graphs(std::span<const KnowledgeGraph> graphs) {
  std::set<std::string> labels, relations;
  for (const KnowledgeGraph& g : graphs) {
    for (const Entity& e : g.entities) labels.insert(e.label);
    for (const Relation& r : g.relations) relations.insert(r.name);
  }
  return from_lists({labels.begin(), labels.end()},
                    {relations.begin(), relations.end()});
}

KgeVocab KgeVocab::from_lists(std::vector<std::string> labels,
                              std::vector<std::string> relations) {
  KgeVocab vocab;
  vocab.labels = std::move(labels);
  vocab.relations = std::move(relations);
  for (size_t i = 0; i < vocab.labels.size(); ++i) {
    vocab.label_index[vocab.labels[i]] = static_cast<int>(i);
  }
  for (size_t i = 0; i < vocab.relations.size(); ++i) {
    vocab.relation_index[vocab.relations[i]] = static_cast<int>(i);
  }
  return vocab;
}

int KgeVocab::label_bucket(const std::string& label) const {
  const auto it = label_index.find(label);
  if (it == label_index.end()) throw LookupError("unknown entity label: " + label);
  return it->second;
}

int KgeVocab::relation_bucket(const std::string& name) const {
  const auto it = relation_index.find(name);
  if (it == relation_index.end()) throw LookupError("unknown relation: " + name);
  return it->second;
}

std::string KgeVocab::digest() const {
  Sha256 h;
  for (const auto& s : labels) {
    h.update(s);
    h.update("\n");
  }
  h.update("|");
  for (const auto& s : relations) {
    h.update(s);
    h.update("\n");
  }
  return h.hex();
}

Vector sinusoidal_id_encoding(int id, int dim, double scale) {
  Vector enc(dim);
  for (int j = 0; j < dim; ++j) {
    const int k = j / 2;
    const double omega = std::pow(10000.0, -2.0 * k / dim);
    const double angle = id * omega;
    enc[j] = scale * (j % 2 == 0 ? std::sin(angle) : std::cos(angle));
  }
  return enc;
}

KgeModel KgeModel::init(KgeConfig config, KgeVocab vocab, std::uint64_t seed) {
  config.validate();
  if (vocab.labels.empty() || vocab.relations.empty()) {
    throw ConfigError("kge: vocabulary must be non-empty");
  }
  KgeModel model;
  model.config = config;
  model.vocab = std::move(vocab);
  const int d = config.dim;
  const double bound = 6.0 / std::sqrt(static_cast<double>(d));
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-bound, bound);

  model.entity_table.resize(static_cast<Index>(model.vocab.labels.size()), d);
  for (Index i = 0; i < model.entity_table.rows(); ++i) {
    for (Index j = 0; j < d; ++j) model.entity_table(i, j) = uniform(rng);
  }

  model.relation_table.resize(static_cast<Index>(model.vocab.relations.size()), d);
  if (config.scorer == Scorer::RotatE) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
    for (Index i = 0; i < model.relation_table.rows(); ++i) {
      for (int k = 0; k < d / 2; ++k) {
        const double theta = phase(rng);
        model.relation_table(i, 2 * k) = std::cos(theta);
        model.relation_table(i, 2 * k + 1) = std::sin(theta);
      }
    }
  } else {
    for (Index i = 0; i < model.relation_table.rows(); ++i) {
      for (Index j = 0; j < d; ++j) model.relation_table(i, j) = uniform(rng);
    }
  }
  enforce_constraints(model);
  return model;
}

Vector KgeModel::entity_embedding(const KnowledgeGraph& graph,
                                  int entity_id) const {
  const int bucket = vocab.label_bucket(graph.label_of(entity_id));
  return entity_table.row(bucket).transpose() +
         sinusoidal_id_encoding(entity_id, config.dim, config.id_encoding_scale);
}

Vector KgeModel::relation_embedding(const KnowledgeGraph& graph,
                                    int relation_id) const {
  const int bucket = vocab.relation_bucket(graph.relation_name(relation_id));
  return relation_table.row(bucket).transpose();
}

double score_transe(const Vector& h, const Vector& r, const Vector& t,
                    int norm_p) {
  const Vector delta = h + r - t;
  if (norm_p == 1) return -delta.lpNorm<1>();
  return -delta.norm();
}

double score_distmult(const Vector& h, const Vector& r, const Vector& t) {
  return (h.array() * r.array() * t.array()).sum();
}

double score_complex(const Vector& h, const Vector& r, const Vector& t) {
  double total = 0;
  for (Index k = 0; k + 1 < h.size(); k += 2) {
    const double a = h[k], b = h[k + 1];
    const double c = r[k], d = r[k + 1];
    const double e = t[k], f = t[k + 1];
    total += e * (a * c - b * d) + f * (a * d + b * c);
  }
  return total;
}

double score_rotate(const Vector& h, const Vector& r, const Vector& t) {
  double sq = 0;
  for (Index k = 0; k + 1 < h.size(); k += 2) {
    const double a = h[k], b = h[k + 1];
    const double c = r[k], d = r[k + 1];
    const double ur = a * c - b * d - t[k];
    const double ui = a * d + b * c - t[k + 1];
    sq += ur * ur + ui * ui;
  }
  return -std::sqrt(sq);
}

double score_triple(const KgeConfig& config, const Vector& h, const Vector& r,
                    const Vector& t) {
  switch (config.scorer) {
    case Scorer::TransE: return score_transe(h, r, t, config.norm_p);
    case Scorer::DistMult: return score_distmult(h, r, t);
    case Scorer::ComplEx: return score_complex(h, r, t);
    case Scorer::RotatE: return score_rotate(h, r, t);
  }
  throw ContractError("unreachable scorer");
}

double score(const KgeModel& model, const KnowledgeGraph& graph,
             const Triple& triple) {
  const Vector h = model.entity_embedding(graph, triple.head);
  const Vector r = model.relation_embedding(graph, triple.relation);
  const Vector t = model.entity_embedding(graph, triple.tail);
  return score_triple(model.config, h, r, t);
}

namespace {

// One row of per-dimension contributions for a resolved triple.
void contribution_row(const KgeConfig& config, const Vector& h, const Vector& r,
                      const Vector& t, Eigen::Ref<Eigen::RowVectorXd> row) {
  switch (config.scorer) {
    case Scorer::TransE: {
      const Vector delta = h + r - t;
      if (config.norm_p == 1) {
        row = -delta.array().abs().transpose();
      } else {
        row = -delta.array().square().transpose();
      }
      return;
    }
    case Scorer::DistMult:
      row = (h.array() * r.array() * t.array()).transpose();
      return;
    case Scorer::ComplEx:
      for (Index k = 0; 2 * k + 1 < h.size(); ++k) {
        const double a = h[2 * k], b = h[2 * k + 1];
        const double c = r[2 * k], d = r[2 * k + 1];
        const double e = t[2 * k], f = t[2 * k + 1];
        row[k] = e * (a * c - b * d) + f * (a * d + b * c);
      }
      return;
    case Scorer::RotatE:
      for (Index k = 0; 2 * k + 1 < h.size(); ++k) {
        const double a = h[2 * k], b = h[2 * k + 1];
        const double c = r[2 * k], d = r[2 * k + 1];
        const double ur = a * c - b * d - t[2 * k];
        const double ui = a * d + b * c - t[2 * k + 1];
        row[k] = -std::sqrt(ur * ur + ui * ui);
      }
      return;
  }
  throw ContractError("unreachable scorer");
}

// Accumulates upstream-weighted partials of one contribution row into the
// resolved embedding gradients. `upstream` has one entry per aggregate dim.
void contribution_backward(const KgeConfig& config, const Vector& h,
                           const Vector& r, const Vector& t,
                           const Vector& upstream, Vector& dh, Vector& dr,
                           Vector& dt) {
  switch (config.scorer) {
    case Scorer::TransE: {
      const Vector delta = h + r - t;
      for (Index j = 0; j < delta.size(); ++j) {
        double dd;  // d(contribution_j)/d(delta_j)
        if (config.norm_p == 1) {
          dd = delta[j] > 0 ? -1.0 : (delta[j] < 0 ? 1.0 : 0.0);
        } else {
          dd = -2.0 * delta[j];
        }
        const double u = upstream[j] * dd;
        dh[j] += u;
        dr[j] += u;
        dt[j] -= u;
      }
      return;
    }
    case Scorer::DistMult:
      dh.array() += upstream.array() * r.array() * t.array();
      dr.array() += upstream.array() * h.array() * t.array();
      dt.array() += upstream.array() * h.array() * r.array();
      return;
    case Scorer::ComplEx:
      for (Index k = 0; 2 * k + 1 < h.size(); ++k) {
        const double a = h[2 * k], b = h[2 * k + 1];
        const double c = r[2 * k], d = r[2 * k + 1];
        const double e = t[2 * k], f = t[2 * k + 1];
        const double u = upstream[k];
        dh[2 * k] += u * (c * e + d * f);
        dh[2 * k + 1] += u * (-d * e + c * f);
        dr[2 * k] += u * (a * e + b * f);
        dr[2 * k + 1] += u * (-b * e + a * f);
        dt[2 * k] += u * (a * c - b * d);
        dt[2 * k + 1] += u * (a * d + b * c);
      }
      return;
    case Scorer::RotatE:
      for (Index k = 0; 2 * k + 1 < h.size(); ++k) {
        const double a = h[2 * k], b = h[2 * k + 1];
        const double c = r[2 * k], d = r[2 * k + 1];
        const double ur = a * c - b * d - t[2 * k];
        const double ui = a * d + b * c - t[2 * k + 1];
        const double modulus = std::sqrt(ur * ur + ui * ui);
        if (modulus < kTiny) continue;  // subgradient 0 at the kink
        const double dur = upstream[k] * (-ur / modulus);
        const double dui = upstream[k] * (-ui / modulus);
        dh[2 * k] += dur * c + dui * d;
        dh[2 * k + 1] += -dur * d + dui * c;
        dr[2 * k] += dur * a + dui * b;
        dr[2 * k + 1] += -dur * b + dui * a;
        dt[2 * k] -= dur;
        dt[2 * k + 1] -= dui;
      }
      return;
  }
  throw ContractError("unreachable scorer");
}

}  // namespace

Matrix per_dim_contributions(const KgeModel& model, const KnowledgeGraph& graph,
                             std::span<const Triple> triples) {
  if (triples.empty()) {
    throw ContractError("per_dim_contributions: empty triple list");
  }
  const int ds = model.config.aggregate_dim();
  Matrix X(static_cast<Index>(triples.size()), ds);
  for (size_t i = 0; i < triples.size(); ++i) {
    const Triple& tr = triples[i];
    const Vector h = model.entity_embedding(graph, tr.head);
    const Vector r = model.relation_embedding(graph, tr.relation);
    const Vector t = model.entity_embedding(graph, tr.tail);
    contribution_row(model.config, h, r, t, X.row(static_cast<Index>(i)));
  }
  return X;
}

Vector aggregate(const Matrix& contributions, Aggregate kind) {
  if (contributions.rows() < 1) {
    throw ContractError("aggregate: need at least one row");
  }
  switch (kind) {
    case Aggregate::Mean:
      return contributions.colwise().mean().transpose();
    case Aggregate::Sum:
      return contributions.colwise().sum().transpose();
    case Aggregate::ColumnNorm:
      return -contributions.colwise().norm().transpose();
  }
  throw ContractError("unreachable aggregate");
}

Projector Projector::init(int llm_dim, int aggregate_dim, std::uint64_t seed) {
  if (llm_dim < 1 || aggregate_dim < 1) {
    throw ConfigError("projector: dimensions must be positive");
  }
  Projector p;
  const double bound = 6.0 / std::sqrt(static_cast<double>(aggregate_dim));
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  p.W.resize(llm_dim, aggregate_dim);
  for (Index i = 0; i < p.W.rows(); ++i) {
    for (Index j = 0; j < p.W.cols(); ++j) p.W(i, j) = uniform(rng);
  }
  p.b = Vector::Zero(llm_dim);
  return p;
}

SoftToken project(const Projector& projector, const Vector& s) {
  if (projector.W.cols() != s.size()) {
    throw ConfigError("project: aggregate dim " + std::to_string(s.size()) +
                      " does not match projector columns " +
                      std::to_string(projector.W.cols()));
  }
  return SoftToken{projector.W * s + projector.b};
}

SoftToken encode_graph(const KgeModel& model, const Projector& projector,
                       const KnowledgeGraph& graph) {
  if (graph.triples.empty()) {
    throw ContractError("encode_graph: graph " + graph.graph_id +
                        " has no triples");
  }
  const Matrix X = per_dim_contributions(model, graph, graph.triples);
  return project(projector, aggregate(X, model.config.aggregate));
}

KgeGradients KgeGradients::zeros(const KgeModel& model,
                                 const Projector& projector) {
  KgeGradients g;
  g.entity_table = Matrix::Zero(model.entity_table.rows(), model.entity_table.cols());
  g.relation_table =
      Matrix::Zero(model.relation_table.rows(), model.relation_table.cols());
  g.proj_w = Matrix::Zero(projector.W.rows(), projector.W.cols());
  g.proj_b = Vector::Zero(projector.b.size());
  return g;
}

void KgeGradients::add(const KgeGradients& other) {
  entity_table += other.entity_table;
  relation_table += other.relation_table;
  proj_w += other.proj_w;
  proj_b += other.proj_b;
}

void KgeGradients::scale(double factor) {
  entity_table *= factor;
  relation_table *= factor;
  proj_w *= factor;
  proj_b *= factor;
}

void encode_graph_backward(const KgeModel& model, const Projector& projector,
                           const KnowledgeGraph& graph,
                           const Vector& d_soft_token, KgeGradients& grads) {
  if (graph.triples.empty()) {
    throw ContractError("encode_graph_backward: graph has no triples");
  }
  const Matrix X = per_dim_contributions(model, graph, graph.triples);
  const Vector s = aggregate(X, model.config.aggregate);

  grads.proj_b += d_soft_token;
  grads.proj_w += d_soft_token * s.transpose();
  const Vector ds = projector.W.transpose() * d_soft_token;

  const Index n = X.rows();
  const int d = model.config.dim;
  Vector dh(d), dr(d), dt(d);
  for (Index i = 0; i < n; ++i) {
    // d(loss)/d(X_ij) per aggregate dim j.
    Vector upstream(ds.size());
    switch (model.config.aggregate) {
      case Aggregate::Mean:
        upstream = ds / static_cast<double>(n);
        break;
      case Aggregate::Sum:
        upstream = ds;
        break;
      case Aggregate::ColumnNorm:
        for (Index j = 0; j < ds.size(); ++j) {
          const double sj = s[j];
          upstream[j] = std::abs(sj) < kTiny ? 0.0 : ds[j] * X(i, j) / sj;
        }
        break;
    }
    const Triple& tr = graph.triples[static_cast<size_t>(i)];
    const Vector h = model.entity_embedding(graph, tr.head);
    const Vector r = model.relation_embedding(graph, tr.relation);
    const Vector t = model.entity_embedding(graph, tr.tail);
    dh.setZero();
    dr.setZero();
    dt.setZero();
    contribution_backward(model.config, h, r, t, upstream, dh, dr, dt);
    grads.entity_table.row(model.vocab.label_bucket(graph.label_of(tr.head))) +=
        dh.transpose();
    grads.entity_table.row(model.vocab.label_bucket(graph.label_of(tr.tail))) +=
        dt.transpose();
    grads.relation_table.row(
        model.vocab.relation_bucket(graph.relation_name(tr.relation))) +=
        dr.transpose();
  }
}

void score_backward(const KgeModel& model, const KnowledgeGraph& graph,
                    const Triple& triple, double upstream, KgeGradients& grads) {
  const Vector h = model.entity_embedding(graph, triple.head);
  const Vector r = model.relation_embedding(graph, triple.relation);
  const Vector t = model.entity_embedding(graph, triple.tail);
  const int ds = model.config.aggregate_dim();

  // d(score)/d(contribution_j) for the scorer's row reduction.
  Vector upstream_per_dim(ds);
  switch (model.config.scorer) {
    case Scorer::TransE: {
      if (model.config.norm_p == 1) {
        upstream_per_dim.setConstant(upstream);
      } else {
        const double dist = (h + r - t).norm();
        upstream_per_dim.setConstant(
            dist < kTiny ? 0.0 : upstream / (2.0 * dist));
      }
      break;
    }
    case Scorer::DistMult:
    case Scorer::ComplEx:
      upstream_per_dim.setConstant(upstream);
      break;
    case Scorer::RotatE: {
      Eigen::RowVectorXd row(ds);
      contribution_row(model.config, h, r, t, row);
      const double norm = row.norm();
      if (norm < kTiny) {
        upstream_per_dim.setZero();
      } else {
        upstream_per_dim = upstream * (-row.transpose() / norm);
      }
      break;
    }
  }

  const int d = model.config.dim;
  Vector dh = Vector::Zero(d), dr = Vector::Zero(d), dt = Vector::Zero(d);
  contribution_backward(model.config, h, r, t, upstream_per_dim, dh, dr, dt);
  grads.entity_table.row(model.vocab.label_bucket(graph.label_of(triple.head))) +=
      dh.transpose();
  grads.entity_table.row(model.vocab.label_bucket(graph.label_of(triple.tail))) +=
      dt.transpose();
  grads.relation_table.row(
      model.vocab.relation_bucket(graph.relation_name(triple.relation))) +=
      dr.transpose();
}

void enforce_constraints(KgeModel& model) {
  if (model.config.normalize_entities_effective()) {
    for (Index i = 0; i < model.entity_table.rows(); ++i) {
      const double norm = model.entity_table.row(i).norm();
      if (norm > kTiny) model.entity_table.row(i) /= norm;
    }
  }
  if (model.config.scorer == Scorer::RotatE) {
    for (Index i = 0; i < model.relation_table.rows(); ++i) {
      for (int k = 0; 2 * k + 1 < model.config.dim; ++k) {
        const double re = model.relation_table(i, 2 * k);
        const double im = model.relation_table(i, 2 * k + 1);
        const double modulus = std::sqrt(re * re + im * im);
        if (modulus > kTiny) {
          model.relation_table(i, 2 * k) = re / modulus;
          model.relation_table(i, 2 * k + 1) = im / modulus;
        } else {
          model.relation_table(i, 2 * k) = 1.0;
          model.relation_table(i, 2 * k + 1) = 0.0;
        }
      }
    }
  }
}

KgeModel margin_rank_pretrain(KgeModel model,
                              std::span<const KnowledgeGraph> graphs, int steps,
                              std::uint64_t seed, const LionConfig& lion) {
  if (steps < 0) throw ConfigError("margin_rank_pretrain: steps must be >= 0");
  if (steps == 0) return model;
  if (graphs.empty()) throw ConfigError("margin_rank_pretrain: no graphs");
  lion.validate();

  Rng rng(seed);
  std::uniform_int_distribution<size_t> graph_dist(0, graphs.size() - 1);
  std::uniform_int_distribution<int> coin(0, 1);

  Matrix m_entity = Matrix::Zero(model.entity_table.rows(), model.entity_table.cols());
  Matrix m_relation =
      Matrix::Zero(model.relation_table.rows(), model.relation_table.cols());
  Projector unused;
  unused.W = Matrix::Zero(1, 1);
  unused.b = Vector::Zero(1);

  for (int step = 0; step < steps; ++step) {
    const KnowledgeGraph& graph = graphs[graph_dist(rng)];
    if (graph.triples.empty()) continue;
    std::uniform_int_distribution<size_t> triple_dist(0, graph.triples.size() - 1);
    std::uniform_int_distribution<int> entity_dist(0, graph.node_count() - 1);
    const Triple positive = graph.triples[triple_dist(rng)];

    KgeGradients grads = KgeGradients::zeros(model, unused);
    bool any_active = false;
    for (int neg = 0; neg < model.config.negatives_per_positive; ++neg) {
      Triple corrupted = positive;
      bool found = false;
      for (int attempt = 0; attempt < 32; ++attempt) {
        corrupted = positive;
        if (coin(rng) == 0) {
          corrupted.head = entity_dist(rng);
        } else {
          corrupted.tail = entity_dist(rng);
        }
        if (corrupted == positive || corrupted.head == corrupted.tail) continue;
        if (graph.has_triple(corrupted.head, corrupted.relation, corrupted.tail)) {
          continue;  // accidental positive
        }
        found = true;
        break;
      }
      if (!found) continue;
      const double pos_score = score(model, graph, positive);
      const double neg_score = score(model, graph, corrupted);
      if (model.config.margin + neg_score - pos_score > 0) {
        // d(hinge)/d(neg_score) = +1, d(hinge)/d(pos_score) = -1
        score_backward(model, graph, corrupted, 1.0, grads);
        score_backward(model, graph, positive, -1.0, grads);
        any_active = true;
      }
    }
    if (any_active) {
      lion_step(model.entity_table, grads.entity_table, m_entity, lion);
      lion_step(model.relation_table, grads.relation_table, m_relation, lion);
      enforce_constraints(model);
    }
  }
  return model;
}

void save_kge(const std::string& path, const KgeModel& model,
              const Projector& projector) {
  nlohmann::ordered_json header;
  header["kind"] = "kge";
  header["scorer"] = scorer_name(model.config.scorer);
  header["d"] = model.config.dim;
  header["d_llm"] = projector.W.rows();
  header["norm_p"] = model.config.norm_p;
  header["normalize_entities"] = model.config.normalize_entities_effective();
  header["margin"] = model.config.margin;
  header["negatives_per_positive"] = model.config.negatives_per_positive;
  header["aggregate"] = aggregate_name(model.config.aggregate);
  header["id_encoding_scale"] = model.config.id_encoding_scale;
  header["labels"] = model.vocab.labels;
  header["relations"] = model.vocab.relations;
  header["vocab_digest"] = model.vocab.digest();
  write_checkpoint(path, std::move(header),
                   {{"entity_table", model.entity_table},
                    {"relation_table", model.relation_table},
                    {"proj_w", projector.W},
                    {"proj_b", projector.b}});
}

std::pair<KgeModel, Projector> load_kge(const std::string& path) {
  const Checkpoint cp = read_checkpoint(path, "kge");
  KgeModel model;
  model.config.scorer = parse_scorer(cp.header.at("scorer").get<std::string>());
  model.config.dim = cp.header.at("d").get<int>();
  model.config.norm_p = cp.header.at("norm_p").get<int>();
  model.config.normalize_entities = cp.header.at("normalize_entities").get<bool>();
  model.config.margin = cp.header.at("margin").get<double>();
  model.config.negatives_per_positive =
      cp.header.at("negatives_per_positive").get<int>();
  model.config.aggregate =
      parse_aggregate(cp.header.at("aggregate").get<std::string>());
  model.config.id_encoding_scale = cp.header.at("id_encoding_scale").get<double>();
  model.config.validate();
  model.vocab = KgeVocab::from_lists(
      cp.header.at("labels").get<std::vector<std::string>>(),
      cp.header.at("relations").get<std::vector<std::string>>());
  const std::string expected_digest = cp.header.at("vocab_digest").get<std::string>();
  if (model.vocab.digest() != expected_digest) {
    throw ConfigError("kge checkpoint vocab digest mismatch in " + path);
  }
  model.entity_table = cp.tensor("entity_table");
  model.relation_table = cp.tensor("relation_table");
  Projector projector;
  projector.W = cp.tensor("proj_w");
  projector.b = cp.tensor("proj_b").col(0);
  if (model.entity_table.rows() != static_cast<Index>(model.vocab.labels.size()) ||
      model.entity_table.cols() != model.config.dim ||
      model.relation_table.rows() !=
          static_cast<Index>(model.vocab.relations.size()) ||
      model.relation_table.cols() != model.config.dim ||
      projector.W.cols() != model.config.aggregate_dim() ||
      projector.b.size() != projector.W.rows()) {
    throw ConfigError("kge checkpoint tensor shapes are inconsistent in " + path);
  }
  return {std::move(model), std::move(projector)};
}

}  // namespace kgst
