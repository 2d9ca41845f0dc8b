#include "kgst/lm.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <thread>

#include "kgst/checkpoint.hpp"
#include "kgst/digest.hpp"

namespace kgst {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

double gelu(double x) {
  const double inner = kGeluC * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_grad(double x) {
  const double inner = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  const double sech2 = 1.0 - t * t;
  return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

Matrix layer_norm(const Matrix& x, const Eigen::RowVectorXd& gain,
                  const Eigen::RowVectorXd& bias) {
  Matrix y(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    y.row(i) = ((x.row(i).array() - mean) * inv) * gain.array() + bias.array();
  }
  return y;
}

// dx for y = LN(x) * gain + bias; accumulates dgain/dbias when given.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& x,
                           const Eigen::RowVectorXd& gain,
                           Eigen::RowVectorXd* dgain,
                           Eigen::RowVectorXd* dbias) {
  Matrix dx(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    const Eigen::ArrayXd xhat = (x.row(i).array() - mean) * inv;
    const Eigen::ArrayXd dxhat = dy.row(i).array() * gain.array();
    if (dgain) dgain->array() += dy.row(i).array() * xhat.transpose();
    if (dbias) dbias->array() += dy.row(i).array();
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = (dxhat * xhat.transpose()).mean();
    dx.row(i) =
        (inv * (dxhat.transpose() - mean_dxhat - xhat.transpose() * mean_dxhat_xhat))
            .matrix();
  }
  return dx;
}

}  // namespace

void LmConfig::validate() const {
  if (d_model < 1 || n_layers < 1 || n_heads < 1 || ff_mult < 1 || context < 2) {
    throw ConfigError("lm: all dimensions must be positive, context >= 2");
  }
  if (d_model % n_heads != 0) {
    throw ConfigError("lm: d_model must be divisible by n_heads");
  }
}

EmbeddedSeq EmbeddedSeq::from_input(const InputSequence& input) {
  EmbeddedSeq seq;
  const size_t total = input.token_ids.size() + (input.has_injection() ? 1 : 0);
  if (input.has_injection() &&
      static_cast<size_t>(input.injection_pos) > input.token_ids.size()) {
    throw ContractError("injection position out of bounds");
  }
  size_t next_token = 0;
  for (size_t p = 0; p < total; ++p) {
    if (input.has_injection() && p == static_cast<size_t>(input.injection_pos)) {
      seq.append_vector(input.injected);
    } else {
      seq.append_token(input.token_ids[next_token++]);
    }
  }
  return seq;
}

FrozenLm::FrozenLm(LmConfig config, Tokenizer tokenizer, std::uint64_t seed)
    : config_(config), tokenizer_(std::move(tokenizer)) {
  config_.validate();
  const Index v = tokenizer_.vocab_size();
  const Index d = config_.d_model;
  const Index ff = config_.ff_dim();
  auto add = [this](const std::string& name, Index rows, Index cols) {
    TensorSpec spec;
    spec.name = name;
    spec.rows = rows;
    spec.cols = cols;
    spec.offset = specs_.empty()
                      ? 0
                      : specs_.back().offset +
                            static_cast<size_t>(specs_.back().rows * specs_.back().cols);
    specs_.push_back(spec);
  };
  add("emb", v, d);
  add("pos", config_.context, d);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    add(p + "ln1_g", 1, d);
    add(p + "ln1_b", 1, d);
    add(p + "qkv_w", d, 3 * d);
    add(p + "qkv_b", 1, 3 * d);
    add(p + "attn_w", d, d);
    add(p + "attn_b", 1, d);
    add(p + "ln2_g", 1, d);
    add(p + "ln2_b", 1, d);
    add(p + "fc_w", d, ff);
    add(p + "fc_b", 1, ff);
    add(p + "fc2_w", ff, d);
    add(p + "fc2_b", 1, d);
  }
  add("lnf_g", 1, d);
  add("lnf_b", 1, d);
  const TensorSpec& last = specs_.back();
  params_ = Vector::Zero(
      static_cast<Index>(last.offset + static_cast<size_t>(last.rows * last.cols)));
  init_parameters(seed);
}

void FrozenLm::init_parameters(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  const double residual_scale = 1.0 / std::sqrt(2.0 * config_.n_layers);
  for (const TensorSpec& spec : specs_) {
    auto view = Eigen::Map<Matrix>(params_.data() + spec.offset, spec.rows, spec.cols);
    if (spec.name.ends_with("_b") || spec.name == "pos") {
      // biases zero, positions small-normal
      if (spec.name == "pos") {
        for (Index i = 0; i < view.size(); ++i) view.data()[i] = normal(rng);
      } else {
        view.setZero();
      }
    } else if (spec.name.ends_with("ln1_g") || spec.name.ends_with("ln2_g") ||
               spec.name == "lnf_g") {
      view.setOnes();
    } else {
      for (Index i = 0; i < view.size(); ++i) view.data()[i] = normal(rng);
      // residual-path projections start smaller, as usual for deep stacks
      if (spec.name.ends_with("attn_w") || spec.name.ends_with("fc2_w")) {
        view *= residual_scale;
      }
    }
  }
}

Eigen::Map<const Matrix> FrozenLm::tensor(const std::string& name) const {
  for (const TensorSpec& spec : specs_) {
    if (spec.name == name) {
      return {params_.data() + spec.offset, spec.rows, spec.cols};
    }
  }
  throw LookupError("lm tensor not found: " + name);
}

Eigen::Map<Matrix> FrozenLm::tensor_mut(const std::string& name) {
  for (const TensorSpec& spec : specs_) {
    if (spec.name == name) {
      return {params_.data() + spec.offset, spec.rows, spec.cols};
    }
  }
  throw LookupError("lm tensor not found: " + name);
}

void FrozenLm::set_tensor(const std::string& name, const Matrix& value) {
  if (frozen_) {
    throw ContractError("frozen-violation: set_tensor on a frozen model");
  }
  auto view = tensor_mut(name);
  if (view.rows() != value.rows() || view.cols() != value.cols()) {
    throw ContractError("set_tensor: shape mismatch for " + name);
  }
  view = value;
}

void FrozenLm::nudge_parameter(Index flat_index, double delta) {
  if (frozen_) {
    throw ContractError("frozen-violation: nudge_parameter on a frozen model");
  }
  if (flat_index < 0 || flat_index >= params_.size()) {
    throw LookupError("parameter index out of range");
  }
  params_[flat_index] += delta;
}

std::string FrozenLm::weight_digest() const {
  Sha256 h;
  h.update_f64(params_.data(), static_cast<size_t>(params_.size()));
  return h.hex();
}

void FrozenLm::freeze() {
  if (frozen_) return;
  frozen_ = true;
  frozen_digest_ = weight_digest();
}

Matrix FrozenLm::embed(const EmbeddedSeq& seq) const {
  const Index t = static_cast<Index>(seq.size());
  if (t == 0) throw ContractError("lm: empty input sequence");
  if (t > config_.context) {
    throw ContextWindowError("sequence length " + std::to_string(t) +
                             " exceeds context " + std::to_string(config_.context));
  }
  const auto emb = tensor("emb");
  const auto pos = tensor("pos");
  Matrix x0(t, config_.d_model);
  size_t slot = 0;
  for (Index p = 0; p < t; ++p) {
    const int id = seq.ids[static_cast<size_t>(p)];
    if (id == -1) {
      const Vector& v = seq.vectors.at(slot++);
      if (v.size() != config_.d_model) {
        throw ContractError("injected vector has wrong dimension");
      }
      x0.row(p) = v.transpose() + pos.row(p);
    } else {
      if (id < 0 || id >= tokenizer_.vocab_size()) {
        throw LookupError("token id out of range: " + std::to_string(id));
      }
      x0.row(p) = emb.row(id) + pos.row(p);
    }
  }
  if (slot != seq.vectors.size()) {
    throw ContractError("embedded sequence has unused injected vectors");
  }
  return x0;
}

struct FrozenLm::Cache {
  Matrix x0;
  struct Layer {
    Matrix x_in;
    Matrix ln1_out;
    Matrix qkv;
    std::vector<Matrix> att;  // per head, T x T
    Matrix att_concat;
    Matrix x_mid;
    Matrix ln2_out;
    Matrix fc_pre;   // before GELU
    Matrix fc_act;   // after GELU
  };
  std::vector<Layer> layers;
  Matrix final_x;  // input of the final layer norm
};

Matrix FrozenLm::forward_states(const Matrix& x0, Cache* cache) const {
  const Index t = x0.rows();
  const Index d = config_.d_model;
  const int heads = config_.n_heads;
  const Index hs = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hs));

  Matrix x = x0;
  if (cache) {
    cache->x0 = x0;
    cache->layers.resize(static_cast<size_t>(config_.n_layers));
  }
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "l" + std::to_string(l) + ".";
    const auto ln1_g = tensor(p + "ln1_g"), ln1_b = tensor(p + "ln1_b");
    const auto qkv_w = tensor(p + "qkv_w"), qkv_b = tensor(p + "qkv_b");
    const auto attn_w = tensor(p + "attn_w"), attn_b = tensor(p + "attn_b");
    const auto ln2_g = tensor(p + "ln2_g"), ln2_b = tensor(p + "ln2_b");
    const auto fc_w = tensor(p + "fc_w"), fc_b = tensor(p + "fc_b");
    const auto fc2_w = tensor(p + "fc2_w"), fc2_b = tensor(p + "fc2_b");

    Cache::Layer* lc = cache ? &cache->layers[static_cast<size_t>(l)] : nullptr;
    if (lc) lc->x_in = x;

    Matrix ln1 = layer_norm(x, ln1_g.row(0), ln1_b.row(0));
    Matrix qkv = ln1 * qkv_w;
    qkv.rowwise() += qkv_b.row(0);

    Matrix att_concat(t, d);
    std::vector<Matrix> att_store;
    if (lc) att_store.resize(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      const auto q = qkv.middleCols(h * hs, hs);
      const auto k = qkv.middleCols(d + h * hs, hs);
      const auto v = qkv.middleCols(2 * d + h * hs, hs);
      Matrix scores = (q * k.transpose()) * scale;
      Matrix att = Matrix::Zero(t, t);
      for (Index i = 0; i < t; ++i) {
        const Index valid = i + 1;
        const double m = scores.row(i).head(valid).maxCoeff();
        Eigen::ArrayXd e = (scores.row(i).head(valid).array() - m).exp();
        att.row(i).head(valid) = (e / e.sum()).matrix();
      }
      att_concat.middleCols(h * hs, hs) = att * v;
      if (lc) att_store[static_cast<size_t>(h)] = std::move(att);
    }
    Matrix attn_out = att_concat * attn_w;
    attn_out.rowwise() += attn_b.row(0);
    Matrix x_mid = x + attn_out;

    Matrix ln2 = layer_norm(x_mid, ln2_g.row(0), ln2_b.row(0));
    Matrix fc_pre = ln2 * fc_w;
    fc_pre.rowwise() += fc_b.row(0);
    Matrix fc_act = fc_pre.unaryExpr([](double v) { return gelu(v); });
    Matrix mlp_out = fc_act * fc2_w;
    mlp_out.rowwise() += fc2_b.row(0);
    Matrix x_out = x_mid + mlp_out;

    if (lc) {
      lc->ln1_out = std::move(ln1);
      lc->qkv = std::move(qkv);
      lc->att = std::move(att_store);
      lc->att_concat = std::move(att_concat);
      lc->x_mid = x_mid;
      lc->ln2_out = std::move(ln2);
      lc->fc_pre = std::move(fc_pre);
      lc->fc_act = std::move(fc_act);
    }
    x = std::move(x_out);
  }
  if (cache) cache->final_x = x;
  return layer_norm(x, tensor("lnf_g").row(0), tensor("lnf_b").row(0));
}

Matrix FrozenLm::forward(const InputSequence& input) const {
  return forward(EmbeddedSeq::from_input(input));
}

Matrix FrozenLm::forward(const EmbeddedSeq& seq) const {
  const Matrix states = forward_states(embed(seq), nullptr);
  Matrix logits = states * tensor("emb").transpose();
  for (Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    logits.row(i).array() -= lse;
  }
  return logits;
}

double FrozenLm::loss_rows(
    const Matrix& states, const EmbeddedSeq& seq, std::span<const int> target_ids,
    std::vector<std::pair<Index, Vector>>* dlogit_rows) const {
  const Index t = states.rows();
  const Index k = static_cast<Index>(target_ids.size());
  if (k == 0) return 0.0;
  if (k > t - 1) {
    throw ContractError("target span longer than the predictable suffix");
  }
  for (Index j = 0; j < k; ++j) {
    const size_t pos = static_cast<size_t>(t - k + j);
    if (seq.ids[pos] != target_ids[static_cast<size_t>(j)]) {
      throw ContractError("target_ids do not match the sequence tail");
    }
  }
  const auto emb = tensor("emb");
  double loss = 0;
  for (Index j = 0; j < k; ++j) {
    const Index row = t - k + j - 1;
    const int target = target_ids[static_cast<size_t>(j)];
    Vector logits = emb * states.row(row).transpose();  // V
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    loss += lse - logits[target];
    if (dlogit_rows) {
      Vector soft = (logits.array() - lse).exp();
      soft[target] -= 1.0;
      dlogit_rows->emplace_back(row, std::move(soft));
    }
  }
  return loss;
}

void FrozenLm::backward(const EmbeddedSeq& seq, const Cache& cache,
                        const std::vector<std::pair<Index, Vector>>& dlogit_rows,
                        Vector* param_grads,
                        std::vector<Vector>* injected_grads) const {
  const Index t = static_cast<Index>(seq.size());
  const Index d = config_.d_model;
  const int heads = config_.n_heads;
  const Index hs = config_.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hs));
  const auto emb = tensor("emb");

  auto grad_view = [&](const std::string& name) -> Eigen::Map<Matrix> {
    for (const TensorSpec& spec : specs_) {
      if (spec.name == name) {
        return {param_grads->data() + spec.offset, spec.rows, spec.cols};
      }
    }
    throw LookupError("lm tensor not found: " + name);
  };

  const Matrix states =
      layer_norm(cache.final_x, tensor("lnf_g").row(0), tensor("lnf_b").row(0));

  Matrix dstates = Matrix::Zero(t, d);
  for (const auto& [row, drow] : dlogit_rows) {
    dstates.row(row) = drow.transpose() * emb;
    if (param_grads) {
      grad_view("emb") += drow * states.row(row);
    }
  }

  Matrix dx;
  {
    Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(d);
    Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(d);
    dx = layer_norm_backward(dstates, cache.final_x, tensor("lnf_g").row(0),
                             param_grads ? &dg : nullptr,
                             param_grads ? &db : nullptr);
    if (param_grads) {
      grad_view("lnf_g") += dg;
      grad_view("lnf_b") += db;
    }
  }

  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const std::string p = "l" + std::to_string(l) + ".";
    const Cache::Layer& lc = cache.layers[static_cast<size_t>(l)];
    const auto qkv_w = tensor(p + "qkv_w");
    const auto attn_w = tensor(p + "attn_w");
    const auto fc_w = tensor(p + "fc_w");
    const auto fc2_w = tensor(p + "fc2_w");

    // MLP path: x_out = x_mid + gelu(ln2(x_mid) fc_w + fc_b) fc2_w + fc2_b
    Matrix dfc_act = dx * fc2_w.transpose();
    if (param_grads) {
      grad_view(p + "fc2_w") += lc.fc_act.transpose() * dx;
      grad_view(p + "fc2_b") += dx.colwise().sum();
    }
    Matrix dfc_pre =
        dfc_act.array() * lc.fc_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
    Matrix dln2 = dfc_pre * fc_w.transpose();
    if (param_grads) {
      grad_view(p + "fc_w") += lc.ln2_out.transpose() * dfc_pre;
      grad_view(p + "fc_b") += dfc_pre.colwise().sum();
    }
    {
      Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(d);
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(d);
      Matrix dpath = layer_norm_backward(dln2, lc.x_mid, tensor(p + "ln2_g").row(0),
                                         param_grads ? &dg : nullptr,
                                         param_grads ? &db : nullptr);
      if (param_grads) {
        grad_view(p + "ln2_g") += dg;
        grad_view(p + "ln2_b") += db;
      }
      dx += dpath;
    }

    // Attention path: x_mid = x_in + (concat heads) attn_w + attn_b
    Matrix dconcat = dx * attn_w.transpose();
    if (param_grads) {
      grad_view(p + "attn_w") += lc.att_concat.transpose() * dx;
      grad_view(p + "attn_b") += dx.colwise().sum();
    }
    Matrix dqkv = Matrix::Zero(t, 3 * d);
    for (int h = 0; h < heads; ++h) {
      const auto q = lc.qkv.middleCols(h * hs, hs);
      const auto k = lc.qkv.middleCols(d + h * hs, hs);
      const auto v = lc.qkv.middleCols(2 * d + h * hs, hs);
      const Matrix& att = lc.att[static_cast<size_t>(h)];
      const auto dO = dconcat.middleCols(h * hs, hs);
      Matrix dAtt = dO * v.transpose();
      dqkv.middleCols(2 * d + h * hs, hs) = att.transpose() * dO;
      Matrix dScores = Matrix::Zero(t, t);
      for (Index i = 0; i < t; ++i) {
        const Index valid = i + 1;
        const auto a = att.row(i).head(valid).array();
        const auto da = dAtt.row(i).head(valid).array();
        const double dot = (a * da).sum();
        dScores.row(i).head(valid) = (a * (da - dot)).matrix() * scale;
      }
      dqkv.middleCols(h * hs, hs) = dScores * k;
      dqkv.middleCols(d + h * hs, hs) = dScores.transpose() * q;
    }
    Matrix dln1 = dqkv * qkv_w.transpose();
    if (param_grads) {
      grad_view(p + "qkv_w") += lc.ln1_out.transpose() * dqkv;
      grad_view(p + "qkv_b") += dqkv.colwise().sum();
    }
    {
      Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(d);
      Eigen::RowVectorXd db = Eigen::RowVectorXd::Zero(d);
      Matrix dpath = layer_norm_backward(dln1, lc.x_in, tensor(p + "ln1_g").row(0),
                                         param_grads ? &dg : nullptr,
                                         param_grads ? &db : nullptr);
      if (param_grads) {
        grad_view(p + "ln1_g") += dg;
        grad_view(p + "ln1_b") += db;
      }
      dx += dpath;
    }
  }

  if (injected_grads) {
    injected_grads->clear();
  }
  size_t slot = 0;
  for (Index pos = 0; pos < t; ++pos) {
    const int id = seq.ids[static_cast<size_t>(pos)];
    if (id == -1) {
      if (injected_grads) injected_grads->push_back(dx.row(pos).transpose());
      ++slot;
    } else if (param_grads) {
      grad_view("emb").row(id) += dx.row(pos);
    }
    if (param_grads) {
      grad_view("pos").row(pos) += dx.row(pos);
    }
  }
  (void)slot;
}

double FrozenLm::sequence_nll(const EmbeddedSeq& seq,
                              std::span<const int> target_ids) const {
  const Matrix states = forward_states(embed(seq), nullptr);
  return loss_rows(states, seq, target_ids, nullptr);
}

std::vector<Vector> FrozenLm::injection_gradients(const EmbeddedSeq& seq,
                                                  std::span<const int> target_ids,
                                                  double* nll_out) const {
  if (!frozen_) {
    throw ContractError("injection gradients require a frozen model");
  }
  if (seq.vectors.empty()) {
    throw ContractError("no injected vector present in the input");
  }
  Cache cache;
  const Matrix states = forward_states(embed(seq), &cache);
  std::vector<std::pair<Index, Vector>> dlogit_rows;
  const double loss = loss_rows(states, seq, target_ids, &dlogit_rows);
  if (nll_out) *nll_out = loss;
  std::vector<Vector> grads;
  backward(seq, cache, dlogit_rows, nullptr, &grads);
  return grads;
}

Vector FrozenLm::grad_wrt_injection(const InputSequence& input,
                                    std::span<const int> target_ids) const {
  if (!input.has_injection()) {
    throw ContractError("grad_wrt_injection: input has no injection");
  }
  return injection_gradients(EmbeddedSeq::from_input(input), target_ids).at(0);
}

std::string FrozenLm::greedy_decode(const EmbeddedSeq& prefix, int max_len) const {
  EmbeddedSeq seq = prefix;
  std::vector<int> emitted;
  const auto emb = tensor("emb");
  for (int step = 0; step < max_len; ++step) {
    if (static_cast<Index>(seq.size()) >= config_.context) break;
    const Matrix states = forward_states(embed(seq), nullptr);
    const Vector logits = emb * states.row(states.rows() - 1).transpose();
    Index best = 0;
    logits.maxCoeff(&best);  // first maximum, so ties break to the lowest id
    if (best == Tokenizer::kEos) break;
    emitted.push_back(static_cast<int>(best));
    seq.append_token(static_cast<int>(best));
  }
  return tokenizer_.decode(emitted);
}

double FrozenLm::batch_loss_and_param_grads(
    std::span<const std::vector<int>> batch, Vector& grad_out, int threads) const {
  if (frozen_) {
    throw ContractError("frozen-violation: parameter gradients on a frozen model");
  }
  if (batch.empty()) throw ContractError("empty pretraining batch");
  grad_out = Vector::Zero(params_.size());
  std::vector<Vector> per_example(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<long> tokens(batch.size(), 0);
  parallel_for(batch.size(), threads, [&](size_t i) {
    const std::vector<int>& ids = batch[i];
    if (ids.size() < 2) throw ContractError("pretraining record shorter than 2 tokens");
    EmbeddedSeq seq;
    seq.ids = ids;
    const std::span<const int> targets(ids.data() + 1, ids.size() - 1);
    Cache cache;
    const Matrix states = forward_states(embed(seq), &cache);
    std::vector<std::pair<Index, Vector>> dlogit_rows;
    losses[i] = loss_rows(states, seq, targets, &dlogit_rows);
    tokens[i] = static_cast<long>(targets.size());
    per_example[i] = Vector::Zero(params_.size());
    backward(seq, cache, dlogit_rows, &per_example[i], nullptr);
  });
  double total_loss = 0;
  long total_tokens = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    grad_out += per_example[i];
    total_loss += losses[i];
    total_tokens += tokens[i];
  }
  grad_out /= static_cast<double>(total_tokens);
  return total_loss / static_cast<double>(total_tokens);
}

void FrozenLm::adam_step(const Vector& grads, Vector& m, Vector& v, int step,
                         double lr, double beta1, double beta2, double eps) {
  if (frozen_) {
    throw ContractError("frozen-violation: parameter update on a frozen model");
  }
  if (grads.size() != params_.size()) {
    throw ContractError("adam_step: gradient size mismatch");
  }
  m = beta1 * m + (1.0 - beta1) * grads;
  v = beta2 * v.array().matrix() + (1.0 - beta2) * grads.array().square().matrix();
  const double mc = 1.0 - std::pow(beta1, step);
  const double vc = 1.0 - std::pow(beta2, step);
  params_.array() -=
      lr * (m.array() / mc) / ((v.array() / vc).sqrt() + eps);
}

double FrozenLm::mean_token_nll(std::span<const std::vector<int>> sequences,
                                int threads) const {
  if (sequences.empty()) return 0.0;
  std::vector<double> losses(sequences.size(), 0.0);
  std::vector<long> tokens(sequences.size(), 0);
  parallel_for(sequences.size(), threads, [&](size_t i) {
    const std::vector<int>& ids = sequences[i];
    EmbeddedSeq seq;
    seq.ids = ids;
    const std::span<const int> targets(ids.data() + 1, ids.size() - 1);
    losses[i] = sequence_nll(seq, targets);
    tokens[i] = static_cast<long>(targets.size());
  });
  double total = 0;
  long count = 0;
  for (size_t i = 0; i < sequences.size(); ++i) {
    total += losses[i];
    count += tokens[i];
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

void FrozenLm::save(const std::string& path) const {
  nlohmann::ordered_json header;
  header["kind"] = "lm";
  header["d_model"] = config_.d_model;
  header["n_layers"] = config_.n_layers;
  header["n_heads"] = config_.n_heads;
  header["ff_mult"] = config_.ff_mult;
  header["context"] = config_.context;
  header["vocab"] = tokenizer_.vocab();
  header["frozen"] = frozen_;
  header["weight_digest"] = weight_digest();
  std::vector<NamedTensor> tensors;
  tensors.reserve(specs_.size());
  for (const TensorSpec& spec : specs_) {
    tensors.push_back({spec.name, Matrix(tensor(spec.name))});
  }
  write_checkpoint(path, std::move(header), tensors);
}

FrozenLm FrozenLm::load(const std::string& path) {
  const Checkpoint cp = read_checkpoint(path, "lm");
  LmConfig config;
  config.d_model = cp.header.at("d_model").get<int>();
  config.n_layers = cp.header.at("n_layers").get<int>();
  config.n_heads = cp.header.at("n_heads").get<int>();
  config.ff_mult = cp.header.at("ff_mult").get<int>();
  config.context = cp.header.at("context").get<int>();
  Tokenizer tokenizer =
      Tokenizer::from_vocab(cp.header.at("vocab").get<std::vector<std::string>>());
  FrozenLm lm(config, std::move(tokenizer), /*seed=*/0);
  for (const TensorSpec& spec : lm.specs_) {
    const Matrix& t = cp.tensor(spec.name);
    if (t.rows() != spec.rows || t.cols() != spec.cols) {
      throw ConfigError("lm checkpoint tensor shape mismatch for " + spec.name);
    }
    lm.tensor_mut(spec.name) = t;
  }
  const std::string stored = cp.header.at("weight_digest").get<std::string>();
  if (lm.weight_digest() != stored) {
    throw ConfigError("lm checkpoint digest mismatch in " + path);
  }
  if (cp.header.at("frozen").get<bool>()) lm.freeze();
  return lm;
}

FrozenLm pretrain_lm(std::span<const std::string> corpus,
                     const Tokenizer& tokenizer, const LmConfig& config,
                     const PretrainConfig& pretrain) {
  if (corpus.empty()) throw ConfigError("pretrain_lm: corpus is empty");
  config.validate();

  std::vector<std::vector<int>> sequences;
  sequences.reserve(corpus.size());
  for (const std::string& record : corpus) {
    std::vector<int> ids = tokenizer.encode(record);
    if (tokenizer.any_unknown(ids)) {
      throw ConfigError("pretrain_lm: record tokenizes with <unk>: " + record);
    }
    std::vector<int> seq;
    seq.push_back(Tokenizer::kBos);
    seq.insert(seq.end(), ids.begin(), ids.end());
    seq.push_back(Tokenizer::kEos);
    if (static_cast<int>(seq.size()) > config.context) {
      // keep the tail: the question/answer supervision lives there
      seq.erase(seq.begin(), seq.end() - config.context);
    }
    sequences.push_back(std::move(seq));
  }

  Rng rng(pretrain.seed);
  std::vector<size_t> order = shuffled_indices(sequences.size(), rng);
  const size_t n_val = std::max<size_t>(
      1, static_cast<size_t>(std::llround(
             static_cast<double>(sequences.size()) * pretrain.val_fraction)));
  std::vector<std::vector<int>> val, train;
  if (sequences.size() == 1) {
    train.push_back(sequences[0]);
    val.push_back(sequences[0]);
  } else {
    for (size_t i = 0; i < order.size(); ++i) {
      if (i < n_val) {
        val.push_back(sequences[order[i]]);
      } else {
        train.push_back(sequences[order[i]]);
      }
    }
  }

  FrozenLm lm(config, tokenizer, pretrain.seed);
  Vector grads, m = Vector::Zero(static_cast<Index>(lm.parameter_count()));
  Vector v = Vector::Zero(static_cast<Index>(lm.parameter_count()));

  double best_val = std::numeric_limits<double>::infinity();
  int evals_since_best = 0;
  std::vector<size_t> epoch_order = shuffled_indices(train.size(), rng);
  size_t cursor = 0;
  for (int step = 1; step <= pretrain.max_steps; ++step) {
    std::vector<std::vector<int>> batch;
    for (int b = 0; b < pretrain.batch_size; ++b) {
      if (cursor >= epoch_order.size()) {
        epoch_order = shuffled_indices(train.size(), rng);
        cursor = 0;
      }
      batch.push_back(train[epoch_order[cursor++]]);
    }
    const double loss =
        lm.batch_loss_and_param_grads(batch, grads, pretrain.threads);
    if (!std::isfinite(loss)) {
      throw ContractError("pretrain_lm: non-finite loss at step " +
                          std::to_string(step));
    }
    lm.adam_step(grads, m, v, step, pretrain.learning_rate, pretrain.beta1,
                 pretrain.beta2, pretrain.eps);

    if (step % pretrain.eval_every == 0 || step == pretrain.max_steps) {
      const double val_loss = lm.mean_token_nll(val, pretrain.threads);
      if (pretrain.verbose) {
        std::fprintf(stderr, "[pretrain] step %d train %.4f val %.4f\n", step,
                     loss, val_loss);
      }
      if (val_loss < best_val * (1.0 - pretrain.min_rel_improvement)) {
        best_val = val_loss;
        evals_since_best = 0;
      } else {
        ++evals_since_best;
        if (evals_since_best >= pretrain.patience) break;
      }
    }
  }
  return lm;
}

}  // namespace kgst
