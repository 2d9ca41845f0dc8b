#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgst/tokenizer.hpp"

namespace kgst {

struct ContextWindowError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LmConfig {
  int d_model = 128;
  int n_layers = 4;
  int n_heads = 4;
  int ff_mult = 4;
  int context = 256;

  int head_dim() const { return d_model / n_heads; }
  int ff_dim() const { return ff_mult * d_model; }
  void validate() const;
};

// One position in the embedded input is either a vocabulary token or an
// injected continuous vector (a soft token).
struct InputSequence {
  std::vector<int> token_ids;
  // Insertion index of the injected vector in the final sequence, -1 for
  // none. The final sequence has token_ids.size() + 1 positions when an
  // injection is present.
  int injection_pos = -1;
  Vector injected;

  bool has_injection() const { return injection_pos >= 0; }
};

// Generalized input: ids with -1 marking injected slots, vectors in slot
// order. InputSequence is the single-injection special case.
struct EmbeddedSeq {
  std::vector<int> ids;
  std::vector<Vector> vectors;

  static EmbeddedSeq from_input(const InputSequence& input);
  size_t size() const { return ids.size(); }
  void append_token(int id) { ids.push_back(id); }
  void append_vector(Vector v) {
    ids.push_back(-1);
    vectors.push_back(std::move(v));
  }
};

struct TensorSpec {
  std::string name;
  Index rows = 0;
  Index cols = 0;
  size_t offset = 0;
};

// Decoder-only causal transformer over word-level tokens: learned position
// embeddings, pre-norm blocks, GELU feed-forward, output projection
// weight-tied to the token embedding. All parameters live in one flat
// float64 buffer addressed through a named tensor layout.
class FrozenLm {
 public:
  FrozenLm(LmConfig config, Tokenizer tokenizer, std::uint64_t seed);

  const LmConfig& config() const { return config_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  bool frozen() const { return frozen_; }
  size_t parameter_count() const { return static_cast<size_t>(params_.size()); }
  const Vector& parameters() const { return params_; }
  const std::vector<TensorSpec>& tensor_layout() const { return specs_; }

  // SHA-256 over the raw parameter bytes.
  std::string weight_digest() const;

  // Records the digest and rejects all subsequent parameter updates.
  // Idempotent.
  void freeze();

  // Log-softmax over next-token logits, one row per position. Throws
  // ContextWindowError when the sequence exceeds the context.
  Matrix forward(const InputSequence& input) const;
  Matrix forward(const EmbeddedSeq& seq) const;

  // Summed NLL of `target_ids`, which must equal the trailing token ids of
  // the sequence; each is predicted from the positions before it.
  double sequence_nll(const EmbeddedSeq& seq, std::span<const int> target_ids) const;

  // Exact d(nll)/d(injected vector) for every injected slot, by reverse-mode
  // differentiation through the frozen network. No parameter gradient is
  // produced. Requires a frozen model and at least one injection.
  std::vector<Vector> injection_gradients(const EmbeddedSeq& seq,
                                          std::span<const int> target_ids,
                                          double* nll_out = nullptr) const;
  Vector grad_wrt_injection(const InputSequence& input,
                            std::span<const int> target_ids) const;

  // Argmax decoding until <eos> or max_len tokens; ties break toward the
  // lowest token id. Returns detokenized text without the <eos>.
  std::string greedy_decode(const EmbeddedSeq& prefix, int max_len) const;

  // Pretraining hooks (reject when frozen).
  double batch_loss_and_param_grads(std::span<const std::vector<int>> batch,
                                    Vector& grad_out, int threads) const;
  void adam_step(const Vector& grads, Vector& m, Vector& v, int step,
                 double lr, double beta1, double beta2, double eps);
  double mean_token_nll(std::span<const std::vector<int>> sequences,
                        int threads) const;

  // Checkpoint round-trip (tokenizer vocab and freeze state included).
  void save(const std::string& path) const;
  static FrozenLm load(const std::string& path);

  Eigen::Map<const Matrix> tensor(const std::string& name) const;
  // Direct parameter edits; rejected once frozen.
  void set_tensor(const std::string& name, const Matrix& value);
  void nudge_parameter(Index flat_index, double delta);

 private:
  struct Cache;
  FrozenLm() = default;

  void init_parameters(std::uint64_t seed);
  Eigen::Map<Matrix> tensor_mut(const std::string& name);
  Matrix embed(const EmbeddedSeq& seq) const;
  // Returns final hidden states (T x d). Fills cache when given.
  Matrix forward_states(const Matrix& x0, Cache* cache) const;
  // Sparse rows of d(loss)/d(logits): (row, vector) pairs.
  double loss_rows(const Matrix& states, const EmbeddedSeq& seq,
                   std::span<const int> target_ids,
                   std::vector<std::pair<Index, Vector>>* dlogit_rows) const;
  void backward(const EmbeddedSeq& seq, const Cache& cache,
                const std::vector<std::pair<Index, Vector>>& dlogit_rows,
                Vector* param_grads, std::vector<Vector>* injected_grads) const;

  LmConfig config_;
  Tokenizer tokenizer_;
  std::vector<TensorSpec> specs_;
  Vector params_;
  bool frozen_ = false;
  std::string frozen_digest_;
};

struct PretrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 16;
  int max_steps = 400;
  int eval_every = 50;
  int patience = 3;
  double min_rel_improvement = 0.002;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;
  int threads = 0;
  bool verbose = false;
};

// Next-token cross-entropy training until the validation perplexity
// plateaus or max_steps. Records longer than the context are truncated from
// the front so the question/answer tail is kept. Every record must tokenize
// without <unk>. The returned model is not frozen.
FrozenLm pretrain_lm(std::span<const std::string> corpus,
                     const Tokenizer& tokenizer, const LmConfig& config,
                     const PretrainConfig& pretrain);

}  // namespace kgst
