#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "ebgec/vocab.hpp"

namespace ebgec {

struct SentencePair;

// Fixed architecture constants. The encoder sees a 3-token window around each
// framed source position; the decoder query sees the last 3 prefix tokens and
// a learned bias on the source offset relative to the current step.
inline constexpr int kEncoderWindow = 3;
inline constexpr int kDecoderContext = 3;
inline constexpr int kMaxOffset = 4;
inline constexpr int kOffsetBuckets = 2 * kMaxOffset + 1;

struct ModelDims {
  int vocab_size = 0;
  int emb_dim = 32;
  int hidden_dim = 64;  // datastore key dimension
  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

template <typename T>
struct BasicParams {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

  ModelDims dims;
  Mat src_emb;    // E x V, one column per token
  Mat tgt_emb;    // E x V
  Mat enc_w;      // H x (window * E)
  Vec enc_b;      // H
  Mat attn_w;     // H x H, memory -> attention keys
  Vec offset_b;   // offset buckets
  Mat query_w;    // H x (context * E)
  Vec query_b;    // H
  Mat hidden_w;   // H x 2H, [query; context] -> decoder state
  Vec hidden_b;   // H
  Mat out_w;      // V x H
  Vec out_b;      // V

  static BasicParams zeros(const ModelDims& dims);

  // Visits every tensor in checkpoint order.
  template <typename F>
  void for_each_tensor(F&& f) {
    f(src_emb); f(tgt_emb); f(enc_w); f(enc_b); f(attn_w); f(offset_b);
    f(query_w); f(query_b); f(hidden_w); f(hidden_b); f(out_w); f(out_b);
  }
  template <typename F>
  void for_each_tensor(F&& f) const {
    f(src_emb); f(tgt_emb); f(enc_w); f(enc_b); f(attn_w); f(offset_b);
    f(query_w); f(query_b); f(hidden_w); f(hidden_b); f(out_w); f(out_b);
  }

  std::size_t parameter_count() const;
  // Flat view helpers, in checkpoint order.
  T& at(std::size_t flat_index);
  T at(std::size_t flat_index) const;
  void set_zero();
  bool all_finite() const;

  template <typename U>
  BasicParams<U> cast() const;
};

using ModelParams = BasicParams<float>;

ModelParams init_params(const ModelDims& dims, std::uint64_t rng_seed);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);
// Rejects a checkpoint whose dims differ from `expected`.
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected);

template <typename T>
struct BasicMemory {
  typename BasicParams<T>::Mat states;  // H x L, L = source length + 2 (BOS/EOS frame)
  typename BasicParams<T>::Mat keys;    // H x L attention keys
  std::size_t length() const { return static_cast<std::size_t>(states.cols()); }
};

using EncoderMemory = BasicMemory<float>;

struct DecoderState {
  std::vector<float> vector;
  std::size_t step = 0;
};

struct StepOutput {
  DecoderState state;
  std::vector<double> probs;  // vanilla distribution over the vocabulary
};

// Inference wrapper around immutable single-precision params.
class Seq2Seq {
 public:
  explicit Seq2Seq(ModelParams params);

  const ModelParams& params() const noexcept { return params_; }
  const ModelDims& dims() const noexcept { return params_.dims; }
  std::size_t hidden_dim() const noexcept { return static_cast<std::size_t>(params_.dims.hidden_dim); }
  std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(params_.dims.vocab_size); }

  // src excludes BOS/EOS; the memory carries the framed sequence.
  EncoderMemory encode(std::span<const TokenId> src) const;
  // prefix starts with BOS.
  StepOutput decode_step(const EncoderMemory& memory, std::span<const TokenId> prefix) const;

 private:
  ModelParams params_;
};

struct EncodedPair {
  TokenSeq src;
  TokenSeq tgt;  // without EOS
};

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& vocab);

// Teacher-forced cross-entropy summed over the M+1 target steps (EOS included).
// Accumulates into grad when non-null.
template <typename T>
T sequence_loss(const BasicParams<T>& params, const EncodedPair& pair, BasicParams<T>* grad);

struct TrainOptions {
  int epochs = 20;
  double learning_rate = 3e-3;
  std::size_t batch_size = 16;
  double clip_norm = 5.0;
  std::uint64_t rng_seed = 1;
  // Called after each epoch with (epoch, mean per-token loss).
  std::function<void(int, double)> on_epoch;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-token training loss, one per epoch
};

// Adam over minibatches of sentence pairs; single-threaded and deterministic.
ModelParams train(const std::vector<EncodedPair>& pairs, const ModelDims& dims,
                  const TrainOptions& options, TrainReport* report = nullptr);
ModelParams train(const std::vector<SentencePair>& pairs, const Vocab& vocab,
                  const ModelDims& dims, const TrainOptions& options,
                  TrainReport* report = nullptr);

// Fraction of teacher-forced steps (EOS included) whose argmax is the gold token.
double teacher_forced_accuracy(const Seq2Seq& model, const std::vector<EncodedPair>& pairs);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

// Central finite differences in double precision on `samples` weights drawn
// uniformly from all parameters (all of them if the model is smaller).
GradientCheckResult loss_gradient_check(const BasicParams<double>& params, const EncodedPair& pair,
                                        std::size_t samples = 200, std::uint64_t seed = 7,
                                        double step = 1e-5);
GradientCheckResult loss_gradient_check(const ModelParams& params, const EncodedPair& pair,
                                        std::size_t samples = 200, std::uint64_t seed = 7,
                                        double step = 1e-5);

}  // namespace ebgec
