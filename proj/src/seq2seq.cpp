#include "ebgec/seq2seq.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "ebgec/corpus.hpp"
#include "ebgec/error.hpp"
#include "ebgec/rng.hpp"

namespace ebgec {

// ---------------------------------------------------------------------------
// Parameter container

template <typename T>
BasicParams<T> BasicParams<T>::zeros(const ModelDims& d) {
  if (d.vocab_size < static_cast<int>(kNumReserved) || d.emb_dim < 1 || d.hidden_dim < 1) {
    fail(ErrorCode::invalid_config, "model dims must be positive and cover the reserved tokens");
  }
  const int V = d.vocab_size, E = d.emb_dim, H = d.hidden_dim;
  BasicParams p;
  p.dims = d;
  p.src_emb = Mat::Zero(E, V);
  p.tgt_emb = Mat::Zero(E, V);
  p.enc_w = Mat::Zero(H, kEncoderWindow * E);
  p.enc_b = Vec::Zero(H);
  p.attn_w = Mat::Zero(H, H);
  p.offset_b = Vec::Zero(kOffsetBuckets);
  p.query_w = Mat::Zero(H, kDecoderContext * E);
  p.query_b = Vec::Zero(H);
  p.hidden_w = Mat::Zero(H, 2 * H);
  p.hidden_b = Vec::Zero(H);
  p.out_w = Mat::Zero(V, H);
  p.out_b = Vec::Zero(V);
  return p;
}

template <typename T>
std::size_t BasicParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const auto& t) { n += static_cast<std::size_t>(t.size()); });
  return n;
}

template <typename T>
T& BasicParams<T>::at(std::size_t flat_index) {
  T* found = nullptr;
  for_each_tensor([&](auto& t) {
    const auto n = static_cast<std::size_t>(t.size());
    if (!found && flat_index < n) found = t.data() + flat_index;
    if (!found) flat_index -= n;
  });
  if (!found) fail(ErrorCode::invalid_input, "parameter index out of range");
  return *found;
}

template <typename T>
T BasicParams<T>::at(std::size_t flat_index) const {
  return const_cast<BasicParams*>(this)->at(flat_index);
}

template <typename T>
void BasicParams<T>::set_zero() {
  for_each_tensor([](auto& t) { t.setZero(); });
}

template <typename T>
bool BasicParams<T>::all_finite() const {
  bool ok = true;
  for_each_tensor([&](const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

template <typename T>
template <typename U>
BasicParams<U> BasicParams<T>::cast() const {
  BasicParams<U> out;
  out.dims = dims;
  out.src_emb = src_emb.template cast<U>();
  out.tgt_emb = tgt_emb.template cast<U>();
  out.enc_w = enc_w.template cast<U>();
  out.enc_b = enc_b.template cast<U>();
  out.attn_w = attn_w.template cast<U>();
  out.offset_b = offset_b.template cast<U>();
  out.query_w = query_w.template cast<U>();
  out.query_b = query_b.template cast<U>();
  out.hidden_w = hidden_w.template cast<U>();
  out.hidden_b = hidden_b.template cast<U>();
  out.out_w = out_w.template cast<U>();
  out.out_b = out_b.template cast<U>();
  return out;
}

template struct BasicParams<float>;
template struct BasicParams<double>;
template BasicParams<double> BasicParams<float>::cast<double>() const;
template BasicParams<float> BasicParams<double>::cast<float>() const;

namespace {

template <typename T>
std::vector<std::span<T>> spans_of(BasicParams<T>& p) {
  std::vector<std::span<T>> out;
  p.for_each_tensor([&](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

template <typename T>
std::vector<std::span<const T>> spans_of(const BasicParams<T>& p) {
  std::vector<std::span<const T>> out;
  p.for_each_tensor([&](const auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, std::uint64_t rng_seed) {
  ModelParams p = ModelParams::zeros(dims);
  const float emb_scale = 0.5f / std::sqrt(static_cast<float>(dims.emb_dim));
  std::uint64_t stream = 0;
  auto fill = [&](auto& t, float scale) {
    Rng rng = derive_rng(rng_seed, stream++);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = static_cast<float>(uniform(rng, -scale, scale));
    }
  };
  auto xavier = [](const auto& w) {
    return std::sqrt(6.0f / static_cast<float>(w.rows() + w.cols()));
  };
  fill(p.src_emb, emb_scale);
  fill(p.tgt_emb, emb_scale);
  fill(p.enc_w, xavier(p.enc_w));
  fill(p.attn_w, xavier(p.attn_w));
  fill(p.query_w, xavier(p.query_w));
  fill(p.hidden_w, xavier(p.hidden_w));
  fill(p.out_w, xavier(p.out_w));
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kCheckpointMagic[5] = {'E', 'B', 'S', 'Q', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return true;
}

void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<std::uint32_t>(f)); }

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u32(out, static_cast<std::uint32_t>(params.dims.vocab_size));
  write_u32(out, static_cast<std::uint32_t>(params.dims.emb_dim));
  write_u32(out, static_cast<std::uint32_t>(params.dims.hidden_dim));
  for (const auto& s : spans_of(params)) {
    for (float f : s) write_f32(out, f);
  }
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot read checkpoint " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic)) fail(ErrorCode::truncated_file, path.string() + ": missing header");
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    fail(ErrorCode::magic_mismatch, path.string() + " is not a model checkpoint");
  }
  std::uint32_t v = 0, e = 0, h = 0;
  if (!read_u32(in, v) || !read_u32(in, e) || !read_u32(in, h)) {
    fail(ErrorCode::truncated_file, path.string() + ": truncated dims");
  }
  constexpr std::uint32_t kLimit = 1u << 24;
  if (v < kNumReserved || e == 0 || h == 0 || v > kLimit || e > 4096 || h > 4096) {
    fail(ErrorCode::dim_mismatch, path.string() + ": implausible dims");
  }
  ModelParams p = ModelParams::zeros({static_cast<int>(v), static_cast<int>(e), static_cast<int>(h)});
  for (auto s : spans_of(p)) {
    for (float& f : s) {
      std::uint32_t bits = 0;
      if (!read_u32(in, bits)) fail(ErrorCode::truncated_file, path.string() + ": truncated weights");
      f = std::bit_cast<float>(bits);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorCode::invalid_input, path.string() + ": trailing bytes after weights");
  }
  if (!p.all_finite()) fail(ErrorCode::invalid_input, path.string() + ": non-finite weights");
  return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelDims& expected) {
  ModelParams p = load_checkpoint(path);
  if (!(p.dims == expected)) {
    fail(ErrorCode::dim_mismatch, path.string() + ": checkpoint dims (" +
                                      std::to_string(p.dims.vocab_size) + ", " +
                                      std::to_string(p.dims.emb_dim) + ", " +
                                      std::to_string(p.dims.hidden_dim) + ") differ from expected");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pieces shared by inference and training

namespace {

TokenSeq frame(std::span<const TokenId> src) {
  TokenSeq f;
  f.reserve(src.size() + 2);
  f.push_back(kBos);
  f.insert(f.end(), src.begin(), src.end());
  f.push_back(kEos);
  return f;
}

template <typename T>
void check_tokens(const BasicParams<T>& p, std::span<const TokenId> ids) {
  for (TokenId id : ids) {
    if (id >= static_cast<TokenId>(p.dims.vocab_size)) {
      fail(ErrorCode::invalid_input, "token id " + std::to_string(id) + " outside the vocabulary");
    }
  }
}

int offset_bucket(std::size_t source_pos, std::size_t step) {
  const long diff = static_cast<long>(source_pos) - static_cast<long>(step);
  return static_cast<int>(std::clamp<long>(diff, -kMaxOffset, kMaxOffset) + kMaxOffset);
}

// Window tokens for framed position j: f[j-1], f[j], f[j+1] (PAD outside).
TokenId window_token(const TokenSeq& framed, long j) {
  if (j < 0 || j >= static_cast<long>(framed.size())) return kPad;
  return framed[static_cast<std::size_t>(j)];
}

// Context tokens for a prefix: prefix[n-3], prefix[n-2], prefix[n-1].
TokenId context_token(std::span<const TokenId> prefix, int slot) {
  const long idx = static_cast<long>(prefix.size()) - kDecoderContext + slot;
  if (idx < 0) return kPad;
  return prefix[static_cast<std::size_t>(idx)];
}

template <typename T>
struct EncoderPass {
  TokenSeq framed;
  typename BasicParams<T>::Mat inputs;  // window*E x L
  BasicMemory<T> memory;
};

template <typename T>
EncoderPass<T> run_encoder(const BasicParams<T>& p, std::span<const TokenId> src) {
  if (src.empty()) fail(ErrorCode::invalid_input, "cannot encode an empty source");
  check_tokens(p, src);
  const int E = p.dims.emb_dim;
  EncoderPass<T> pass;
  pass.framed = frame(src);
  const auto L = static_cast<Eigen::Index>(pass.framed.size());
  pass.inputs.resize(kEncoderWindow * E, L);
  for (Eigen::Index j = 0; j < L; ++j) {
    for (int w = 0; w < kEncoderWindow; ++w) {
      const TokenId tok = window_token(pass.framed, static_cast<long>(j) + w - 1);
      pass.inputs.block(w * E, j, E, 1) = p.src_emb.col(tok);
    }
  }
  pass.memory.states = ((p.enc_w * pass.inputs).colwise() + p.enc_b).array().tanh().matrix();
  pass.memory.keys = p.attn_w * pass.memory.states;
  return pass;
}

}  // namespace

// ---------------------------------------------------------------------------
// Inference

Seq2Seq::Seq2Seq(ModelParams params) : params_(std::move(params)) {
  if (!params_.all_finite()) fail(ErrorCode::invalid_input, "model params contain non-finite values");
}

EncoderMemory Seq2Seq::encode(std::span<const TokenId> src) const {
  return run_encoder(params_, src).memory;
}

StepOutput Seq2Seq::decode_step(const EncoderMemory& memory, std::span<const TokenId> prefix) const {
  if (prefix.empty() || prefix.front() != kBos) {
    fail(ErrorCode::invalid_input, "decoder prefix must start with BOS");
  }
  if (memory.states.rows() != params_.dims.hidden_dim || memory.length() < 2) {
    fail(ErrorCode::invalid_input, "encoder memory does not match the model");
  }
  check_tokens(params_, prefix);
  using Vec = ModelParams::Vec;
  const int E = params_.dims.emb_dim;
  const int H = params_.dims.hidden_dim;
  const std::size_t step = prefix.size();

  Vec q_in(kDecoderContext * E);
  for (int c = 0; c < kDecoderContext; ++c) {
    q_in.segment(c * E, E) = params_.tgt_emb.col(context_token(prefix, c));
  }
  const Vec q = (params_.query_w * q_in + params_.query_b).array().tanh().matrix();

  const auto L = memory.states.cols();
  Vec scores = memory.keys.transpose() * q;
  for (Eigen::Index j = 0; j < L; ++j) {
    scores[j] += params_.offset_b[offset_bucket(static_cast<std::size_t>(j), step)];
  }
  const float smax = scores.maxCoeff();
  Vec alpha = (scores.array() - smax).exp().matrix();
  alpha /= alpha.sum();
  Vec z(2 * H);
  z.head(H) = q;
  z.tail(H) = memory.states * alpha;
  const Vec h = (params_.hidden_w * z + params_.hidden_b).array().tanh().matrix();
  const Vec logits = params_.out_w * h + params_.out_b;

  StepOutput out;
  out.state.step = step - 1;  // 0-based target position
  out.state.vector.assign(h.data(), h.data() + h.size());
  out.probs.resize(static_cast<std::size_t>(logits.size()));
  double lmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index v = 0; v < logits.size(); ++v) lmax = std::max(lmax, static_cast<double>(logits[v]));
  double total = 0.0;
  for (Eigen::Index v = 0; v < logits.size(); ++v) {
    const double e = std::exp(static_cast<double>(logits[v]) - lmax);
    out.probs[static_cast<std::size_t>(v)] = e;
    total += e;
  }
  for (double& pr : out.probs) pr /= total;
  return out;
}

std::vector<EncodedPair> encode_pairs(const std::vector<SentencePair>& pairs, const Vocab& vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({vocab.encode(p.src), vocab.encode(p.tgt)});
  return out;
}

// ---------------------------------------------------------------------------
// Teacher-forced loss and gradient. All M+1 steps are independent given the
// gold prefix, so they are computed as one batch of columns.

namespace {

template <typename T>
struct TeacherForced {
  using Mat = typename BasicParams<T>::Mat;
  using Vec = typename BasicParams<T>::Vec;

  EncoderPass<T> enc;
  TokenSeq targets;                     // S = M+1 gold tokens (EOS last)
  std::vector<std::array<TokenId, kDecoderContext>> context;
  Mat q_in;    // context*E x S
  Mat q;       // H x S
  Mat alpha;   // L x S
  Mat z;       // 2H x S
  Mat h;       // H x S
  Mat logits;  // V x S
};

template <typename T>
TeacherForced<T> teacher_forced_forward(const BasicParams<T>& p, const EncodedPair& pair) {
  using Mat = typename BasicParams<T>::Mat;
  TeacherForced<T> f;
  f.enc = run_encoder(p, pair.src);
  check_tokens(p, pair.tgt);
  const int E = p.dims.emb_dim;
  const int H = p.dims.hidden_dim;
  const auto S = static_cast<Eigen::Index>(pair.tgt.size() + 1);
  const auto L = f.enc.memory.states.cols();

  TokenSeq prefix;
  prefix.reserve(pair.tgt.size() + 1);
  prefix.push_back(kBos);
  f.q_in.resize(kDecoderContext * E, S);
  f.context.resize(static_cast<std::size_t>(S));
  for (Eigen::Index s = 0; s < S; ++s) {
    for (int c = 0; c < kDecoderContext; ++c) {
      const TokenId tok = context_token(prefix, c);
      f.context[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)] = tok;
      f.q_in.block(c * E, s, E, 1) = p.tgt_emb.col(tok);
    }
    const TokenId target = static_cast<std::size_t>(s) < pair.tgt.size() ? pair.tgt[static_cast<std::size_t>(s)] : kEos;
    f.targets.push_back(target);
    prefix.push_back(target);
  }
  f.q = ((p.query_w * f.q_in).colwise() + p.query_b).array().tanh().matrix();

  Mat scores = f.enc.memory.keys.transpose() * f.q;  // L x S
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto step = static_cast<std::size_t>(s) + 1;  // prefix length at this step
    for (Eigen::Index j = 0; j < L; ++j) {
      scores(j, s) += p.offset_b[offset_bucket(static_cast<std::size_t>(j), step)];
    }
  }
  f.alpha.resize(L, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const T smax = scores.col(s).maxCoeff();
    f.alpha.col(s) = (scores.col(s).array() - smax).exp().matrix();
    f.alpha.col(s) /= f.alpha.col(s).sum();
  }
  f.z.resize(2 * H, S);
  f.z.topRows(H) = f.q;
  f.z.bottomRows(H) = f.enc.memory.states * f.alpha;
  f.h = ((p.hidden_w * f.z).colwise() + p.hidden_b).array().tanh().matrix();
  f.logits = (p.out_w * f.h).colwise() + p.out_b;
  return f;
}

}  // namespace

template <typename T>
T sequence_loss(const BasicParams<T>& p, const EncodedPair& pair, BasicParams<T>* grad) {
  using Mat = typename BasicParams<T>::Mat;
  TeacherForced<T> f = teacher_forced_forward(p, pair);
  const int E = p.dims.emb_dim;
  const int H = p.dims.hidden_dim;
  const auto S = f.logits.cols();
  const auto L = f.alpha.rows();

  Mat probs(f.logits.rows(), S);
  T loss = 0;
  for (Eigen::Index s = 0; s < S; ++s) {
    const T lmax = f.logits.col(s).maxCoeff();
    probs.col(s) = (f.logits.col(s).array() - lmax).exp().matrix();
    const T total = probs.col(s).sum();
    probs.col(s) /= total;
    loss += lmax + std::log(total) - f.logits(static_cast<Eigen::Index>(f.targets[static_cast<std::size_t>(s)]), s);
  }
  if (!grad) return loss;

  BasicParams<T>& g = *grad;
  Mat d_logits = std::move(probs);
  for (Eigen::Index s = 0; s < S; ++s) d_logits(static_cast<Eigen::Index>(f.targets[static_cast<std::size_t>(s)]), s) -= T(1);

  g.out_w.noalias() += d_logits * f.h.transpose();
  g.out_b += d_logits.rowwise().sum();
  const Mat d_pre_h = ((p.out_w.transpose() * d_logits).array() * (T(1) - f.h.array().square())).matrix();
  g.hidden_w.noalias() += d_pre_h * f.z.transpose();
  g.hidden_b += d_pre_h.rowwise().sum();
  const Mat d_z = p.hidden_w.transpose() * d_pre_h;
  Mat d_q = d_z.topRows(H);
  const Mat d_ctx = d_z.bottomRows(H);

  const Mat& states = f.enc.memory.states;
  const Mat& keys = f.enc.memory.keys;
  Mat d_states = d_ctx * f.alpha.transpose();                 // H x L
  const Mat d_alpha = states.transpose() * d_ctx;             // L x S
  Mat d_scores(L, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const T dot = f.alpha.col(s).dot(d_alpha.col(s));
    d_scores.col(s) = (f.alpha.col(s).array() * (d_alpha.col(s).array() - dot)).matrix();
    const auto step = static_cast<std::size_t>(s) + 1;
    for (Eigen::Index j = 0; j < L; ++j) {
      g.offset_b[offset_bucket(static_cast<std::size_t>(j), step)] += d_scores(j, s);
    }
  }
  d_q.noalias() += keys * d_scores;
  const Mat d_keys = f.q * d_scores.transpose();              // H x L

  const Mat d_pre_q = (d_q.array() * (T(1) - f.q.array().square())).matrix();
  g.query_w.noalias() += d_pre_q * f.q_in.transpose();
  g.query_b += d_pre_q.rowwise().sum();
  const Mat d_q_in = p.query_w.transpose() * d_pre_q;
  for (Eigen::Index s = 0; s < S; ++s) {
    for (int c = 0; c < kDecoderContext; ++c) {
      g.tgt_emb.col(f.context[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)]) += d_q_in.block(c * E, s, E, 1);
    }
  }

  g.attn_w.noalias() += d_keys * states.transpose();
  d_states.noalias() += p.attn_w.transpose() * d_keys;
  const Mat d_pre_m = (d_states.array() * (T(1) - states.array().square())).matrix();
  g.enc_w.noalias() += d_pre_m * f.enc.inputs.transpose();
  g.enc_b += d_pre_m.rowwise().sum();
  const Mat d_inputs = p.enc_w.transpose() * d_pre_m;
  for (Eigen::Index j = 0; j < L; ++j) {
    for (int w = 0; w < kEncoderWindow; ++w) {
      const TokenId tok = window_token(f.enc.framed, static_cast<long>(j) + w - 1);
      g.src_emb.col(tok) += d_inputs.block(w * E, j, E, 1);
    }
  }
  return loss;
}

template float sequence_loss<float>(const BasicParams<float>&, const EncodedPair&, BasicParams<float>*);
template double sequence_loss<double>(const BasicParams<double>&, const EncodedPair&, BasicParams<double>*);

// ---------------------------------------------------------------------------
// Training

ModelParams train(const std::vector<EncodedPair>& pairs, const ModelDims& dims,
                  const TrainOptions& options, TrainReport* report) {
  if (pairs.empty()) fail(ErrorCode::invalid_input, "training corpus is empty");
  if (options.epochs < 0 || options.batch_size == 0 || !(options.learning_rate > 0)) {
    fail(ErrorCode::invalid_config, "epochs >= 0, batch_size >= 1 and learning_rate > 0 required");
  }
  ModelParams params = init_params(dims, options.rng_seed);
  if (options.epochs == 0) return params;

  ModelParams grad = ModelParams::zeros(dims);
  ModelParams m1 = ModelParams::zeros(dims);
  ModelParams m2 = ModelParams::zeros(dims);
  auto p_spans = spans_of(params);
  auto g_spans = spans_of(grad);
  auto m_spans = spans_of(m1);
  auto v_spans = spans_of(m2);

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::size_t t = 0;
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= options.epochs; ++epoch) {
    Rng rng = derive_rng(options.rng_seed, 0x7EA1000ULL + static_cast<std::uint64_t>(epoch));
    shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      grad.set_zero();
      std::size_t tokens = 0;
      for (std::size_t b = start; b < end; ++b) {
        const EncodedPair& pair = pairs[order[b]];
        epoch_loss += static_cast<double>(sequence_loss(params, pair, &grad));
        tokens += pair.tgt.size() + 1;
      }
      epoch_tokens += tokens;
      if (!std::isfinite(epoch_loss)) {
        fail(ErrorCode::training_diverged, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }

      const double inv = 1.0 / static_cast<double>(tokens);
      double norm_sq = 0.0;
      for (auto s : g_spans) {
        for (float& x : s) {
          x = static_cast<float>(x * inv);
          norm_sq += static_cast<double>(x) * x;
        }
      }
      const double norm = std::sqrt(norm_sq);
      const double clip = (options.clip_norm > 0 && norm > options.clip_norm) ? options.clip_norm / norm : 1.0;

      ++t;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      const double step = options.learning_rate * std::sqrt(bc2) / bc1;
      for (std::size_t k = 0; k < p_spans.size(); ++k) {
        auto ps = p_spans[k];
        auto gs = g_spans[k];
        auto ms = m_spans[k];
        auto vs = v_spans[k];
        for (std::size_t i = 0; i < ps.size(); ++i) {
          const double gi = gs[i] * clip;
          ms[i] = static_cast<float>(beta1 * ms[i] + (1 - beta1) * gi);
          vs[i] = static_cast<float>(beta2 * vs[i] + (1 - beta2) * gi * gi);
          ps[i] = static_cast<float>(ps[i] - step * ms[i] / (std::sqrt(static_cast<double>(vs[i])) + eps));
        }
      }
    }

    const double mean = epoch_loss / static_cast<double>(epoch_tokens);
    if (!std::isfinite(mean) || !params.all_finite()) {
      fail(ErrorCode::training_diverged, "training diverged: non-finite loss in epoch " + std::to_string(epoch));
    }
    if (report) report->epoch_loss.push_back(mean);
    if (options.on_epoch) options.on_epoch(epoch, mean);
  }
  return params;
}

ModelParams train(const std::vector<SentencePair>& pairs, const Vocab& vocab, const ModelDims& dims,
                  const TrainOptions& options, TrainReport* report) {
  if (pairs.empty()) fail(ErrorCode::invalid_input, "training corpus is empty");
  ModelDims d = dims;
  if (d.vocab_size == 0) d.vocab_size = static_cast<int>(vocab.size());
  return train(encode_pairs(pairs, vocab), d, options, report);
}

double teacher_forced_accuracy(const Seq2Seq& model, const std::vector<EncodedPair>& pairs) {
  std::size_t correct = 0, total = 0;
  for (const auto& pair : pairs) {
    const auto f = teacher_forced_forward(model.params(), pair);
    for (Eigen::Index s = 0; s < f.logits.cols(); ++s) {
      Eigen::Index best = 0;
      for (Eigen::Index v = 1; v < f.logits.rows(); ++v) {
        if (f.logits(v, s) > f.logits(best, s)) best = v;
      }
      correct += static_cast<TokenId>(best) == f.targets[static_cast<std::size_t>(s)];
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Gradient check

GradientCheckResult loss_gradient_check(const BasicParams<double>& params, const EncodedPair& pair,
                                        std::size_t samples, std::uint64_t seed, double step) {
  BasicParams<double> grad = BasicParams<double>::zeros(params.dims);
  sequence_loss(params, pair, &grad);
  BasicParams<double> probe = params;

  // Stratified over tensors so every weight family is exercised.
  std::vector<std::size_t> indices;
  const std::size_t total = params.parameter_count();
  if (total <= samples) {
    indices.resize(total);
    std::iota(indices.begin(), indices.end(), 0);
  } else {
    Rng rng = derive_rng(seed, 0);
    std::size_t offset = 0;
    std::size_t tensors = 0;
    params.for_each_tensor([&](const auto&) { ++tensors; });
    const std::size_t per_tensor = (samples + tensors - 1) / tensors;
    params.for_each_tensor([&](const auto& t) {
      const auto n = static_cast<std::size_t>(t.size());
      for (std::size_t i = 0; i < std::min(per_tensor, n); ++i) indices.push_back(offset + uniform_index(rng, n));
      offset += n;
    });
  }

  GradientCheckResult result;
  for (std::size_t idx : indices) {
    double& w = probe.at(idx);
    const double saved = w;
    w = saved + step;
    const double plus = sequence_loss(probe, pair, static_cast<BasicParams<double>*>(nullptr));
    w = saved - step;
    const double minus = sequence_loss(probe, pair, static_cast<BasicParams<double>*>(nullptr));
    w = saved;
    const double numeric = (plus - minus) / (2 * step);
    const double analytic = grad.at(idx);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(analytic - numeric) / denom);
    ++result.checked;
  }
  return result;
}

GradientCheckResult loss_gradient_check(const ModelParams& params, const EncodedPair& pair,
                                        std::size_t samples, std::uint64_t seed, double step) {
  return loss_gradient_check(params.cast<double>(), pair, samples, seed, step);
}

}  // namespace ebgec
