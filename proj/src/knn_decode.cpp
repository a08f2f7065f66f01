#include "ebgec/knn_decode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "ebgec/corpus.hpp"
#include "ebgec/error.hpp"

namespace ebgec {

void DecodeConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    fail(ErrorCode::invalid_config, "lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (k == 0) fail(ErrorCode::invalid_config, "k must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    fail(ErrorCode::invalid_config, "temperature must be positive and finite");
  }
  if (beam_width == 0) fail(ErrorCode::invalid_config, "beam_width must be >= 1");
  if (distance_threshold && !(*distance_threshold >= 0.0)) {
    fail(ErrorCode::invalid_config, "distance_threshold must be non-negative");
  }
}

bool TokenDistribution::is_empty_marker() const {
  return std::all_of(probs.begin(), probs.end(), [](double p) { return p == 0.0; });
}

double TokenDistribution::sum() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }

TokenDistribution knn_distribution(const NeighborSet& neighbors, std::size_t vocab_size,
                                   double temperature, DistanceExponent exponent) {
  if (!(temperature > 0.0)) fail(ErrorCode::invalid_config, "temperature must be positive");
  TokenDistribution out{std::vector<double>(vocab_size, 0.0)};
  if (neighbors.empty()) return out;

  auto dist = [exponent](const Neighbor& n) {
    const double d = n.distance;
    return exponent == DistanceExponent::squared ? d : std::sqrt(d);
  };
  // Shifting by the smallest distance leaves the softmax unchanged and keeps
  // the largest term at exp(0) for any temperature.
  double dmin = std::numeric_limits<double>::infinity();
  for (const auto& n : neighbors) dmin = std::min(dmin, dist(n));
  double total = 0.0;
  for (const auto& n : neighbors) {
    if (n.value.token >= vocab_size) {
      fail(ErrorCode::invalid_state, "neighbor token id " + std::to_string(n.value.token) +
                                         " is outside the vocabulary");
    }
    const double w = std::exp(-(dist(n) - dmin) / temperature);
    out.probs[n.value.token] += w;
    total += w;
  }
  for (double& p : out.probs) p /= total;
  return out;
}

TokenDistribution interpolate(const TokenDistribution& vanilla, const TokenDistribution& knn,
                              double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    fail(ErrorCode::invalid_config, "lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (knn.probs.size() != vanilla.probs.size()) {
    fail(ErrorCode::invalid_input, "distributions differ in vocabulary size");
  }
  if (knn.is_empty_marker()) return vanilla;
  TokenDistribution out{std::vector<double>(vanilla.probs.size())};
  for (std::size_t i = 0; i < out.probs.size(); ++i) {
    out.probs[i] = lambda * knn.probs[i] + (1.0 - lambda) * vanilla.probs[i];
  }
  return out;
}

std::optional<Example> choose_example(const StepRecord& step, const Corpus& corpus,
                                      std::optional<double> distance_threshold) {
  // NeighborSets are sorted, so the first matching neighbor is the nearest.
  for (const auto& n : step.neighbors) {
    if (n.value.token != step.token) continue;
    if (distance_threshold && n.distance > *distance_threshold) return std::nullopt;
    return resolve_example(corpus, n.value.pair_id, n.value.position, n.distance);
  }
  return std::nullopt;
}

namespace {

struct Hypothesis {
  TokenSeq prefix;  // starts with BOS
  double score = 0.0;
  std::vector<StepRecord> steps;
};

struct Candidate {
  double score;
  TokenId token;
  std::size_t hyp;
};

// Higher score first; ties to the lower token id, then the earlier hypothesis.
bool better(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.token != b.token) return a.token < b.token;
  return a.hyp < b.hyp;
}

}  // namespace

Corrector::Corrector(const Seq2Seq& model, const Datastore* store, const Corpus* corpus)
    : model_(model), store_(store), corpus_(corpus) {
  if (store_ && !store_->empty() && store_->dim() != model_.hidden_dim()) {
    fail(ErrorCode::dim_mismatch, "store dimension " + std::to_string(store_->dim()) +
                                      " differs from model hidden size " +
                                      std::to_string(model_.hidden_dim()));
  }
}

CorrectionResult Corrector::correct(std::span<const TokenId> src, const DecodeConfig& config,
                                    const std::function<void(const StepTrace&)>& trace) const {
  config.validate();
  if (src.empty()) fail(ErrorCode::invalid_input, "cannot correct an empty source");
  const bool have_store = store_ && !store_->empty();
  if (config.lambda == 1.0 && !have_store) {
    fail(ErrorCode::degenerate_config, "lambda = 1 with an empty datastore leaves no probability mass");
  }
  if (config.search_mode == SearchMode::approximate && have_store && !store_->has_index()) {
    fail(ErrorCode::invalid_config, "approximate search requested but the store has no index");
  }

  const std::size_t vocab = model_.vocab_size();
  const std::size_t max_len = config.max_len ? config.max_len : 2 * src.size() + 10;
  const EncoderMemory memory = model_.encode(src);

  std::vector<Hypothesis> alive(1);
  alive[0].prefix = {kBos};
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<StepOutput> outs;
    outs.reserve(alive.size());
    for (const auto& h : alive) outs.push_back(model_.decode_step(memory, h.prefix));

    std::vector<NeighborSet> neighbors(alive.size());
    if (have_store) {
      if (config.search_mode == SearchMode::exact) {
        std::vector<std::vector<float>> queries;
        queries.reserve(outs.size());
        for (const auto& o : outs) queries.push_back(o.state.vector);
        neighbors = store_->knn_exact_batch(queries, config.k);
      } else {
        for (std::size_t i = 0; i < outs.size(); ++i) {
          neighbors[i] = store_->knn_approx(outs[i].state.vector, config.k);
        }
      }
    }

    std::vector<Candidate> cands;
    cands.reserve(alive.size() * vocab);
    for (std::size_t i = 0; i < alive.size(); ++i) {
      const TokenDistribution vanilla{std::move(outs[i].probs)};
      const TokenDistribution knn = knn_distribution(neighbors[i], vocab, config.temperature,
                                                     config.distance_exponent);
      const TokenDistribution mixed = interpolate(vanilla, knn, config.lambda);
      if (trace) trace(StepTrace{t, vanilla, knn, mixed});
      for (std::size_t v = 0; v < vocab; ++v) {
        const double p = mixed.probs[v];
        if (p > 0.0 && v != kPad && v != kBos) {
          cands.push_back({alive[i].score + std::log(p), static_cast<TokenId>(v), i});
        }
      }
    }
    const std::size_t keep = std::min(config.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      better);

    std::vector<Hypothesis> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const Candidate& cand = cands[c];
      Hypothesis h = alive[cand.hyp];
      h.score = cand.score;
      if (cand.token == kEos) {
        finished.push_back(std::move(h));
        continue;
      }
      h.prefix.push_back(cand.token);
      h.steps.push_back(StepRecord{cand.token, neighbors[cand.hyp], std::nullopt});
      next.push_back(std::move(h));
    }
    alive = std::move(next);

    // Scores only fall as hypotheses grow, so nothing alive can overtake the
    // best finished hypothesis once it is ahead.
    if (!finished.empty() && !alive.empty()) {
      double best_done = -std::numeric_limits<double>::infinity();
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      if (alive.front().score < best_done) alive.clear();
    }
  }
  for (auto& h : alive) finished.push_back(std::move(h));

  // Earliest-finished wins exact ties.
  std::size_t best = 0;
  for (std::size_t i = 1; i < finished.size(); ++i) {
    if (finished[i].score > finished[best].score) best = i;
  }
  Hypothesis& win = finished[best];
  CorrectionResult result;
  result.output.assign(win.prefix.begin() + 1, win.prefix.end());
  result.per_step = std::move(win.steps);
  result.score = win.score;
  if (corpus_) {
    for (auto& step : result.per_step) {
      step.example = choose_example(step, *corpus_, config.distance_threshold);
    }
  }
  return result;
}

std::vector<CorrectionResult> Corrector::correct_all(const std::vector<TokenSeq>& sources,
                                                     const DecodeConfig& config,
                                                     std::size_t threads) const {
  config.validate();
  std::vector<CorrectionResult> results(sources.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(sources.size(), 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < sources.size(); ++i) results[i] = correct(sources[i], config);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < sources.size(); i = next++) {
        try {
          results[i] = correct(sources[i], config);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return results;
}

std::vector<std::string> output_tokens(const CorrectionResult& result, const Vocab& vocab,
                                       std::span<const std::string> src) {
  std::vector<std::string> unknown_src;
  for (const auto& s : src) {
    if (vocab.id(s) == kUnk) unknown_src.push_back(s);
  }
  std::size_t used = 0;
  std::vector<std::string> out;
  out.reserve(result.output.size());
  for (TokenId id : result.output) {
    if (id == kUnk && used < unknown_src.size()) {
      out.push_back(unknown_src[used++]);
    } else {
      out.push_back(vocab.token(id));
    }
  }
  return out;
}

std::vector<PresentedEdit> present(const CorrectionResult& result,
                                   std::span<const std::string> src, const Vocab& vocab,
                                   const ClosedClasses& classes) {
  const std::vector<std::string> out = output_tokens(result, vocab, src);
  std::vector<PresentedEdit> presented;
  for (Edit& e : extract_typed_edits(src, out, classes)) {
    PresentedEdit p{std::move(e), std::nullopt};
    // A deletion has no emitted token of its own; it borrows the token that
    // follows the removed span.
    const std::size_t anchor = p.edit.tgt_span.lo;
    if (anchor < result.per_step.size()) p.example = result.per_step[anchor].example;
    presented.push_back(std::move(p));
  }
  return presented;
}

}  // namespace ebgec
