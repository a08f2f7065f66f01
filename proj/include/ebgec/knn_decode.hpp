#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ebgec/datastore.hpp"
#include "ebgec/example.hpp"
#include "ebgec/seq2seq.hpp"
#include "ebgec/vocab.hpp"

namespace ebgec {

class Corpus;

enum class SearchMode { exact, approximate };
enum class DistanceExponent { squared, plain };

struct DecodeConfig {
  double lambda = 0.5;
  std::size_t k = 16;
  double temperature = 1000.0;
  std::size_t beam_width = 5;
  std::size_t max_len = 0;  // 0: 2 * source length + 10
  std::optional<double> distance_threshold;
  SearchMode search_mode = SearchMode::exact;
  DistanceExponent distance_exponent = DistanceExponent::squared;

  void validate() const;  // throws invalid_config
};

// Probability vector over the vocabulary. An all-zero vector is the marker
// for "no neighbors" and is never normalized.
struct TokenDistribution {
  std::vector<double> probs;

  bool is_empty_marker() const;
  double sum() const;
};

TokenDistribution knn_distribution(const NeighborSet& neighbors, std::size_t vocab_size,
                                   double temperature,
                                   DistanceExponent exponent = DistanceExponent::squared);

// lambda * knn + (1 - lambda) * vanilla; vanilla unchanged for an empty knn.
TokenDistribution interpolate(const TokenDistribution& vanilla, const TokenDistribution& knn,
                              double lambda);

struct StepRecord {
  TokenId token = 0;
  NeighborSet neighbors;
  std::optional<Example> example;
};

struct CorrectionResult {
  TokenSeq output;  // without BOS/EOS
  std::vector<StepRecord> per_step;
  double score = 0.0;  // log-probability under the interpolated distribution
};

// Nearest neighbor carrying the emitted token, subject to the threshold.
std::optional<Example> choose_example(const StepRecord& step, const Corpus& corpus,
                                      std::optional<double> distance_threshold);

struct StepTrace {
  std::size_t step = 0;
  const TokenDistribution& vanilla;
  const TokenDistribution& knn;
  const TokenDistribution& mixed;
};

class Corrector {
 public:
  // store and corpus may be null (vanilla decoding, no examples).
  Corrector(const Seq2Seq& model, const Datastore* store, const Corpus* corpus);

  CorrectionResult correct(std::span<const TokenId> src, const DecodeConfig& config,
                           const std::function<void(const StepTrace&)>& trace = {}) const;

  // Decodes many sources, fanned out over threads (0 = hardware concurrency).
  std::vector<CorrectionResult> correct_all(const std::vector<TokenSeq>& sources,
                                            const DecodeConfig& config,
                                            std::size_t threads = 0) const;

  const Seq2Seq& model() const noexcept { return model_; }
  const Datastore* store() const noexcept { return store_; }
  const Corpus* corpus() const noexcept { return corpus_; }

 private:
  const Seq2Seq& model_;
  const Datastore* store_;
  const Corpus* corpus_;
};

// Edits between src and the corrected output, each with the example chosen
// at the first emitted token of its target span.
std::vector<PresentedEdit> present(const CorrectionResult& result,
                                   std::span<const std::string> src, const Vocab& vocab,
                                   const ClosedClasses& classes = ClosedClasses::builtin());

// Output tokens as surface strings. Each <unk> the model emits takes the
// surface form of the next unused <unk> source token, in order.
std::vector<std::string> output_tokens(const CorrectionResult& result, const Vocab& vocab,
                                       std::span<const std::string> src = {});

}  // namespace ebgec
