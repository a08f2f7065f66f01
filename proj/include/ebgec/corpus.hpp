#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ebgec/align.hpp"
#include "ebgec/vocab.hpp"

namespace ebgec {

struct SentencePair {
  std::uint32_t pair_id = 0;
  std::vector<std::string> src;  // incorrect sentence
  std::vector<std::string> tgt;  // correct sentence
  std::vector<Edit> gold_edits;
};

struct CorruptionRule {
  bool enabled = true;
  double probability = 0.3;  // per eligible site
};

// One rule family per gold ErrorType the generator can produce.
struct CorruptionConfig {
  CorruptionRule det{true, 0.4};     // article drop / swap
  CorruptionRule prep{true, 0.4};    // preposition swap
  CorruptionRule punct{true, 0.3};   // comma / period drop
  CorruptionRule spell{true, 0.15};  // character noise
  CorruptionRule verb{true, 0.4};    // agreement form swap
  int min_errors = 1;
  int max_errors = 2;

  bool any_enabled() const;
};

// Clean sentences from a small English grammar (subject/verb agreement,
// article choice, verb-preposition collocations). Deterministic in seed.
std::vector<std::string> synthesize_clean_sentences(std::size_t count,
                                                    std::uint64_t seed);

// Corrupts each clean sentence with 1..2 errors drawn from the enabled rules.
// Sentences where nothing fired are dropped. Pair ids are assigned
// sequentially from first_pair_id over the surviving pairs.
std::vector<SentencePair> generate_corpus(const std::vector<std::string>& seed_text,
                                          std::uint64_t rng_seed,
                                          const CorruptionConfig& rules,
                                          std::uint32_t first_pair_id = 0);

struct CorpusSplit {
  std::vector<SentencePair> train;
  std::vector<SentencePair> dev;
  std::vector<SentencePair> test;
};

// Consecutive slices in corpus order. Throws invalid_config when short.
CorpusSplit split_corpus(const std::vector<SentencePair>& pairs, std::size_t train,
                         std::size_t dev, std::size_t test);

std::vector<SentencePair> filter_identical(const std::vector<SentencePair>& pairs);

// Vocabulary over a training corpus: every target token, plus source tokens
// seen at least min_src_count times.
Vocab build_vocab(const std::vector<SentencePair>& pairs, std::size_t min_src_count = 2);

// Immutable collection with pair_id lookup.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<SentencePair> pairs);

  const std::vector<SentencePair>& pairs() const noexcept { return pairs_; }
  std::size_t size() const noexcept { return pairs_.size(); }
  bool empty() const noexcept { return pairs_.empty(); }

  // Throws corpus_resolution for an unknown id.
  const SentencePair& at(std::uint32_t pair_id) const;
  const SentencePair* find(std::uint32_t pair_id) const;

 private:
  std::vector<SentencePair> pairs_;
  std::unordered_map<std::uint32_t, std::size_t> by_id_;
};

// One JSON object per line: pair_id, src, tgt, edits[{src_span, tgt_span, type}].
std::string corpus_line(const SentencePair& pair);
SentencePair parse_corpus_line(const std::string& line);
void save_corpus(const std::filesystem::path& path, const std::vector<SentencePair>& pairs);
std::vector<SentencePair> load_corpus(const std::filesystem::path& path);

}  // namespace ebgec
