#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>

#include "doctest.h"

#include "ebgec/corpus.hpp"
#include "ebgec/datastore.hpp"
#include "ebgec/error.hpp"
#include "ebgec/seq2seq.hpp"
#include "ebgec/vocab.hpp"

#define CHECK_THROWS_CODE(expr, expected_code)                      \
  do {                                                              \
    bool thrown_ = false;                                           \
    try {                                                           \
      (void)(expr);                                                 \
    } catch (const ::ebgec::Error& e_) {                            \
      thrown_ = true;                                               \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());       \
    }                                                               \
    CHECK_MESSAGE(thrown_, "expected an ebgec::Error from " #expr); \
  } while (0)

namespace ebgec::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("ebgec_test_" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::string> toks(const std::string& text) { return split_whitespace(text); }

// A small model trained for a few epochs on a small synthetic corpus. Shared
// across test cases; built on first use.
struct TinySystem {
  std::vector<SentencePair> train;
  std::vector<SentencePair> held_out;
  Vocab vocab;
  ModelParams params;
  std::unique_ptr<Seq2Seq> model;
  std::unique_ptr<Corpus> corpus;
  std::unique_ptr<Datastore> store;
};

inline const TinySystem& tiny_system() {
  static const TinySystem sys = [] {
    TinySystem s;
    const auto clean = synthesize_clean_sentences(520, 99);
    auto pairs = generate_corpus(clean, 5, CorruptionConfig{});
    s.held_out.assign(pairs.begin() + 400, pairs.end());
    pairs.resize(400);
    s.train = pairs;
    s.vocab = build_vocab(s.train);
    TrainOptions opt;
    opt.epochs = 12;
    opt.rng_seed = 3;
    s.params = train(s.train, s.vocab, ModelDims{0, 16, 32}, opt);
    s.model = std::make_unique<Seq2Seq>(s.params);
    s.corpus = std::make_unique<Corpus>(s.train);
    s.store = std::make_unique<Datastore>(build_datastore(*s.model, s.train, s.vocab));
    return s;
  }();
  return sys;
}

}  // namespace ebgec::testing
