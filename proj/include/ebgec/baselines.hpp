#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ebgec/align.hpp"
#include "ebgec/datastore.hpp"
#include "ebgec/example.hpp"

// Example retrieval that never looks at the correction model's decoder.

namespace ebgec {

class Corpus;
class Seq2Seq;
class Vocab;

struct EditRef {
  std::uint32_t pair_id = 0;
  std::size_t edit_index = 0;
};

// Gold edits keyed by (op, src_tokens, tgt_tokens), case-sensitive.
class EditIndex {
 public:
  EditIndex() = default;
  static EditIndex build(const Corpus& corpus);

  static std::string signature(const Edit& edit);
  const std::vector<EditRef>* lookup(const Edit& edit) const;
  std::size_t size() const noexcept { return index_.size(); }

 private:
  std::unordered_map<std::string, std::vector<EditRef>> index_;
};

// Random matching example (seeded), or none for an unseen signature.
std::optional<Example> token_retrieve(const Edit& edit, const EditIndex& index,
                                      const Corpus& corpus, std::uint64_t rng_seed);

// Context-sensitive per-token embeddings of a whole sentence.
class ContextualEncoder {
 public:
  virtual ~ContextualEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<std::vector<float>> embed(std::span<const std::string> sentence) const = 0;
};

// Default encoder: the correction model's encoder run over the sentence.
class Seq2SeqContextEncoder final : public ContextualEncoder {
 public:
  Seq2SeqContextEncoder(const Seq2Seq& model, const Vocab& vocab);
  std::size_t dim() const override;
  std::vector<std::vector<float>> embed(std::span<const std::string> sentence) const override;

 private:
  const Seq2Seq& model_;
  const Vocab& vocab_;
};

// One entry per target token of every pair (no EOS entry). Entry tokens are
// vocabulary ids when a vocabulary is given, else kUnk.
Datastore build_contextual_store(const ContextualEncoder& encoder, const Corpus& corpus,
                                 const Vocab* vocab = nullptr);

// Nearest contextual key to the embedding of output[position]. Returns none
// for an empty store or an out-of-range position.
std::optional<Example> embed_retrieve(std::span<const std::string> output, std::size_t position,
                                      const Datastore& store, const ContextualEncoder& encoder,
                                      const Corpus& corpus, std::size_t k = 16);

// Attaches a baseline example to every edit of an output sentence. The token
// baseline draws with a seed derived from (rng_seed, edit index).
std::vector<PresentedEdit> attach_token_examples(const std::vector<Edit>& edits,
                                                 const EditIndex& index, const Corpus& corpus,
                                                 std::uint64_t rng_seed);
std::vector<PresentedEdit> attach_embed_examples(const std::vector<Edit>& edits,
                                                 std::span<const std::string> output,
                                                 const Datastore& store,
                                                 const ContextualEncoder& encoder,
                                                 const Corpus& corpus, std::size_t k = 16);

}  // namespace ebgec
