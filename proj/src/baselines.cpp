#include "ebgec/baselines.hpp"

#include "ebgec/corpus.hpp"
#include "ebgec/error.hpp"
#include "ebgec/rng.hpp"
#include "ebgec/seq2seq.hpp"
#include "ebgec/vocab.hpp"

namespace ebgec {

EditIndex EditIndex::build(const Corpus& corpus) {
  EditIndex idx;
  for (const auto& pair : corpus.pairs()) {
    for (std::size_t i = 0; i < pair.gold_edits.size(); ++i) {
      idx.index_[signature(pair.gold_edits[i])].push_back({pair.pair_id, i});
    }
  }
  return idx;
}

std::string EditIndex::signature(const Edit& edit) {
  // Unit separators cannot occur inside whitespace-split tokens.
  std::string sig = to_string(edit.op);
  sig += '\x1f';
  for (const auto& t : edit.src_tokens) sig += t + '\x1e';
  sig += '\x1f';
  for (const auto& t : edit.tgt_tokens) sig += t + '\x1e';
  return sig;
}

const std::vector<EditRef>* EditIndex::lookup(const Edit& edit) const {
  auto it = index_.find(signature(edit));
  return it == index_.end() ? nullptr : &it->second;
}

std::optional<Example> token_retrieve(const Edit& edit, const EditIndex& index,
                                      const Corpus& corpus, std::uint64_t rng_seed) {
  const auto* refs = index.lookup(edit);
  if (!refs || refs->empty()) return std::nullopt;
  Rng rng = derive_rng(rng_seed, 0);
  const EditRef& ref = (*refs)[uniform_index(rng, refs->size())];
  const Edit& gold = corpus.at(ref.pair_id).gold_edits.at(ref.edit_index);
  Example ex = resolve_example(corpus, ref.pair_id, gold.tgt_span.lo, 0.0);
  ex.anchor_edit = gold;
  return ex;
}

Seq2SeqContextEncoder::Seq2SeqContextEncoder(const Seq2Seq& model, const Vocab& vocab)
    : model_(model), vocab_(vocab) {}

std::size_t Seq2SeqContextEncoder::dim() const { return model_.hidden_dim(); }

std::vector<std::vector<float>> Seq2SeqContextEncoder::embed(
    std::span<const std::string> sentence) const {
  if (sentence.empty()) return {};
  const EncoderMemory memory = model_.encode(vocab_.encode(sentence));
  std::vector<std::vector<float>> out(sentence.size());
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    // Column 0 is the BOS frame.
    const auto col = memory.states.col(static_cast<Eigen::Index>(i + 1));
    out[i].assign(col.data(), col.data() + col.size());
  }
  return out;
}

Datastore build_contextual_store(const ContextualEncoder& encoder, const Corpus& corpus,
                                 const Vocab* vocab) {
  Datastore store(encoder.dim());
  for (const auto& pair : corpus.pairs()) {
    const auto vectors = encoder.embed(pair.tgt);
    if (pair.tgt.size() >= 0xFFFF) fail(ErrorCode::invalid_input, "target too long for the store");
    for (std::size_t i = 0; i < vectors.size(); ++i) {
      const TokenId token = vocab ? vocab->id(pair.tgt[i]) : kUnk;
      store.append(vectors[i], {token, pair.pair_id, static_cast<std::uint16_t>(i)});
    }
  }
  return store;
}

namespace {

std::optional<Example> nearest_example(std::span<const float> query, const Datastore& store,
                                       const Corpus& corpus, std::size_t k) {
  if (store.empty()) return std::nullopt;
  const NeighborSet hits = store.knn_exact(query, k);
  if (hits.empty()) return std::nullopt;
  const Neighbor& n = hits.front();
  return resolve_example(corpus, n.value.pair_id, n.value.position, n.distance);
}

}  // namespace

std::optional<Example> embed_retrieve(std::span<const std::string> output, std::size_t position,
                                      const Datastore& store, const ContextualEncoder& encoder,
                                      const Corpus& corpus, std::size_t k) {
  if (store.empty() || position >= output.size()) return std::nullopt;
  const auto vectors = encoder.embed(output);
  return nearest_example(vectors[position], store, corpus, k);
}

std::vector<PresentedEdit> attach_token_examples(const std::vector<Edit>& edits,
                                                 const EditIndex& index, const Corpus& corpus,
                                                 std::uint64_t rng_seed) {
  std::vector<PresentedEdit> out;
  out.reserve(edits.size());
  for (std::size_t i = 0; i < edits.size(); ++i) {
    out.push_back({edits[i], token_retrieve(edits[i], index, corpus, splitmix64(rng_seed + i))});
  }
  return out;
}

std::vector<PresentedEdit> attach_embed_examples(const std::vector<Edit>& edits,
                                                 std::span<const std::string> output,
                                                 const Datastore& store,
                                                 const ContextualEncoder& encoder,
                                                 const Corpus& corpus, std::size_t k) {
  std::vector<PresentedEdit> out;
  out.reserve(edits.size());
  const auto vectors = store.empty() ? std::vector<std::vector<float>>{} : encoder.embed(output);
  for (const auto& e : edits) {
    PresentedEdit p{e, std::nullopt};
    // Same anchor as the kNN presenter: first target token of the edit, or
    // the token after a deletion.
    if (e.tgt_span.lo < vectors.size()) {
      p.example = nearest_example(vectors[e.tgt_span.lo], store, corpus, k);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ebgec
