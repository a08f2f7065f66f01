#include <algorithm>

#include "support.hpp"

#include "ebgec/baselines.hpp"

using namespace ebgec;
using ebgec::testing::TempDir;
using ebgec::testing::tiny_system;
using ebgec::testing::toks;

namespace {

SentencePair typed_pair(std::uint32_t id, const char* src, const char* tgt) {
  SentencePair p{id, toks(src), toks(tgt), {}};
  p.gold_edits = extract_typed_edits(p.src, p.tgt);
  return p;
}

// Embeds each token as (length, first char, position) so distances are easy
// to reason about.
class ToyEncoder final : public ContextualEncoder {
 public:
  std::size_t dim() const override { return 3; }
  std::vector<std::vector<float>> embed(std::span<const std::string> sentence) const override {
    std::vector<std::vector<float>> out;
    for (std::size_t i = 0; i < sentence.size(); ++i) {
      out.push_back({static_cast<float>(sentence[i].size()),
                     static_cast<float>(static_cast<unsigned char>(sentence[i][0])),
                     static_cast<float>(i)});
    }
    return out;
  }
};

}  // namespace

TEST_CASE("edit index groups gold edits by exact signature") {
  const Corpus corpus({typed_pair(1, "They have tremendous problem .", "They have a tremendous problem ."),
                       typed_pair(2, "I saw cat .", "I saw a cat ."),
                       typed_pair(3, "I saw A cat .", "I saw a cat ."),
                       typed_pair(4, "He sat in chair .", "He sat in a chair .")});
  const auto idx = EditIndex::build(corpus);
  const auto insert_a = corpus.at(2).gold_edits.at(0);
  const auto* refs = idx.lookup(insert_a);
  REQUIRE(refs);
  CHECK(refs->size() == 3);
  // Case matters: "A" -> "a" is its own signature.
  const auto* sub = idx.lookup(corpus.at(3).gold_edits.at(0));
  REQUIRE(sub);
  CHECK(sub->size() == 1);
  CHECK(EditIndex::signature(insert_a) != EditIndex::signature(corpus.at(3).gold_edits.at(0)));

  Edit unseen = insert_a;
  unseen.tgt_tokens = {"the"};
  CHECK(idx.lookup(unseen) == nullptr);
  CHECK_FALSE(token_retrieve(unseen, idx, corpus, 1));
}

TEST_CASE("token_retrieve is reproducible and returns a matching gold edit") {
  const auto& sys = tiny_system();
  const auto idx = EditIndex::build(*sys.corpus);
  std::size_t found = 0;
  for (const auto& p : sys.held_out) {
    for (const auto& e : p.gold_edits) {
      const auto a = token_retrieve(e, idx, *sys.corpus, 42);
      const auto b = token_retrieve(e, idx, *sys.corpus, 42);
      REQUIRE(a.has_value() == b.has_value());
      if (!a) continue;
      ++found;
      CHECK(a->pair_id == b->pair_id);
      REQUIRE(a->anchor_edit);
      CHECK(EditIndex::signature(*a->anchor_edit) == EditIndex::signature(e));
      CHECK(a->anchor_position == a->anchor_edit->tgt_span.lo);
    }
  }
  CHECK(found > 0);
}

TEST_CASE("token examples use a per-edit seed") {
  const Corpus corpus({typed_pair(1, "I saw cat .", "I saw a cat ."), typed_pair(2, "We met dog .", "We met a dog ."),
                       typed_pair(3, "It is bird .", "It is a bird ."), typed_pair(4, "So ate pie .", "So ate a pie .")});
  const auto idx = EditIndex::build(corpus);
  const auto edit = corpus.at(1).gold_edits.at(0);
  const std::vector<Edit> edits(6, edit);
  const auto a = attach_token_examples(edits, idx, corpus, 9);
  const auto b = attach_token_examples(edits, idx, corpus, 9);
  REQUIRE(a.size() == 6);
  std::vector<std::uint32_t> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].example);
    CHECK(a[i].example->pair_id == b[i].example->pair_id);
    ids.push_back(a[i].example->pair_id);
  }
  std::sort(ids.begin(), ids.end());
  CHECK(ids.front() != ids.back());
}

TEST_CASE("embed retrieval ranks by exact distance over contextual keys") {
  const Corpus corpus({typed_pair(1, "I saw cat .", "I saw a cat ."), typed_pair(2, "We met dog .", "We met the dog .")});
  const ToyEncoder enc;
  const auto store = build_contextual_store(enc, corpus);
  CHECK(store.size() == 5 + 5);
  CHECK(store.value(0).token == kUnk);

  // Same sentence: every position retrieves itself at distance zero.
  const auto tgt = corpus.at(2).tgt;
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    const auto ex = embed_retrieve(tgt, i, store, enc, corpus);
    REQUIRE(ex);
    // The final "." ties with the one in pair 1, which has the lower index.
    CHECK(ex->pair_id == (i + 1 < tgt.size() ? 2u : 1u));
    CHECK(ex->anchor_position == i);
    CHECK(ex->squared_distance == 0.0);
  }
  // "an" at position 2 is closest to "a" (length 1 vs 3).
  const auto out = toks("You had an egg .");
  const auto ex = embed_retrieve(out, 2, store, enc, corpus);
  REQUIRE(ex);
  CHECK(ex->tgt[ex->anchor_position] == "a");
  CHECK_FALSE(embed_retrieve(out, 5, store, enc, corpus));
  CHECK_FALSE(embed_retrieve(out, 0, Datastore(3), enc, corpus));
}

TEST_CASE("embed examples anchor deletions on the following token") {
  const Corpus corpus({typed_pair(1, "I saw cat .", "I saw a cat .")});
  const ToyEncoder enc;
  const auto store = build_contextual_store(enc, corpus);
  const auto src = toks("I saw the the cat .");
  const auto out = toks("I saw the cat .");
  const auto edits = extract_typed_edits(src, out);
  REQUIRE(edits.size() == 1);
  const auto presented = attach_embed_examples(edits, out, store, enc, corpus);
  REQUIRE(presented.size() == 1);
  REQUIRE(presented[0].example);
  const auto expected = embed_retrieve(out, edits[0].tgt_span.lo, store, enc, corpus);
  CHECK(presented[0].example->anchor_position == expected->anchor_position);
}

TEST_CASE("seq2seq contextual encoder retrieves training sentences at distance zero") {
  const auto& sys = tiny_system();
  const Seq2SeqContextEncoder enc(*sys.model, sys.vocab);
  CHECK(enc.dim() == sys.model->hidden_dim());
  const Corpus small(std::vector<SentencePair>(sys.train.begin(), sys.train.begin() + 50));
  const auto store = build_contextual_store(enc, small, &sys.vocab);
  std::size_t expected = 0;
  for (const auto& p : small.pairs()) expected += p.tgt.size();
  CHECK(store.size() == expected);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& p = small.pairs()[i];
    for (std::size_t pos = 0; pos < p.tgt.size(); ++pos) {
      const auto ex = embed_retrieve(p.tgt, pos, store, enc, small);
      REQUIRE(ex);
      CHECK(ex->squared_distance == 0.0);
      CHECK(ex->tgt[ex->anchor_position] == p.tgt[pos]);
    }
  }
}

TEST_CASE("contextual store persists under its own magic") {
  const Corpus corpus({typed_pair(1, "I saw cat .", "I saw a cat .")});
  const ToyEncoder enc;
  const auto store = build_contextual_store(enc, corpus);
  TempDir dir;
  store.save(dir / "ctx.bin", kContextStoreMagic);
  const auto back = Datastore::load(dir / "ctx.bin", kContextStoreMagic, 3);
  CHECK(back.size() == store.size());
  CHECK(std::equal(back.keys().begin(), back.keys().end(), store.keys().begin()));
  CHECK_THROWS_CODE(Datastore::load(dir / "ctx.bin"), ErrorCode::magic_mismatch);
}
