#include "ebgec/example.hpp"

#include "ebgec/corpus.hpp"

namespace ebgec {

Example resolve_example(const Corpus& corpus, std::uint32_t pair_id, std::size_t anchor_position,
                        double squared_distance) {
  const SentencePair& pair = corpus.at(pair_id);
  Example ex;
  ex.pair_id = pair_id;
  ex.src = pair.src;
  ex.tgt = pair.tgt;
  ex.anchor_position = anchor_position;
  ex.squared_distance = squared_distance;
  if (auto i = edit_covering(pair.gold_edits, anchor_position)) ex.anchor_edit = pair.gold_edits[*i];
  return ex;
}

}  // namespace ebgec
