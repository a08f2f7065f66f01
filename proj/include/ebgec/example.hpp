#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ebgec/align.hpp"

namespace ebgec {

class Corpus;

// A training pair shown to the learner as the basis of a correction.
struct Example {
  std::uint32_t pair_id = 0;
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::size_t anchor_position = 0;  // index into tgt (== tgt.size() for EOS)
  double squared_distance = 0.0;
  std::optional<Edit> anchor_edit;  // gold edit covering the anchor, if any
};

struct PresentedEdit {
  Edit edit;
  std::optional<Example> example;
};

// Throws corpus_resolution for an unknown pair id.
Example resolve_example(const Corpus& corpus, std::uint32_t pair_id, std::size_t anchor_position,
                        double squared_distance);

}  // namespace ebgec
