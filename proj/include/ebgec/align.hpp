#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace ebgec {

enum class ErrorType { DET, PREP, PUNCT, SPELL, VERB, NOUN, ADJ, OTHER };

const char* to_string(ErrorType type);
ErrorType parse_error_type(std::string_view name);

enum class EditOp { insert, remove, substitute };

const char* to_string(EditOp op);
EditOp parse_edit_op(std::string_view name);

// Half-open token range [lo, hi).
struct Span {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t size() const noexcept { return hi - lo; }
  bool empty() const noexcept { return hi == lo; }
  bool contains(std::size_t i) const noexcept { return lo <= i && i < hi; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Edit {
  Span src_span;
  Span tgt_span;
  EditOp op = EditOp::substitute;
  std::vector<std::string> src_tokens;
  std::vector<std::string> tgt_tokens;
  ErrorType type = ErrorType::OTHER;

  // "src/tgt" rendering with an empty side shown as "_".
  std::string render() const;
  friend bool operator==(const Edit&, const Edit&) = default;
};

// (op, src_tokens, tgt_tokens): what two edits must share to count as the same
// correction regardless of where they occur.
bool same_correction(const Edit& a, const Edit& b);

struct MatchingBlock {
  std::size_t a = 0;  // start in a
  std::size_t b = 0;  // start in b
  std::size_t size = 0;
  friend bool operator==(const MatchingBlock&, const MatchingBlock&) = default;
};

struct Alignment {
  std::vector<MatchingBlock> blocks;  // ordered, non-overlapping
  double similarity = 0.0;
};

// Ratcliff/Obershelp decomposition: longest common contiguous block, then
// recurse on both sides. Ties go to the earliest start in a, then in b.
Alignment gestalt_align(std::span<const std::string> a,
                        std::span<const std::string> b);

// Every gap between consecutive matching blocks becomes one edit. The
// error_type of each edit is left as OTHER; see classify_error.
std::vector<Edit> extract_edits(std::span<const std::string> src,
                                std::span<const std::string> tgt);

// Replays edits (ordered, non-overlapping, src coordinates) on src.
std::vector<std::string> apply_edits(std::span<const std::string> src,
                                     std::span<const Edit> edits);

// Same as apply_edits but keeps only the edits whose accept flag is set.
std::vector<std::string> apply_accepted(std::span<const std::string> src,
                                        std::span<const Edit> edits,
                                        const std::vector<bool>& accepted);

std::size_t char_edit_distance(std::string_view a, std::string_view b);

// Closed-class word lists used by the error typer.
struct ClosedClasses {
  std::unordered_set<std::string> determiners;
  std::unordered_set<std::string> prepositions;
  std::unordered_set<std::string> punctuation;

  static ClosedClasses load(const std::filesystem::path& dir);
  static const ClosedClasses& builtin();
};

ErrorType classify_error(const Edit& edit,
                         const ClosedClasses& classes = ClosedClasses::builtin());

// extract_edits followed by classify_error on each edit.
std::vector<Edit> extract_typed_edits(std::span<const std::string> src,
                                      std::span<const std::string> tgt,
                                      const ClosedClasses& classes = ClosedClasses::builtin());

// First edit whose target span covers tgt_pos; a deletion counts as covering
// the target token that follows it.
std::optional<std::size_t> edit_covering(std::span<const Edit> edits,
                                         std::size_t tgt_pos);

}  // namespace ebgec
