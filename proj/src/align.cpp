#include "ebgec/align.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_map>

#include "ebgec/error.hpp"
#include "ebgec/vocab.hpp"

namespace ebgec {

const char* to_string(ErrorType type) {
  switch (type) {
    case ErrorType::DET: return "DET";
    case ErrorType::PREP: return "PREP";
    case ErrorType::PUNCT: return "PUNCT";
    case ErrorType::SPELL: return "SPELL";
    case ErrorType::VERB: return "VERB";
    case ErrorType::NOUN: return "NOUN";
    case ErrorType::ADJ: return "ADJ";
    case ErrorType::OTHER: return "OTHER";
  }
  return "OTHER";
}

ErrorType parse_error_type(std::string_view name) {
  static constexpr ErrorType all[] = {ErrorType::DET,  ErrorType::PREP, ErrorType::PUNCT,
                                      ErrorType::SPELL, ErrorType::VERB, ErrorType::NOUN,
                                      ErrorType::ADJ,  ErrorType::OTHER};
  for (ErrorType t : all) {
    if (name == to_string(t)) return t;
  }
  fail(ErrorCode::invalid_input, "unknown error type '" + std::string(name) + "'");
}

const char* to_string(EditOp op) {
  switch (op) {
    case EditOp::insert: return "insert";
    case EditOp::remove: return "delete";
    case EditOp::substitute: return "substitute";
  }
  return "substitute";
}

EditOp parse_edit_op(std::string_view name) {
  if (name == "insert") return EditOp::insert;
  if (name == "delete") return EditOp::remove;
  if (name == "substitute") return EditOp::substitute;
  fail(ErrorCode::invalid_input, "unknown edit op '" + std::string(name) + "'");
}

std::string Edit::render() const {
  auto side = [](const std::vector<std::string>& toks) {
    return toks.empty() ? std::string("_") : join_tokens(toks);
  };
  return side(src_tokens) + "/" + side(tgt_tokens);
}

bool same_correction(const Edit& a, const Edit& b) {
  return a.op == b.op && a.src_tokens == b.src_tokens && a.tgt_tokens == b.tgt_tokens;
}

namespace {

// Interns both sequences into small integers so the block search compares ints.
void intern(std::span<const std::string> a, std::span<const std::string> b,
            std::vector<int>& ia, std::vector<int>& ib) {
  std::unordered_map<std::string_view, int> ids;
  auto get = [&](const std::string& s) {
    auto [it, inserted] = ids.emplace(s, static_cast<int>(ids.size()));
    return it->second;
  };
  ia.reserve(a.size());
  ib.reserve(b.size());
  for (const auto& s : a) ia.push_back(get(s));
  for (const auto& s : b) ib.push_back(get(s));
}

MatchingBlock longest_match(const std::vector<int>& a, const std::vector<int>& b, std::size_t alo,
                            std::size_t ahi, std::size_t blo, std::size_t bhi) {
  MatchingBlock best{alo, blo, 0};
  std::vector<std::size_t> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
  for (std::size_t i = alo; i < ahi; ++i) {
    for (std::size_t j = blo; j < bhi; ++j) {
      const std::size_t col = j - blo + 1;
      if (a[i] == b[j]) {
        cur[col] = prev[col - 1] + 1;
        const std::size_t len = cur[col];
        const std::size_t sa = i + 1 - len;
        const std::size_t sb = j + 1 - len;
        if (len > best.size || (len == best.size && (sa < best.a || (sa == best.a && sb < best.b)))) {
          best = {sa, sb, len};
        }
      } else {
        cur[col] = 0;
      }
    }
    std::swap(prev, cur);
  }
  return best;
}

void collect_blocks(const std::vector<int>& a, const std::vector<int>& b, std::size_t alo,
                    std::size_t ahi, std::size_t blo, std::size_t bhi,
                    std::vector<MatchingBlock>& out) {
  if (alo >= ahi || blo >= bhi) return;
  const MatchingBlock m = longest_match(a, b, alo, ahi, blo, bhi);
  if (m.size == 0) return;
  collect_blocks(a, b, alo, m.a, blo, m.b, out);
  out.push_back(m);
  collect_blocks(a, b, m.a + m.size, ahi, m.b + m.size, bhi, out);
}

bool is_punct_token(const std::string& t) {
  if (t.empty()) return false;
  return std::all_of(t.begin(), t.end(),
                     [](unsigned char c) { return std::ispunct(c) != 0; });
}

bool has_suffix(const std::string& s, std::string_view suf) {
  return s.size() > suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

std::string strip_inflection(const std::string& s) {
  for (std::string_view suf : {"ing", "es", "ed", "s", "d"}) {
    if (has_suffix(s, suf) && s.size() - suf.size() >= 2) return s.substr(0, s.size() - suf.size());
  }
  return s;
}

bool verb_inflection(const std::string& a, const std::string& b) {
  static const std::vector<std::pair<std::string, std::string>> irregular = {
      {"has", "have"}, {"is", "are"}, {"is", "am"}, {"am", "are"},
      {"was", "were"}, {"does", "do"}, {"goes", "go"}, {"had", "have"}, {"had", "has"}};
  for (const auto& [x, y] : irregular) {
    if ((a == x && b == y) || (a == y && b == x)) return true;
  }
  const std::string& shorter = a.size() <= b.size() ? a : b;
  const std::string& longer = a.size() <= b.size() ? b : a;
  if (shorter.size() >= 2 && longer.compare(0, shorter.size(), shorter) == 0) {
    const std::string tail = longer.substr(shorter.size());
    if (tail == "s" || tail == "es" || tail == "ed" || tail == "d" || tail == "ing") return true;
  }
  const std::string sa = strip_inflection(a);
  const std::string sb = strip_inflection(b);
  return a != b && sa.size() >= 3 && sa == sb;
}

std::vector<std::string> read_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read word list " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

Alignment gestalt_align(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<int> ia, ib;
  intern(a, b, ia, ib);
  Alignment out;
  collect_blocks(ia, ib, 0, ia.size(), 0, ib.size(), out.blocks);
  std::size_t matched = 0;
  for (const auto& m : out.blocks) matched += m.size;
  const std::size_t total = a.size() + b.size();
  out.similarity = total == 0 ? 1.0 : 2.0 * static_cast<double>(matched) / static_cast<double>(total);
  return out;
}

std::vector<Edit> extract_edits(std::span<const std::string> src, std::span<const std::string> tgt) {
  const Alignment alignment = gestalt_align(src, tgt);
  std::vector<Edit> edits;
  std::size_t i = 0, j = 0;
  auto emit_gap = [&](std::size_t ai, std::size_t bj) {
    if (ai == i && bj == j) return;
    Edit e;
    e.src_span = {i, ai};
    e.tgt_span = {j, bj};
    e.op = e.src_span.empty() ? EditOp::insert
                              : (e.tgt_span.empty() ? EditOp::remove : EditOp::substitute);
    e.src_tokens.assign(src.begin() + static_cast<std::ptrdiff_t>(i),
                        src.begin() + static_cast<std::ptrdiff_t>(ai));
    e.tgt_tokens.assign(tgt.begin() + static_cast<std::ptrdiff_t>(j),
                        tgt.begin() + static_cast<std::ptrdiff_t>(bj));
    edits.push_back(std::move(e));
  };
  for (const auto& m : alignment.blocks) {
    emit_gap(m.a, m.b);
    i = m.a + m.size;
    j = m.b + m.size;
  }
  emit_gap(src.size(), tgt.size());
  return edits;
}

std::vector<std::string> apply_edits(std::span<const std::string> src, std::span<const Edit> edits) {
  return apply_accepted(src, edits, std::vector<bool>(edits.size(), true));
}

std::vector<std::string> apply_accepted(std::span<const std::string> src,
                                        std::span<const Edit> edits,
                                        const std::vector<bool>& accepted) {
  if (accepted.size() != edits.size()) {
    fail(ErrorCode::invalid_input, "accept flags do not match the edit count");
  }
  std::vector<std::string> out;
  std::size_t cursor = 0;
  for (std::size_t e = 0; e < edits.size(); ++e) {
    const Edit& edit = edits[e];
    if (edit.src_span.lo < cursor || edit.src_span.hi > src.size() ||
        edit.src_span.lo > edit.src_span.hi) {
      fail(ErrorCode::invalid_input, "edits overlap or fall outside the source");
    }
    if (!accepted[e]) continue;
    out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(cursor),
               src.begin() + static_cast<std::ptrdiff_t>(edit.src_span.lo));
    out.insert(out.end(), edit.tgt_tokens.begin(), edit.tgt_tokens.end());
    cursor = edit.src_span.hi;
  }
  out.insert(out.end(), src.begin() + static_cast<std::ptrdiff_t>(cursor), src.end());
  return out;
}

std::size_t char_edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

ClosedClasses ClosedClasses::load(const std::filesystem::path& dir) {
  ClosedClasses c;
  for (auto& t : read_list(dir / "determiners.txt")) c.determiners.insert(std::move(t));
  for (auto& t : read_list(dir / "prepositions.txt")) c.prepositions.insert(std::move(t));
  for (auto& t : read_list(dir / "punctuation.txt")) c.punctuation.insert(std::move(t));
  return c;
}

const ClosedClasses& ClosedClasses::builtin() {
  // Mirrors data/wordlists; a test keeps the two in sync.
  static const ClosedClasses lists = [] {
    ClosedClasses c;
    c.determiners = {"a", "an", "the", "this", "that", "these", "those", "some",
                     "any", "each", "every", "another", "no"};
    c.prepositions = {"about", "above", "across", "after", "against", "along", "among",
                      "around", "at", "before", "behind", "below", "beside", "between",
                      "beyond", "by", "despite", "down", "during", "except", "for",
                      "from", "in", "inside", "into", "like", "near", "of", "off", "on",
                      "onto", "out", "outside", "over", "past", "since", "through",
                      "throughout", "till", "to", "toward", "towards", "under", "until",
                      "up", "upon", "with", "within", "without"};
    c.punctuation = {".", ",", ";", ":", "!", "?", "\"", "'", "-", "(", ")", "..."};
    return c;
  }();
  return lists;
}

ErrorType classify_error(const Edit& edit, const ClosedClasses& classes) {
  std::vector<const std::string*> tokens;
  for (const auto& t : edit.src_tokens) tokens.push_back(&t);
  for (const auto& t : edit.tgt_tokens) tokens.push_back(&t);
  if (tokens.empty()) return ErrorType::OTHER;

  auto all_in = [&](const std::unordered_set<std::string>& set) {
    return std::all_of(tokens.begin(), tokens.end(), [&](const std::string* t) { return set.count(*t) > 0; });
  };
  if (all_in(classes.determiners)) return ErrorType::DET;
  if (all_in(classes.prepositions)) return ErrorType::PREP;
  if (std::all_of(tokens.begin(), tokens.end(), [&](const std::string* t) {
        return classes.punctuation.count(*t) > 0 || is_punct_token(*t);
      })) {
    return ErrorType::PUNCT;
  }
  if (edit.op == EditOp::substitute && edit.src_tokens.size() == 1 && edit.tgt_tokens.size() == 1) {
    const std::string& s = edit.src_tokens[0];
    const std::string& t = edit.tgt_tokens[0];
    // Inflectional pairs are mostly within edit distance 2, so they are
    // tested before the spelling rule.
    if (verb_inflection(s, t)) return ErrorType::VERB;
    if (!s.empty() && !t.empty() && s[0] == t[0] && char_edit_distance(s, t) <= 2) {
      return ErrorType::SPELL;
    }
  }
  return ErrorType::OTHER;
}

std::vector<Edit> extract_typed_edits(std::span<const std::string> src,
                                      std::span<const std::string> tgt,
                                      const ClosedClasses& classes) {
  auto edits = extract_edits(src, tgt);
  for (auto& e : edits) e.type = classify_error(e, classes);
  return edits;
}

std::optional<std::size_t> edit_covering(std::span<const Edit> edits, std::size_t tgt_pos) {
  for (std::size_t i = 0; i < edits.size(); ++i) {
    const Span& s = edits[i].tgt_span;
    if (s.contains(tgt_pos) || (s.empty() && s.lo == tgt_pos)) return i;
  }
  return std::nullopt;
}

}  // namespace ebgec
