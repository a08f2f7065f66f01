#include "ebgec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>

#include "json.hpp"

#include "ebgec/error.hpp"
#include "ebgec/rng.hpp"

namespace ebgec {

namespace {

using ojson = nlohmann::ordered_json;

enum class Rule { det, prep, punct, spell, verb };

ErrorType type_of(Rule r) {
  switch (r) {
    case Rule::det: return ErrorType::DET;
    case Rule::prep: return ErrorType::PREP;
    case Rule::punct: return ErrorType::PUNCT;
    case Rule::spell: return ErrorType::SPELL;
    case Rule::verb: return ErrorType::VERB;
  }
  return ErrorType::OTHER;
}

const std::vector<std::string>& swap_prepositions() {
  static const std::vector<std::string> p = {"in", "on", "at", "to", "for", "of", "about", "with"};
  return p;
}

const std::unordered_map<std::string, std::string>& verb_swaps() {
  static const std::unordered_map<std::string, std::string> m = [] {
    std::unordered_map<std::string, std::string> out;
    const std::pair<const char*, const char*> pairs[] = {
        {"has", "have"},     {"is", "are"},     {"was", "were"},   {"goes", "go"},
        {"arrives", "arrive"}, {"waits", "wait"}, {"lives", "live"}, {"works", "work"},
        {"walks", "walk"},   {"looks", "look"}, {"talks", "talk"}, {"am", "is"}};
    for (const auto& [a, b] : pairs) {
      out.emplace(a, b);
      out.emplace(b, a);
    }
    return out;
  }();
  return m;
}

bool rule_applies(Rule r, const std::string& tok, bool last) {
  const ClosedClasses& cc = ClosedClasses::builtin();
  switch (r) {
    case Rule::det: return tok == "a" || tok == "an" || tok == "the";
    case Rule::prep:
      return std::find(swap_prepositions().begin(), swap_prepositions().end(), tok) !=
             swap_prepositions().end();
    case Rule::punct: return tok == "," || (tok == "." && last);
    case Rule::spell:
      return tok.size() >= 4 &&
             std::all_of(tok.begin(), tok.end(), [](unsigned char c) { return std::islower(c) != 0; }) &&
             !cc.determiners.count(tok) && !cc.prepositions.count(tok) && !verb_swaps().count(tok);
    case Rule::verb: return verb_swaps().count(tok) > 0;
  }
  return false;
}

std::string char_noise(const std::string& w, Rng& rng) {
  // First letter is kept so the typer's same-initial spelling rule holds.
  for (int attempt = 0; attempt < 8; ++attempt) {
    std::string out = w;
    const std::size_t pos = 1 + uniform_index(rng, w.size() - 1);
    switch (uniform_index(rng, 4)) {
      case 0: out.erase(pos, 1); break;
      case 1: out.insert(pos, 1, w[pos]); break;
      case 2:
        if (pos + 1 < out.size()) std::swap(out[pos], out[pos + 1]);
        break;
      default: out[pos] = static_cast<char>('a' + uniform_index(rng, 26)); break;
    }
    if (out != w) return out;
  }
  return w + w.back();
}

// Replacement for the clean token on the incorrect side (empty = dropped).
std::vector<std::string> corrupt(Rule r, const std::string& tok, Rng& rng) {
  switch (r) {
    case Rule::det:
      if (bernoulli(rng, 0.5)) return {};
      if (tok == "the") return {"a"};
      if (tok == "an") return {"a"};
      return {"the"};
    case Rule::prep: {
      const auto& preps = swap_prepositions();
      std::string alt;
      do {
        alt = preps[uniform_index(rng, preps.size())];
      } while (alt == tok);
      return {alt};
    }
    case Rule::punct: return {};
    case Rule::spell: return {char_noise(tok, rng)};
    case Rule::verb: return {verb_swaps().at(tok)};
  }
  return {tok};
}

const CorruptionRule& rule_config(const CorruptionConfig& c, Rule r) {
  switch (r) {
    case Rule::det: return c.det;
    case Rule::prep: return c.prep;
    case Rule::punct: return c.punct;
    case Rule::spell: return c.spell;
    case Rule::verb: return c.verb;
  }
  return c.det;
}

constexpr Rule kRules[] = {Rule::det, Rule::prep, Rule::punct, Rule::spell, Rule::verb};

}  // namespace

bool CorruptionConfig::any_enabled() const {
  return det.enabled || prep.enabled || punct.enabled || spell.enabled || verb.enabled;
}

std::vector<SentencePair> generate_corpus(const std::vector<std::string>& seed_text,
                                          std::uint64_t rng_seed, const CorruptionConfig& rules,
                                          std::uint32_t first_pair_id) {
  if (seed_text.empty()) fail(ErrorCode::invalid_input, "seed text is empty");
  if (!rules.any_enabled()) fail(ErrorCode::invalid_config, "every corruption rule is disabled");
  if (rules.min_errors < 1 || rules.max_errors < rules.min_errors) {
    fail(ErrorCode::invalid_config, "error count range must satisfy 1 <= min <= max");
  }

  std::vector<SentencePair> out;
  std::uint32_t next_id = first_pair_id;
  for (std::size_t s = 0; s < seed_text.size(); ++s) {
    const auto clean = split_whitespace(seed_text[s]);
    if (clean.empty()) continue;
    Rng rng = derive_rng(rng_seed, s);
    const int budget = rules.min_errors +
                       static_cast<int>(uniform_index(rng, static_cast<std::size_t>(rules.max_errors - rules.min_errors + 1)));

    struct Site {
      std::size_t pos;
      Rule rule;
    };
    std::vector<Site> candidates;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      for (Rule r : kRules) {
        const CorruptionRule& cfg = rule_config(rules, r);
        if (!cfg.enabled || !rule_applies(r, clean[i], i + 1 == clean.size())) continue;
        if (bernoulli(rng, cfg.probability)) candidates.push_back({i, r});
      }
    }
    shuffle(candidates.begin(), candidates.end(), rng);

    // Chosen sites are pairwise non-adjacent so each yields its own edit.
    std::map<std::size_t, Rule> chosen;
    for (const Site& site : candidates) {
      if (static_cast<int>(chosen.size()) >= budget) break;
      bool clash = false;
      for (const auto& [pos, r] : chosen) {
        if (pos + 1 >= site.pos && site.pos + 1 >= pos) clash = true;
      }
      if (!clash) chosen.emplace(site.pos, site.rule);
    }
    if (chosen.empty()) continue;

    SentencePair pair;
    pair.tgt = clean;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      auto it = chosen.find(i);
      if (it == chosen.end()) {
        pair.src.push_back(clean[i]);
        continue;
      }
      Edit e;
      const auto replacement = corrupt(it->second, clean[i], rng);
      e.src_span = {pair.src.size(), pair.src.size() + replacement.size()};
      e.tgt_span = {i, i + 1};
      e.src_tokens = replacement;
      e.tgt_tokens = {clean[i]};
      e.op = replacement.empty() ? EditOp::insert : EditOp::substitute;
      e.type = type_of(it->second);
      pair.src.insert(pair.src.end(), replacement.begin(), replacement.end());
      pair.gold_edits.push_back(std::move(e));
    }
    if (pair.src == pair.tgt) continue;
    pair.pair_id = next_id++;
    out.push_back(std::move(pair));
  }
  return out;
}

CorpusSplit split_corpus(const std::vector<SentencePair>& pairs, std::size_t train,
                         std::size_t dev, std::size_t test) {
  if (pairs.size() < train + dev + test) {
    fail(ErrorCode::invalid_config, "corpus has " + std::to_string(pairs.size()) + " pairs, " +
                                        std::to_string(train + dev + test) + " requested");
  }
  const auto a = pairs.begin();
  const auto b = a + static_cast<std::ptrdiff_t>(train);
  const auto c = b + static_cast<std::ptrdiff_t>(dev);
  return {{a, b}, {b, c}, {c, c + static_cast<std::ptrdiff_t>(test)}};
}

std::vector<SentencePair> filter_identical(const std::vector<SentencePair>& pairs) {
  std::vector<SentencePair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [](const SentencePair& p) { return p.src != p.tgt; });
  return out;
}

Vocab build_vocab(const std::vector<SentencePair>& pairs, std::size_t min_src_count) {
  Vocab vocab;
  std::unordered_map<std::string, std::size_t> src_counts;
  for (const auto& p : pairs) {
    for (const auto& t : p.src) ++src_counts[t];
  }
  for (const auto& p : pairs) {
    for (const auto& t : p.tgt) vocab.add(t);
  }
  for (const auto& p : pairs) {
    for (const auto& t : p.src) {
      if (src_counts[t] >= min_src_count) vocab.add(t);
    }
  }
  return vocab;
}

Corpus::Corpus(std::vector<SentencePair> pairs) : pairs_(std::move(pairs)) {
  by_id_.reserve(pairs_.size());
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (!by_id_.emplace(pairs_[i].pair_id, i).second) {
      fail(ErrorCode::invalid_input, "duplicate pair_id " + std::to_string(pairs_[i].pair_id));
    }
  }
}

const SentencePair* Corpus::find(std::uint32_t pair_id) const {
  auto it = by_id_.find(pair_id);
  return it == by_id_.end() ? nullptr : &pairs_[it->second];
}

const SentencePair& Corpus::at(std::uint32_t pair_id) const {
  const SentencePair* p = find(pair_id);
  if (!p) fail(ErrorCode::corpus_resolution, "pair_id " + std::to_string(pair_id) + " is not in the corpus");
  return *p;
}

std::string corpus_line(const SentencePair& pair) {
  ojson j;
  j["pair_id"] = pair.pair_id;
  j["src"] = join_tokens(pair.src);
  j["tgt"] = join_tokens(pair.tgt);
  ojson edits = ojson::array();
  for (const auto& e : pair.gold_edits) {
    edits.push_back({{"src_span", {e.src_span.lo, e.src_span.hi}},
                     {"tgt_span", {e.tgt_span.lo, e.tgt_span.hi}},
                     {"type", to_string(e.type)}});
  }
  j["edits"] = std::move(edits);
  return j.dump();
}

SentencePair parse_corpus_line(const std::string& line) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const std::exception& e) {
    fail(ErrorCode::invalid_input, std::string("malformed corpus line: ") + e.what());
  }
  try {
    SentencePair p;
    p.pair_id = j.at("pair_id").get<std::uint32_t>();
    p.src = split_whitespace(j.at("src").get<std::string>());
    p.tgt = split_whitespace(j.at("tgt").get<std::string>());
    for (const auto& je : j.at("edits")) {
      Edit e;
      const auto ss = je.at("src_span");
      const auto ts = je.at("tgt_span");
      e.src_span = {ss.at(0).get<std::size_t>(), ss.at(1).get<std::size_t>()};
      e.tgt_span = {ts.at(0).get<std::size_t>(), ts.at(1).get<std::size_t>()};
      if (e.src_span.lo > e.src_span.hi || e.src_span.hi > p.src.size() ||
          e.tgt_span.lo > e.tgt_span.hi || e.tgt_span.hi > p.tgt.size() ||
          (e.src_span.empty() && e.tgt_span.empty())) {
        fail(ErrorCode::invalid_input, "edit span out of range in pair " + std::to_string(p.pair_id));
      }
      e.src_tokens.assign(p.src.begin() + static_cast<std::ptrdiff_t>(e.src_span.lo),
                          p.src.begin() + static_cast<std::ptrdiff_t>(e.src_span.hi));
      e.tgt_tokens.assign(p.tgt.begin() + static_cast<std::ptrdiff_t>(e.tgt_span.lo),
                          p.tgt.begin() + static_cast<std::ptrdiff_t>(e.tgt_span.hi));
      e.op = e.src_span.empty() ? EditOp::insert
                                : (e.tgt_span.empty() ? EditOp::remove : EditOp::substitute);
      e.type = parse_error_type(je.at("type").get<std::string>());
      p.gold_edits.push_back(std::move(e));
    }
    return p;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::invalid_input, std::string("malformed corpus record: ") + e.what());
  }
}

void save_corpus(const std::filesystem::path& path, const std::vector<SentencePair>& pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write corpus " + path.string());
  for (const auto& p : pairs) out << corpus_line(p) << '\n';
  if (!out) fail(ErrorCode::io_error, "write failed for " + path.string());
}

std::vector<SentencePair> load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot read corpus " + path.string());
  std::vector<SentencePair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(parse_corpus_line(line));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ebgec
