#include "ebgec/eval.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include "ebgec/corpus.hpp"
#include "ebgec/error.hpp"
#include "ebgec/rng.hpp"
#include "json.hpp"

namespace ebgec {

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  return denom > 0.0 ? (1.0 + b2) * precision * recall / denom : 0.0;
}

EditScore EditScore::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  EditScore s{tp, fp, fn};
  if (tp + fp == 0 && fn == 0) {
    s.precision = s.recall = s.f_half = 1.0;
    return s;
  }
  s.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  s.f_half = tp == 0 ? 0.0 : f_beta(s.precision, s.recall, 0.5);
  return s;
}

bool edit_matches(const Edit& hyp, const Edit& gold) {
  return hyp.op == gold.op && hyp.src_span == gold.src_span && hyp.tgt_tokens == gold.tgt_tokens;
}

EditScore score_edits(const std::vector<std::vector<Edit>>& hyp,
                      const std::vector<std::vector<Edit>>& gold) {
  if (hyp.size() != gold.size()) {
    fail(ErrorCode::invalid_input, "hypothesis and gold edit lists differ in sentence count");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t s = 0; s < hyp.size(); ++s) {
    std::vector<bool> used(gold[s].size(), false);
    std::size_t hits = 0;
    for (const auto& h : hyp[s]) {
      for (std::size_t g = 0; g < gold[s].size(); ++g) {
        if (!used[g] && edit_matches(h, gold[s][g])) {
          used[g] = true;
          ++hits;
          break;
        }
      }
    }
    tp += hits;
    fp += hyp[s].size() - hits;
    fn += gold[s].size() - hits;
  }
  return EditScore::from_counts(tp, fp, fn);
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = i; j < i + n; ++j) {
      key += tokens[j];
      key += '\x1f';
    }
    ++out[key];
  }
  return out;
}

std::size_t count_of(const NgramCounts& c, const std::string& key) {
  auto it = c.find(key);
  return it == c.end() ? 0 : it->second;
}

double gleu_single(std::span<const std::string> src, std::span<const std::string> hyp,
                   std::span<const std::string> ref, int n_max) {
  const std::size_t n_eff = std::min<std::size_t>(static_cast<std::size_t>(n_max), hyp.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= n_eff; ++n) {
    const NgramCounts h = ngrams(hyp, n), r = ngrams(ref, n), s = ngrams(src, n);
    double num = 0.0;
    for (const auto& [g, hc] : h) {
      const std::size_t rc = count_of(r, g);
      num += static_cast<double>(std::min(hc, rc));
      if (rc == 0) num -= static_cast<double>(std::min(hc, count_of(s, g)));
    }
    const double total = static_cast<double>(hyp.size() - n + 1);
    const double p = std::max(num, 0.0) / total;
    if (p <= 0.0) return 0.0;
    log_sum += std::log(p);
  }
  const double bp = hyp.size() > ref.size()
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref.size()) /
                                             static_cast<double>(hyp.size()));
  return bp * std::exp(log_sum / static_cast<double>(n_eff));
}

}  // namespace

double gleu_lite(std::span<const std::string> src, std::span<const std::string> hyp,
                 const std::vector<std::vector<std::string>>& refs, int n_max) {
  if (refs.empty()) fail(ErrorCode::invalid_input, "gleu needs at least one reference");
  if (n_max < 1) fail(ErrorCode::invalid_config, "n_max must be >= 1");
  if (hyp.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ref : refs) total += gleu_single(src, hyp, ref, n_max);
  return total / static_cast<double>(refs.size());
}

EvalOutcome evaluate(const Corrector& corrector, const std::vector<SentencePair>& pairs,
                     const Vocab& vocab, const DecodeConfig& config, std::size_t threads) {
  std::vector<TokenSeq> sources;
  sources.reserve(pairs.size());
  for (const auto& p : pairs) sources.push_back(vocab.encode(p.src));

  EvalOutcome out;
  out.results = corrector.correct_all(sources, config, threads);
  std::vector<std::vector<Edit>> hyp_edits, gold_edits;
  double gleu_total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    out.hypotheses.push_back(output_tokens(out.results[i], vocab, p.src));
    hyp_edits.push_back(extract_edits(p.src, out.hypotheses.back()));
    gold_edits.push_back(extract_edits(p.src, p.tgt));
    gleu_total += gleu_lite(p.src, out.hypotheses.back(), {p.tgt});
  }
  out.score = score_edits(hyp_edits, gold_edits);
  out.gleu = pairs.empty() ? 0.0 : gleu_total / static_cast<double>(pairs.size());
  return out;
}

std::vector<double> default_lambda_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

std::vector<SweepRow> sweep_lambda(const Corrector& corrector, const std::vector<SentencePair>& dev,
                                   const Vocab& vocab, const std::vector<double>& grid,
                                   const DecodeConfig& base, std::size_t threads) {
  std::vector<SweepRow> rows;
  for (double lambda : grid) {
    DecodeConfig cfg = base;
    cfg.lambda = lambda;
    const EvalOutcome o = evaluate(corrector, dev, vocab, cfg, threads);
    rows.push_back({lambda, o.score, o.gleu});
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "lambda,tp,fp,fn,precision,recall,f_half,gleu\n" << std::setprecision(6) << std::fixed;
  for (const auto& r : rows) {
    out << std::setprecision(2) << r.lambda << std::setprecision(6) << ',' << r.score.tp << ','
        << r.score.fp << ',' << r.score.fn << ',' << r.score.precision << ',' << r.score.recall
        << ',' << r.score.f_half << ',' << r.gleu << '\n';
  }
  return out.str();
}

namespace {

double pct(std::size_t part, std::size_t whole) {
  return whole == 0 ? 0.0 : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

double MethodMatch::edit_match_pct() const { return pct(edit_matches, edits); }
double MethodMatch::type_match_pct() const { return pct(type_matches, edits); }
double MethodMatch::edit_match_pct_found() const { return pct(edit_matches, with_example); }
double MethodMatch::type_match_pct_found() const { return pct(type_matches, with_example); }

MethodMatch matching_analysis(const std::string& method,
                              const std::vector<std::vector<PresentedEdit>>& outputs) {
  MethodMatch m;
  m.method = method;
  for (const auto& sentence : outputs) {
    for (const auto& p : sentence) {
      ++m.edits;
      if (!p.example) continue;
      ++m.with_example;
      const auto& anchor = p.example->anchor_edit;
      if (!anchor) continue;
      if (same_correction(*anchor, p.edit)) ++m.edit_matches;
      if (anchor->type == p.edit.type) ++m.type_matches;
    }
  }
  return m;
}

const MethodMatch* MatchReport::find(const std::string& method) const {
  for (const auto& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

MatchReport compare_example_methods(const Corrector& corrector, const Vocab& vocab,
                                    const BaselineSources& baselines,
                                    const std::vector<SentencePair>& pairs,
                                    const DecodeConfig& config, std::uint64_t seed,
                                    std::size_t threads) {
  std::vector<TokenSeq> sources;
  sources.reserve(pairs.size());
  for (const auto& p : pairs) sources.push_back(vocab.encode(p.src));
  const auto results = corrector.correct_all(sources, config, threads);

  std::vector<std::vector<PresentedEdit>> eb, token, embed;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& src = pairs[i].src;
    const auto out = output_tokens(results[i], vocab, src);
    eb.push_back(present(results[i], src, vocab, baselines.classes));
    const auto edits = extract_typed_edits(src, out, baselines.classes);
    token.push_back(attach_token_examples(edits, baselines.edit_index, baselines.corpus,
                                          splitmix64(seed ^ splitmix64(i))));
    embed.push_back(attach_embed_examples(edits, out, baselines.context_store, baselines.encoder,
                                          baselines.corpus, config.k));
  }
  return MatchReport{{matching_analysis("eb", eb), matching_analysis("token", token),
                      matching_analysis("embed", embed)}};
}

std::string match_csv(const MatchReport& report) {
  std::ostringstream out;
  out << "method,edits,with_example,edit_matches,type_matches,edit_match_pct,type_match_pct,"
         "edit_match_pct_found,type_match_pct_found\n"
      << std::fixed << std::setprecision(2);
  for (const auto& m : report.methods) {
    out << m.method << ',' << m.edits << ',' << m.with_example << ',' << m.edit_matches << ','
        << m.type_matches << ',' << m.edit_match_pct() << ',' << m.type_match_pct() << ','
        << m.edit_match_pct_found() << ',' << m.type_match_pct_found() << '\n';
  }
  return out.str();
}

std::string match_summary(const MatchReport& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1);
  for (const auto& m : report.methods) {
    out << m.method << ": " << m.edits << " edits, " << m.with_example << " with examples; edit match "
        << m.edit_match_pct() << "% (" << m.edit_match_pct_found() << "% of found), type match "
        << m.type_match_pct() << "% (" << m.type_match_pct_found() << "% of found)\n";
  }
  return out.str();
}

std::string decision_line(const DecisionRecord& r) {
  nlohmann::ordered_json j;
  j["timestamp"] = r.timestamp;
  j["sentence_id"] = r.sentence_id;
  j["method"] = r.method;
  j["edit_index"] = r.edit_index;
  j["label"] = r.label;
  j["accepted"] = r.accepted;
  return j.dump();
}

DecisionRecord parse_decision_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_input, std::string("malformed decision record: ") + e.what());
  }
  try {
    DecisionRecord r;
    r.timestamp = j.value("timestamp", std::string{});
    r.sentence_id = j.at("sentence_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.edit_index = j.at("edit_index").get<std::size_t>();
    r.label = j.at("label").get<int>();
    r.accepted = j.value("accepted", false);
    if (r.label != 0 && r.label != 1) fail(ErrorCode::invalid_input, "label must be 0 or 1");
    return r;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_input, std::string("invalid decision record: ") + e.what());
  }
}

std::vector<DecisionRecord> load_decision_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot read decision log " + path.string());
  std::vector<DecisionRecord> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_decision_line(line));
    } catch (const Error& e) {
      fail(e.code(), path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::map<std::string, double> usefulness_score(const std::vector<DecisionRecord>& log) {
  if (log.empty()) fail(ErrorCode::no_data, "decision log is empty");
  std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
  for (const auto& r : log) {
    auto& [useful, total] = counts[r.method];
    useful += r.label == 1 ? 1 : 0;
    ++total;
  }
  std::map<std::string, double> out;
  for (const auto& [method, c] : counts) out[method] = pct(c.first, c.second);
  return out;
}

const std::map<std::string, double>& reference_usefulness() {
  static const std::map<std::string, double> ref{{"token", 28.8}, {"embed", 52.4}, {"eb", 68.8}};
  return ref;
}

std::string comparison_report(const std::map<std::string, double>& scores, std::uint64_t seed) {
  std::vector<std::pair<std::string, double>> rows(scores.begin(), scores.end());
  Rng rng = derive_rng(seed, 0);
  shuffle(rows.begin(), rows.end(), rng);
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << "system,useful_pct\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::string name = "System ";
    name += static_cast<char>('A' + static_cast<int>(i % 26));
    out << name << ',' << rows[i].second << '\n';
  }
  out << "\nreference,useful_pct\n";
  for (const auto& [method, value] : reference_usefulness()) {
    out << "published " << method << ',' << value << '\n';
  }
  return out.str();
}

}  // namespace ebgec
