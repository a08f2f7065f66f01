#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ebgec/align.hpp"
#include "ebgec/baselines.hpp"
#include "ebgec/example.hpp"
#include "ebgec/knn_decode.hpp"

namespace ebgec {

struct SentencePair;
class Corpus;
class Vocab;

struct EditScore {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_half = 0.0;

  static EditScore from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

double f_beta(double precision, double recall, double beta);

// Exact (src_span, op, tgt_tokens) agreement.
bool edit_matches(const Edit& hyp, const Edit& gold);

// Corpus-level counts over per-sentence edit lists.
EditScore score_edits(const std::vector<std::vector<Edit>>& hyp,
                      const std::vector<std::vector<Edit>>& gold);

// Sentence-level GLEU with a source penalty, averaged over references.
double gleu_lite(std::span<const std::string> src, std::span<const std::string> hyp,
                 const std::vector<std::vector<std::string>>& refs, int n_max = 4);

struct EvalOutcome {
  std::vector<CorrectionResult> results;
  std::vector<std::vector<std::string>> hypotheses;
  EditScore score;
  double gleu = 0.0;  // corpus mean of sentence GLEU
};

EvalOutcome evaluate(const Corrector& corrector, const std::vector<SentencePair>& pairs,
                     const Vocab& vocab, const DecodeConfig& config, std::size_t threads = 0);

struct SweepRow {
  double lambda = 0.0;
  EditScore score;
  double gleu = 0.0;
};

std::vector<double> default_lambda_grid();
std::vector<SweepRow> sweep_lambda(const Corrector& corrector, const std::vector<SentencePair>& dev,
                                   const Vocab& vocab, const std::vector<double>& grid,
                                   const DecodeConfig& base, std::size_t threads = 0);
std::string sweep_csv(const std::vector<SweepRow>& rows);

struct MethodMatch {
  std::string method;
  std::size_t edits = 0;
  std::size_t with_example = 0;
  std::size_t edit_matches = 0;
  std::size_t type_matches = 0;

  // Denominator: all edits (edits without an example count as misses).
  double edit_match_pct() const;
  double type_match_pct() const;
  // Denominator: edits that received an example.
  double edit_match_pct_found() const;
  double type_match_pct_found() const;
};

MethodMatch matching_analysis(const std::string& method,
                              const std::vector<std::vector<PresentedEdit>>& outputs);

struct MatchReport {
  std::vector<MethodMatch> methods;
  const MethodMatch* find(const std::string& method) const;
};

// Where the two baselines draw their examples from.
struct BaselineSources {
  const Corpus& corpus;
  const EditIndex& edit_index;
  const Datastore& context_store;
  const ContextualEncoder& encoder;
  const ClosedClasses& classes = ClosedClasses::builtin();
};

// Decodes every source once with `corrector`, then attaches examples to the
// output edits with each method ("eb", "token", "embed").
MatchReport compare_example_methods(const Corrector& corrector, const Vocab& vocab,
                                    const BaselineSources& baselines,
                                    const std::vector<SentencePair>& pairs,
                                    const DecodeConfig& config, std::uint64_t seed,
                                    std::size_t threads = 0);

std::string match_csv(const MatchReport& report);
std::string match_summary(const MatchReport& report);

struct DecisionRecord {
  std::string timestamp;
  std::string sentence_id;
  std::string method;
  std::size_t edit_index = 0;
  int label = 0;  // 1 = useful
  bool accepted = false;
};

std::string decision_line(const DecisionRecord& record);
DecisionRecord parse_decision_line(const std::string& line);
std::vector<DecisionRecord> load_decision_log(const std::filesystem::path& path);

// Percentage of records labelled useful, per method. Throws no_data on an empty log.
std::map<std::string, double> usefulness_score(const std::vector<DecisionRecord>& log);

// Published human-evaluation percentages for the three example methods.
const std::map<std::string, double>& reference_usefulness();

// Comparison sheet with methods replaced by "System A", "System B", ... in an
// order shuffled by seed, followed by the reference values.
std::string comparison_report(const std::map<std::string, double>& scores, std::uint64_t seed);

}  // namespace ebgec
