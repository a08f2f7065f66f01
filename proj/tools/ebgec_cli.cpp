// Command-line front end for the correction pipeline.

#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "ebgec/baselines.hpp"
#include "ebgec/corpus.hpp"
#include "ebgec/datastore.hpp"
#include "ebgec/error.hpp"
#include "ebgec/eval.hpp"
#include "ebgec/knn_decode.hpp"
#include "ebgec/rng.hpp"
#include "ebgec/seq2seq.hpp"
#include "ebgec/service.hpp"

using namespace ebgec;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kConfigError = 2, kInputError = 3, kModelError = 4 };

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_config:
    case ErrorCode::degenerate_config:
      return kConfigError;
    case ErrorCode::invalid_input:
    case ErrorCode::corpus_resolution:
    case ErrorCode::no_data:
    case ErrorCode::io_error:
      return kInputError;
    case ErrorCode::invalid_state:
    case ErrorCode::training_diverged:
    case ErrorCode::magic_mismatch:
    case ErrorCode::dim_mismatch:
    case ErrorCode::truncated_file:
      return kModelError;
  }
  return kInputError;
}

// Flags shared by every subcommand that loads artifacts.
struct ArtifactFlags {
  std::string config;
  std::string model, store, corpus, vocab, wordlists;
  std::optional<double> lambda, temperature, threshold;
  std::optional<std::size_t> k, beam, max_len;
  std::string search, exponent;
  std::size_t threads = 0;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    app->add_option("--model", model, "Model checkpoint");
    app->add_option("--store", store, "Datastore file");
    app->add_option("--corpus", corpus, "Training corpus (examples are drawn from it)");
    app->add_option("--vocab", vocab, "Vocabulary file");
    app->add_option("--wordlists", wordlists, "Directory with closed-class word lists");
    app->add_option("--lambda", lambda, "Interpolation weight of the kNN distribution");
    app->add_option("--k", k, "Neighbors per step");
    app->add_option("--temperature", temperature, "kNN softmax temperature");
    app->add_option("--beam", beam, "Beam width");
    app->add_option("--max-len", max_len, "Output length cap (0: 2N+10)");
    app->add_option("--threshold", threshold, "Drop examples farther than this squared distance");
    app->add_option("--search", search, "exact | approximate")->check(CLI::IsMember({"exact", "approximate"}));
    app->add_option("--distance-exponent", exponent, "squared | plain")
        ->check(CLI::IsMember({"squared", "plain"}));
    app->add_option("--threads", threads, "Decoding threads (0: all cores)");
  }

  AppConfig resolve() const {
    AppConfig c = config.empty() ? AppConfig{} : AppConfig::load(config);
    if (!model.empty()) c.model = model;
    if (!store.empty()) c.store = store;
    if (!corpus.empty()) c.corpus = corpus;
    if (!vocab.empty()) c.vocab = vocab;
    if (!wordlists.empty()) c.wordlists = wordlists;
    if (lambda) c.decode.lambda = *lambda;
    if (k) c.decode.k = *k;
    if (temperature) c.decode.temperature = *temperature;
    if (beam) c.decode.beam_width = *beam;
    if (max_len) c.decode.max_len = *max_len;
    if (threshold) c.decode.distance_threshold = *threshold;
    if (!search.empty()) {
      c.decode.search_mode = search == "exact" ? SearchMode::exact : SearchMode::approximate;
    }
    if (!exponent.empty()) {
      c.decode.distance_exponent =
          exponent == "squared" ? DistanceExponent::squared : DistanceExponent::plain;
    }
    c.decode.validate();
    return c;
  }
};

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------- gen-corpus

struct GenFlags {
  std::string out_dir = ".";
  std::size_t sentences = 7200;
  std::uint64_t seed = 20221;
  std::size_t train = 5000, dev = 500, test = 500;
  double det = -1, prep = -1, punct = -1, spell = -1, verb = -1;
  int min_errors = 1, max_errors = 2;
};

void run_gen_corpus(const GenFlags& f) {
  CorruptionConfig rules;
  rules.min_errors = f.min_errors;
  rules.max_errors = f.max_errors;
  auto set = [](CorruptionRule& r, double p) {
    if (p < 0) return;
    r.enabled = p > 0;
    r.probability = p;
  };
  set(rules.det, f.det);
  set(rules.prep, f.prep);
  set(rules.punct, f.punct);
  set(rules.spell, f.spell);
  set(rules.verb, f.verb);

  const auto clean = synthesize_clean_sentences(f.sentences, f.seed);
  const auto pairs = generate_corpus(clean, splitmix64(f.seed), rules);
  const CorpusSplit split = split_corpus(pairs, f.train, f.dev, f.test);
  const std::filesystem::path dir(f.out_dir);
  std::filesystem::create_directories(dir);
  save_corpus(dir / "train.jsonl", split.train);
  save_corpus(dir / "dev.jsonl", split.dev);
  save_corpus(dir / "test.jsonl", split.test);
  std::cerr << "wrote " << f.train << "/" << f.dev << "/" << f.test << " pairs to " << f.out_dir << "\n";
}

// --------------------------------------------------------------------- train

struct TrainFlags {
  std::string corpus, vocab_out, model_out;
  int epochs = 20, emb = 32, hidden = 64;
  double lr = 3e-3;
  std::size_t batch = 16;
  std::uint64_t seed = 1;
  std::size_t min_src_count = 2;
};

void run_train(const TrainFlags& f) {
  const auto pairs = load_corpus(f.corpus);
  const Vocab vocab = build_vocab(pairs, f.min_src_count);
  vocab.save(f.vocab_out);
  TrainOptions opt;
  opt.epochs = f.epochs;
  opt.learning_rate = f.lr;
  opt.batch_size = f.batch;
  opt.rng_seed = f.seed;
  opt.on_epoch = [](int epoch, double loss) {
    std::cerr << "epoch " << epoch << " loss " << loss << "\n";
  };
  const ModelDims dims{static_cast<int>(vocab.size()), f.emb, f.hidden};
  const ModelParams params = train(pairs, vocab, dims, opt);
  save_checkpoint(f.model_out, params);
  const Seq2Seq model(params);
  std::cerr << "vocab " << vocab.size() << ", teacher-forced accuracy "
            << teacher_forced_accuracy(model, encode_pairs(pairs, vocab)) << "\n";
}

// --------------------------------------------------------------- build-store

struct StoreFlags {
  std::string model, vocab, out;
  std::vector<std::string> corpora;
  bool index = false;
  std::size_t clusters = 64, probes = 8;
};

void run_build_store(const StoreFlags& f) {
  const Vocab vocab = Vocab::load(f.vocab);
  const Seq2Seq model(load_checkpoint(f.model));
  Datastore store(model.hidden_dim());
  for (const auto& path : f.corpora) append_pairs(store, model, load_corpus(path), vocab);
  store.save(f.out);
  if (f.index) {
    IvfOptions opt;
    opt.n_clusters = f.clusters;
    opt.n_probe = f.probes;
    store.build_index(opt);
    store.save_index(f.out + ".ivf");
  }
  std::cerr << "stored " << store.size() << " entries of dimension " << store.dim() << "\n";
}

// ----------------------------------------------------------- correct / serve

struct CorrectFlags {
  std::string input = "-";
  std::string output = "-";
  std::string method;
  bool vanilla = false;
};

void run_correct(const ArtifactFlags& af, const CorrectFlags& f) {
  AppConfig cfg = af.resolve();
  std::ifstream file;
  if (f.input != "-") {
    file.open(f.input);
    if (!file) fail(ErrorCode::io_error, "cannot read " + f.input);
  }
  const auto lines = read_lines(f.input == "-" ? std::cin : file);
  const auto artifacts = Artifacts::load(cfg);
  const ExampleMethod method = f.method.empty() ? cfg.default_method : parse_example_method(f.method);

  std::ostringstream out;
  if (f.vanilla) {
    const Corrector vanilla(*artifacts->model, nullptr, nullptr);
    for (const auto& line : lines) {
      const auto tokens = split_whitespace(line);
      if (tokens.empty()) {
        out << "\n";
        continue;
      }
      const auto r = vanilla.correct(artifacts->vocab.encode(tokens), cfg.decode);
      out << join_tokens(output_tokens(r, artifacts->vocab, tokens)) << "\n";
    }
  } else {
    CorrectionService service(cfg, artifacts);
    for (const auto& line : lines) {
      if (split_whitespace(line).empty()) {
        out << "{}\n";
        continue;
      }
      out << service.correct(line, method, std::nullopt).dump() << "\n";
    }
  }
  write_text(f.output, out.str());
}

volatile std::sig_atomic_t g_stop = 0;

void run_serve(const ArtifactFlags& af, const std::string& host, int port) {
  AppConfig cfg = af.resolve();
  if (!host.empty()) cfg.host = host;
  if (port >= 0) cfg.port = port;
  const auto artifacts = Artifacts::load(cfg);
  CorrectionService service(cfg, artifacts);
  HttpServer server(service);
  const int bound = server.start(cfg.host, cfg.port);
  std::cerr << "listening on http://" << cfg.host << ":" << bound << "\n";
  std::signal(SIGINT, [](int) { g_stop = 1; });
  std::signal(SIGTERM, [](int) { g_stop = 1; });
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
}

// ------------------------------------------------------- evaluate / analyses

void run_evaluate(const ArtifactFlags& af, const std::string& data, bool vanilla) {
  const AppConfig cfg = af.resolve();
  const auto artifacts = Artifacts::load(cfg);
  const auto pairs = load_corpus(data);
  const Corrector corrector(*artifacts->model, vanilla ? nullptr : &artifacts->store,
                            &artifacts->corpus);
  const EvalOutcome o = evaluate(corrector, pairs, artifacts->vocab, cfg.decode, af.threads);
  std::cout << "sentences " << pairs.size() << "\n"
            << "tp " << o.score.tp << " fp " << o.score.fp << " fn " << o.score.fn << "\n"
            << "precision " << o.score.precision << "\n"
            << "recall " << o.score.recall << "\n"
            << "f0.5 " << o.score.f_half << "\n"
            << "gleu " << o.gleu << "\n";
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      grid.push_back(std::stod(item));
    } catch (const std::exception&) {
      fail(ErrorCode::invalid_config, "bad grid value '" + item + "'");
    }
  }
  if (grid.empty()) fail(ErrorCode::invalid_config, "empty grid");
  return grid;
}

void run_sweep(const ArtifactFlags& af, const std::string& data, const std::string& grid,
               const std::string& out) {
  const AppConfig cfg = af.resolve();
  const auto artifacts = Artifacts::load(cfg);
  const auto pairs = load_corpus(data);
  const Corrector corrector(*artifacts->model, &artifacts->store, &artifacts->corpus);
  const auto rows = sweep_lambda(corrector, pairs, artifacts->vocab,
                                 grid.empty() ? default_lambda_grid() : parse_grid(grid), cfg.decode,
                                 af.threads);
  write_text(out, sweep_csv(rows));
}

void run_match_analysis(const ArtifactFlags& af, const std::string& data, bool plant,
                        const std::string& out) {
  AppConfig cfg = af.resolve();
  cfg.validate();
  const Vocab vocab = Vocab::load(cfg.vocab);
  ModelParams params = load_checkpoint(cfg.model);
  Datastore store = Datastore::load(cfg.store, kStoreMagic, static_cast<std::size_t>(params.dims.hidden_dim));
  auto pairs = load_corpus(cfg.corpus);
  const auto eval_pairs = load_corpus(data);
  if (plant) {
    const Seq2Seq model(params);
    append_pairs(store, model, eval_pairs, vocab);
    pairs.insert(pairs.end(), eval_pairs.begin(), eval_pairs.end());
  }
  const auto a = Artifacts::assemble(vocab, std::move(params), Corpus(std::move(pairs)), std::move(store),
                                     cfg.wordlists.empty() ? ClosedClasses::builtin()
                                                           : ClosedClasses::load(cfg.wordlists));
  const Corrector corrector(*a->model, &a->store, &a->corpus);
  const BaselineSources sources{a->corpus, a->edit_index, a->context_store, *a->context_encoder, a->classes};
  const MatchReport report =
      compare_example_methods(corrector, a->vocab, sources, eval_pairs, cfg.decode, cfg.seed, af.threads);
  write_text(out, match_csv(report));
  std::cerr << match_summary(report);
}

void run_usefulness(const std::string& log, std::optional<std::uint64_t> anonymize) {
  const auto scores = usefulness_score(load_decision_log(log));
  if (anonymize) {
    std::cout << comparison_report(scores, *anonymize);
    return;
  }
  for (const auto& [method, value] : scores) std::cout << method << "," << value << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Example-based grammatical error correction"};
  app.require_subcommand(1);

  GenFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic parallel corpus");
  gen_cmd->add_option("--out-dir", gen.out_dir, "Output directory");
  gen_cmd->add_option("--sentences", gen.sentences, "Clean sentences to synthesize");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--train", gen.train, "Training pairs");
  gen_cmd->add_option("--dev", gen.dev, "Development pairs");
  gen_cmd->add_option("--test", gen.test, "Test pairs");
  gen_cmd->add_option("--det", gen.det, "Determiner corruption probability (0 disables)");
  gen_cmd->add_option("--prep", gen.prep, "Preposition corruption probability");
  gen_cmd->add_option("--punct", gen.punct, "Punctuation corruption probability");
  gen_cmd->add_option("--spell", gen.spell, "Spelling corruption probability");
  gen_cmd->add_option("--verb", gen.verb, "Verb form corruption probability");
  gen_cmd->add_option("--min-errors", gen.min_errors, "Minimum errors per sentence");
  gen_cmd->add_option("--max-errors", gen.max_errors, "Maximum errors per sentence");

  TrainFlags tr;
  auto* train_cmd = app.add_subcommand("train", "Train the encoder-decoder");
  train_cmd->add_option("--corpus", tr.corpus, "Training corpus")->required();
  train_cmd->add_option("--vocab-out", tr.vocab_out, "Vocabulary output")->required();
  train_cmd->add_option("--model-out", tr.model_out, "Checkpoint output")->required();
  train_cmd->add_option("--epochs", tr.epochs, "Epochs");
  train_cmd->add_option("--emb", tr.emb, "Embedding size");
  train_cmd->add_option("--hidden", tr.hidden, "Hidden size (datastore key dimension)");
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
  train_cmd->add_option("--batch", tr.batch, "Minibatch size");
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--min-src-count", tr.min_src_count, "Minimum count for source-only tokens");

  StoreFlags st;
  auto* store_cmd = app.add_subcommand("build-store", "Build the datastore from training pairs");
  store_cmd->add_option("--model", st.model, "Model checkpoint")->required();
  store_cmd->add_option("--vocab", st.vocab, "Vocabulary file")->required();
  store_cmd->add_option("--corpus", st.corpora, "Corpus files to index")->required();
  store_cmd->add_option("--out", st.out, "Datastore output")->required();
  store_cmd->add_flag("--index", st.index, "Also build an approximate index (<out>.ivf)");
  store_cmd->add_option("--clusters", st.clusters, "Index clusters");
  store_cmd->add_option("--probes", st.probes, "Clusters probed per query");

  ArtifactFlags correct_af;
  CorrectFlags cf;
  auto* correct_cmd = app.add_subcommand("correct", "Correct sentences, one per line");
  correct_af.attach(correct_cmd);
  correct_cmd->add_option("--input", cf.input, "Input file (- for stdin)");
  correct_cmd->add_option("--output", cf.output, "Output file (- for stdout)");
  correct_cmd->add_option("--method", cf.method, "Example method: eb | token | embed");
  correct_cmd->add_flag("--vanilla", cf.vanilla, "Plain beam search without the datastore; prints text only");

  ArtifactFlags eval_af;
  std::string eval_data;
  bool eval_vanilla = false;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score corrections against references");
  eval_af.attach(eval_cmd);
  eval_cmd->add_option("--data", eval_data, "Evaluation pairs")->required();
  eval_cmd->add_flag("--vanilla", eval_vanilla, "Decode without the datastore");

  ArtifactFlags sweep_af;
  std::string sweep_data, sweep_grid, sweep_out = "-";
  auto* sweep_cmd = app.add_subcommand("sweep", "Score a grid of interpolation weights");
  sweep_af.attach(sweep_cmd);
  sweep_cmd->add_option("--data", sweep_data, "Development pairs")->required();
  sweep_cmd->add_option("--grid", sweep_grid, "Comma-separated weights (default 0,0.25,0.5,0.75,1)");
  sweep_cmd->add_option("--out", sweep_out, "CSV output (- for stdout)");

  ArtifactFlags match_af;
  std::string match_data, match_out = "-";
  bool match_plant = false;
  auto* match_cmd = app.add_subcommand("match-analysis", "Compare example methods by edit and type match");
  match_af.attach(match_cmd);
  match_cmd->add_option("--data", match_data, "Evaluation pairs")->required();
  match_cmd->add_flag("--plant", match_plant, "Add the evaluation pairs to the datastore and corpus");
  match_cmd->add_option("--out", match_out, "CSV output (- for stdout)");

  ArtifactFlags serve_af;
  std::string serve_host;
  int serve_port = -1;
  auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
  serve_af.attach(serve_cmd);
  serve_cmd->add_option("--host", serve_host, "Bind address");
  serve_cmd->add_option("--port", serve_port, "Port (0 picks a free one)");

  std::string useful_log;
  std::optional<std::uint64_t> useful_anon;
  auto* useful_cmd = app.add_subcommand("usefulness", "Usefulness percentages from a decision log");
  useful_cmd->add_option("--log", useful_log, "Decision log")->required();
  useful_cmd->add_option("--anonymize", useful_anon, "Emit an anonymized comparison sheet with this seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*gen_cmd) run_gen_corpus(gen);
    else if (*train_cmd) run_train(tr);
    else if (*store_cmd) run_build_store(st);
    else if (*correct_cmd) run_correct(correct_af, cf);
    else if (*eval_cmd) run_evaluate(eval_af, eval_data, eval_vanilla);
    else if (*sweep_cmd) run_sweep(sweep_af, sweep_data, sweep_grid, sweep_out);
    else if (*match_cmd) run_match_analysis(match_af, match_data, match_plant, match_out);
    else if (*serve_cmd) run_serve(serve_af, serve_host, serve_port);
    else if (*useful_cmd) run_usefulness(useful_log, useful_anon);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  return kOk;
}
