#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "json.hpp"

#include "ebgec/align.hpp"
#include "ebgec/baselines.hpp"
#include "ebgec/corpus.hpp"
#include "ebgec/datastore.hpp"
#include "ebgec/eval.hpp"
#include "ebgec/knn_decode.hpp"
#include "ebgec/seq2seq.hpp"
#include "ebgec/vocab.hpp"

namespace httplib {
class Server;
}

namespace ebgec {

enum class ExampleMethod { eb, token, embed };

const char* to_string(ExampleMethod method);
ExampleMethod parse_example_method(std::string_view name);  // throws invalid_config

struct AppConfig {
  std::filesystem::path model;
  std::filesystem::path store;
  std::filesystem::path corpus;
  std::filesystem::path vocab;
  std::filesystem::path wordlists;      // empty: built-in lists
  std::filesystem::path feedback_log = "feedback.jsonl";
  DecodeConfig decode;
  std::string host = "127.0.0.1";
  int port = 8080;
  ExampleMethod default_method = ExampleMethod::eb;
  std::size_t max_text_length = 2000;  // bytes
  std::uint64_t seed = 17;

  // Nested JSON: {"paths": {...}, "decode": {...}, "service": {...}}.
  static AppConfig from_json(const nlohmann::json& j);
  static AppConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Decode invariants plus existence of every referenced artifact.
  void validate() const;
};

DecodeConfig decode_config_from_json(const nlohmann::json& j, DecodeConfig base = {});
nlohmann::json decode_config_to_json(const DecodeConfig& config);

// Everything a correction request reads. Immutable after load.
struct Artifacts {
  Vocab vocab;
  std::unique_ptr<Seq2Seq> model;
  Corpus corpus;
  Datastore store;
  ClosedClasses classes;
  EditIndex edit_index;
  std::unique_ptr<Seq2SeqContextEncoder> context_encoder;
  Datastore context_store;

  static std::shared_ptr<const Artifacts> load(const AppConfig& config);
  // Wires baselines on top of already-loaded parts.
  static std::shared_ptr<const Artifacts> assemble(Vocab vocab, ModelParams params, Corpus corpus,
                                                   Datastore store, ClosedClasses classes);
};

// Append-only decision log, one JSON record per line, flushed per record.
class FeedbackLog {
 public:
  explicit FeedbackLog(std::filesystem::path path);
  void append(const DecisionRecord& record);
  std::vector<DecisionRecord> read() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
};

std::string sentence_id_for(std::string_view text);

struct HttpResponse {
  int status = 200;
  std::string body;
};

// Transport-independent request handlers; the HTTP server is a thin shell.
class CorrectionService {
 public:
  CorrectionService(AppConfig config, std::shared_ptr<const Artifacts> artifacts);

  HttpResponse handle_correct(const std::string& body) const;
  HttpResponse handle_feedback(const std::string& body);
  HttpResponse handle_recompose(const std::string& body) const;
  HttpResponse handle_health() const;
  HttpResponse handle_usefulness() const;

  nlohmann::json correct(const std::string& text, ExampleMethod method,
                         std::optional<double> lambda) const;

  const AppConfig& config() const noexcept { return config_; }
  FeedbackLog& feedback_log() noexcept { return log_; }

 private:
  AppConfig config_;
  std::shared_ptr<const Artifacts> artifacts_;
  FeedbackLog log_;
};

class HttpServer {
 public:
  explicit HttpServer(CorrectionService& service);
  ~HttpServer();

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  // Blocks on the calling thread.
  void listen(const std::string& host, int port);
  void stop();

 private:
  void install_routes();

  CorrectionService& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace ebgec
