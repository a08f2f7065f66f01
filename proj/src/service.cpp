#include "ebgec/service.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <set>
#include <variant>

#include "httplib.h"

#include "ebgec/error.hpp"

namespace ebgec {

using nlohmann::json;

const char* to_string(ExampleMethod method) {
  switch (method) {
    case ExampleMethod::eb: return "eb";
    case ExampleMethod::token: return "token";
    case ExampleMethod::embed: return "embed";
  }
  return "eb";
}

ExampleMethod parse_example_method(std::string_view name) {
  if (name == "eb") return ExampleMethod::eb;
  if (name == "token") return ExampleMethod::token;
  if (name == "embed") return ExampleMethod::embed;
  fail(ErrorCode::invalid_config, "unknown example method '" + std::string(name) + "'");
}

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(ErrorCode::invalid_config, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) fail(ErrorCode::invalid_config, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T read_field(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::invalid_config, std::string("bad value for '") + key + "' in " + where);
  }
}

}  // namespace

DecodeConfig decode_config_from_json(const json& j, DecodeConfig base) {
  const std::string where = "decode";
  reject_unknown_keys(j, {"lambda", "k", "temperature", "beam_width", "max_len", "distance_threshold",
                          "search_mode", "distance_exponent"},
                      where);
  DecodeConfig c = base;
  c.lambda = read_field(j, "lambda", c.lambda, where);
  c.k = read_field(j, "k", c.k, where);
  c.temperature = read_field(j, "temperature", c.temperature, where);
  c.beam_width = read_field(j, "beam_width", c.beam_width, where);
  c.max_len = read_field(j, "max_len", c.max_len, where);
  if (j.contains("distance_threshold")) {
    if (j["distance_threshold"].is_null()) {
      c.distance_threshold.reset();
    } else {
      c.distance_threshold = read_field(j, "distance_threshold", 0.0, where);
    }
  }
  if (j.contains("search_mode")) {
    const auto mode = read_field<std::string>(j, "search_mode", "", where);
    if (mode == "exact") c.search_mode = SearchMode::exact;
    else if (mode == "approximate") c.search_mode = SearchMode::approximate;
    else fail(ErrorCode::invalid_config, "search_mode must be exact or approximate");
  }
  if (j.contains("distance_exponent")) {
    const auto e = read_field<std::string>(j, "distance_exponent", "", where);
    if (e == "squared") c.distance_exponent = DistanceExponent::squared;
    else if (e == "plain") c.distance_exponent = DistanceExponent::plain;
    else fail(ErrorCode::invalid_config, "distance_exponent must be squared or plain");
  }
  c.validate();
  return c;
}

json decode_config_to_json(const DecodeConfig& c) {
  json j = json::object();
  j["lambda"] = c.lambda;
  j["k"] = c.k;
  j["temperature"] = c.temperature;
  j["beam_width"] = c.beam_width;
  j["max_len"] = c.max_len;
  j["distance_threshold"] = c.distance_threshold ? json(*c.distance_threshold) : json(nullptr);
  j["search_mode"] = c.search_mode == SearchMode::exact ? "exact" : "approximate";
  j["distance_exponent"] = c.distance_exponent == DistanceExponent::squared ? "squared" : "plain";
  return j;
}

AppConfig AppConfig::from_json(const json& j) {
  reject_unknown_keys(j, {"paths", "decode", "service"}, "config");
  AppConfig c;
  if (j.contains("paths")) {
    const json& p = j["paths"];
    reject_unknown_keys(p, {"model", "store", "corpus", "vocab", "wordlists", "feedback_log"}, "paths");
    c.model = read_field<std::string>(p, "model", c.model.string(), "paths");
    c.store = read_field<std::string>(p, "store", c.store.string(), "paths");
    c.corpus = read_field<std::string>(p, "corpus", c.corpus.string(), "paths");
    c.vocab = read_field<std::string>(p, "vocab", c.vocab.string(), "paths");
    c.wordlists = read_field<std::string>(p, "wordlists", c.wordlists.string(), "paths");
    c.feedback_log = read_field<std::string>(p, "feedback_log", c.feedback_log.string(), "paths");
  }
  if (j.contains("decode")) c.decode = decode_config_from_json(j["decode"]);
  if (j.contains("service")) {
    const json& s = j["service"];
    reject_unknown_keys(s, {"host", "port", "default_method", "max_text_length", "seed"}, "service");
    c.host = read_field(s, "host", c.host, "service");
    c.port = read_field(s, "port", c.port, "service");
    if (s.contains("default_method")) {
      c.default_method = parse_example_method(read_field<std::string>(s, "default_method", "", "service"));
    }
    c.max_text_length = read_field(s, "max_text_length", c.max_text_length, "service");
    c.seed = read_field(s, "seed", c.seed, "service");
  }
  if (c.port < 0 || c.port > 65535) fail(ErrorCode::invalid_config, "port out of range");
  return c;
}

AppConfig AppConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::invalid_config, "cannot read config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, path.string() + ": " + e.what());
  }
  AppConfig c = from_json(j);
  // Relative paths are relative to the config file.
  const auto base = path.parent_path();
  for (auto* p : {&c.model, &c.store, &c.corpus, &c.vocab, &c.wordlists, &c.feedback_log}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
  return c;
}

json AppConfig::to_json() const {
  json j;
  j["paths"] = {{"model", model.string()},     {"store", store.string()},
                {"corpus", corpus.string()},   {"vocab", vocab.string()},
                {"wordlists", wordlists.string()}, {"feedback_log", feedback_log.string()}};
  j["decode"] = decode_config_to_json(decode);
  j["service"] = {{"host", host},
                  {"port", port},
                  {"default_method", ebgec::to_string(default_method)},
                  {"max_text_length", max_text_length},
                  {"seed", seed}};
  return j;
}

void AppConfig::validate() const {
  decode.validate();
  for (const auto& [name, p] : {std::pair<const char*, const std::filesystem::path*>{"model", &model},
                                {"store", &store},
                                {"corpus", &corpus},
                                {"vocab", &vocab}}) {
    if (p->empty()) fail(ErrorCode::invalid_config, std::string("paths.") + name + " is not set");
    if (!std::filesystem::exists(*p)) {
      fail(ErrorCode::invalid_config, std::string("paths.") + name + " does not exist: " + p->string());
    }
  }
  if (!wordlists.empty() && !std::filesystem::is_directory(wordlists)) {
    fail(ErrorCode::invalid_config, "paths.wordlists is not a directory: " + wordlists.string());
  }
}

std::shared_ptr<const Artifacts> Artifacts::assemble(Vocab vocab, ModelParams params, Corpus corpus,
                                                     Datastore store, ClosedClasses classes) {
  auto a = std::make_shared<Artifacts>();
  a->vocab = std::move(vocab);
  a->model = std::make_unique<Seq2Seq>(std::move(params));
  if (a->model->vocab_size() != a->vocab.size()) {
    fail(ErrorCode::dim_mismatch, "model vocabulary size " + std::to_string(a->model->vocab_size()) +
                                      " differs from vocabulary file size " +
                                      std::to_string(a->vocab.size()));
  }
  if (!store.empty() && store.dim() != a->model->hidden_dim()) {
    fail(ErrorCode::dim_mismatch, "store dimension differs from model hidden size");
  }
  a->corpus = std::move(corpus);
  a->store = std::move(store);
  a->classes = std::move(classes);
  a->edit_index = EditIndex::build(a->corpus);
  a->context_encoder = std::make_unique<Seq2SeqContextEncoder>(*a->model, a->vocab);
  a->context_store = build_contextual_store(*a->context_encoder, a->corpus, &a->vocab);
  return a;
}

std::shared_ptr<const Artifacts> Artifacts::load(const AppConfig& config) {
  config.validate();
  Vocab vocab = Vocab::load(config.vocab);
  ModelParams params = load_checkpoint(config.model);
  Datastore store = Datastore::load(config.store, kStoreMagic,
                                    static_cast<std::size_t>(params.dims.hidden_dim));
  auto index_path = config.store;
  index_path += ".ivf";
  if (std::filesystem::exists(index_path)) store.load_index(index_path);
  Corpus corpus(load_corpus(config.corpus));
  ClosedClasses classes =
      config.wordlists.empty() ? ClosedClasses::builtin() : ClosedClasses::load(config.wordlists);
  return assemble(std::move(vocab), std::move(params), std::move(corpus), std::move(store),
                  std::move(classes));
}

FeedbackLog::FeedbackLog(std::filesystem::path path) : path_(std::move(path)) {}

void FeedbackLog::append(const DecisionRecord& record) {
  const std::string line = decision_line(record) + "\n";
  std::lock_guard lock(mutex_);
  std::FILE* f = std::fopen(path_.c_str(), "ab");
  if (!f) fail(ErrorCode::io_error, "cannot open feedback log " + path_.string());
  const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fflush(f) == 0;
  std::fclose(f);
  if (!ok) fail(ErrorCode::io_error, "write failed for feedback log " + path_.string());
}

std::vector<DecisionRecord> FeedbackLog::read() const {
  std::lock_guard lock(mutex_);
  if (!std::filesystem::exists(path_)) return {};
  return load_decision_log(path_);
}

std::string sentence_id_for(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

json span_json(const Span& s) { return json::array({s.lo, s.hi}); }

json edit_json(const Edit& e) {
  return {{"src_span", span_json(e.src_span)},
          {"tgt_span", span_json(e.tgt_span)},
          {"op", to_string(e.op)},
          {"src_tokens", e.src_tokens},
          {"tgt_tokens", e.tgt_tokens},
          {"error_type", to_string(e.type)},
          {"rendered", e.render()}};
}

json example_json(const std::optional<Example>& ex) {
  if (!ex) return nullptr;
  return {{"pair_id", ex->pair_id},
          {"src", join_tokens(ex->src)},
          {"tgt", join_tokens(ex->tgt)},
          {"src_tokens", ex->src},
          {"tgt_tokens", ex->tgt},
          {"anchor_position", ex->anchor_position},
          {"anchor_edit", ex->anchor_edit ? edit_json(*ex->anchor_edit) : json(nullptr)},
          {"distance", ex->squared_distance}};
}

HttpResponse json_response(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::optional<json> parse_object(const std::string& body) {
  try {
    json j = json::parse(body);
    if (j.is_object()) return j;
  } catch (const json::exception&) {
  }
  return std::nullopt;
}

}  // namespace

CorrectionService::CorrectionService(AppConfig config, std::shared_ptr<const Artifacts> artifacts)
    : config_(std::move(config)), artifacts_(std::move(artifacts)), log_(config_.feedback_log) {}

json CorrectionService::correct(const std::string& text, ExampleMethod method,
                                std::optional<double> lambda) const {
  if (!artifacts_) fail(ErrorCode::invalid_state, "artifacts are not loaded");
  const Artifacts& a = *artifacts_;
  const auto tokens = split_whitespace(text);
  if (tokens.empty()) fail(ErrorCode::invalid_input, "text has no tokens");

  DecodeConfig cfg = config_.decode;
  if (lambda) cfg.lambda = *lambda;
  const Corrector corrector(*a.model, &a.store, &a.corpus);
  const CorrectionResult result = corrector.correct(a.vocab.encode(tokens), cfg);
  const auto out = output_tokens(result, a.vocab, tokens);
  const std::string sid = sentence_id_for(text);

  std::vector<PresentedEdit> presented;
  switch (method) {
    case ExampleMethod::eb:
      presented = present(result, tokens, a.vocab, a.classes);
      break;
    case ExampleMethod::token: {
      const std::uint64_t seed = std::stoull(sid, nullptr, 16) ^ config_.seed;
      presented = attach_token_examples(extract_typed_edits(tokens, out, a.classes), a.edit_index,
                                        a.corpus, seed);
      break;
    }
    case ExampleMethod::embed:
      presented = attach_embed_examples(extract_typed_edits(tokens, out, a.classes), out,
                                        a.context_store, *a.context_encoder, a.corpus, cfg.k);
      break;
  }

  json edits = json::array();
  for (const auto& p : presented) {
    json e = edit_json(p.edit);
    e["example"] = example_json(p.example);
    edits.push_back(std::move(e));
  }
  return {{"sentence_id", sid},
          {"method", to_string(method)},
          {"tokens", tokens},
          {"corrected", join_tokens(out)},
          {"corrected_tokens", out},
          {"edits", std::move(edits)},
          {"score", result.score}};
}

namespace {

struct CorrectRequest {
  std::string text;
  ExampleMethod method;
  std::optional<double> lambda;
};

// Returns an error response when the body is unusable.
std::variant<CorrectRequest, HttpResponse> parse_correct_request(const std::string& body,
                                                                 const AppConfig& config) {
  auto j = parse_object(body);
  if (!j) return error_response(400, "body must be a JSON object");
  if (!j->contains("text") || !(*j)["text"].is_string()) {
    return error_response(400, "field 'text' must be a string");
  }
  CorrectRequest r{(*j)["text"].get<std::string>(), config.default_method, std::nullopt};
  if (r.text.size() > config.max_text_length) {
    return error_response(413, "text exceeds " + std::to_string(config.max_text_length) + " bytes");
  }
  if (split_whitespace(r.text).empty()) return error_response(400, "text is empty");
  if (j->contains("method") && !(*j)["method"].is_null()) {
    if (!(*j)["method"].is_string()) return error_response(400, "field 'method' must be a string");
    try {
      r.method = parse_example_method((*j)["method"].get<std::string>());
    } catch (const Error& e) {
      return error_response(400, e.what());
    }
  }
  if (j->contains("lambda") && !(*j)["lambda"].is_null()) {
    if (!(*j)["lambda"].is_number()) return error_response(400, "field 'lambda' must be a number");
    r.lambda = (*j)["lambda"].get<double>();
    if (!(*r.lambda >= 0.0 && *r.lambda <= 1.0)) return error_response(400, "lambda must lie in [0, 1]");
  }
  return r;
}

}  // namespace

HttpResponse CorrectionService::handle_correct(const std::string& body) const {
  auto parsed = parse_correct_request(body, config_);
  if (auto* err = std::get_if<HttpResponse>(&parsed)) return *err;
  if (!artifacts_) return error_response(503, "model and datastore are not loaded");
  const auto& req = std::get<CorrectRequest>(parsed);
  try {
    return json_response(200, correct(req.text, req.method, req.lambda));
  } catch (const Error& e) {
    const bool client = e.code() == ErrorCode::invalid_input || e.code() == ErrorCode::invalid_config ||
                        e.code() == ErrorCode::degenerate_config;
    return error_response(client ? 400 : 500, e.what());
  }
}

HttpResponse CorrectionService::handle_recompose(const std::string& body) const {
  auto parsed = parse_correct_request(body, config_);
  if (auto* err = std::get_if<HttpResponse>(&parsed)) return *err;
  const json j = json::parse(body);
  if (!j.contains("accepted") || !j["accepted"].is_array()) {
    return error_response(400, "field 'accepted' must be an array of booleans");
  }
  std::vector<bool> accepted;
  for (const auto& v : j["accepted"]) {
    if (!v.is_boolean()) return error_response(400, "field 'accepted' must be an array of booleans");
    accepted.push_back(v.get<bool>());
  }
  if (!artifacts_) return error_response(503, "model and datastore are not loaded");
  const auto& req = std::get<CorrectRequest>(parsed);
  try {
    const json corrected = correct(req.text, req.method, req.lambda);
    const auto tokens = split_whitespace(req.text);
    const auto out = corrected["corrected_tokens"].get<std::vector<std::string>>();
    const auto edits = extract_edits(tokens, out);
    if (accepted.size() != edits.size()) {
      return error_response(400, "expected " + std::to_string(edits.size()) + " accept flags, got " +
                                     std::to_string(accepted.size()));
    }
    const auto recomposed = apply_accepted(tokens, edits, accepted);
    return json_response(200, {{"sentence_id", corrected["sentence_id"]},
                               {"recomposed", join_tokens(recomposed)},
                               {"recomposed_tokens", recomposed}});
  } catch (const Error& e) {
    return error_response(e.code() == ErrorCode::invalid_input ? 400 : 500, e.what());
  }
}

HttpResponse CorrectionService::handle_feedback(const std::string& body) {
  auto j = parse_object(body);
  if (!j) return error_response(400, "body must be a JSON object");
  DecisionRecord r;
  const json& o = *j;
  if (!o.contains("sentence_id") || !o["sentence_id"].is_string()) {
    return error_response(400, "field 'sentence_id' must be a string");
  }
  if (!o.contains("edit_index") || !o["edit_index"].is_number_unsigned()) {
    return error_response(400, "field 'edit_index' must be a non-negative integer");
  }
  if (!o.contains("method") || !o["method"].is_string()) {
    return error_response(400, "field 'method' must be a string");
  }
  if (!o.contains("label") || !o["label"].is_number_integer() ||
      (o["label"].get<long long>() != 0 && o["label"].get<long long>() != 1)) {
    return error_response(400, "field 'label' must be 0 or 1");
  }
  if (o.contains("accepted") && !o["accepted"].is_boolean()) {
    return error_response(400, "field 'accepted' must be a boolean");
  }
  try {
    r.method = to_string(parse_example_method(o["method"].get<std::string>()));
  } catch (const Error& e) {
    return error_response(400, e.what());
  }
  r.timestamp = utc_timestamp();
  r.sentence_id = o["sentence_id"].get<std::string>();
  r.edit_index = o["edit_index"].get<std::size_t>();
  r.label = o["label"].get<int>();
  r.accepted = o.value("accepted", false);
  try {
    log_.append(r);
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
  return json_response(200, {{"status", "ok"}});
}

HttpResponse CorrectionService::handle_health() const {
  json j;
  j["status"] = artifacts_ ? "ok" : "unavailable";
  j["model_loaded"] = artifacts_ != nullptr;
  j["store_loaded"] = artifacts_ != nullptr;
  j["datastore_entries"] = artifacts_ ? artifacts_->store.size() : 0;
  j["vocab_size"] = artifacts_ ? artifacts_->vocab.size() : 0;
  j["approximate_index"] = artifacts_ && artifacts_->store.has_index();
  return json_response(200, j);
}

HttpResponse CorrectionService::handle_usefulness() const {
  std::vector<DecisionRecord> records;
  try {
    records = log_.read();
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
  json scores = json::object();
  if (!records.empty()) {
    for (const auto& [method, value] : usefulness_score(records)) scores[method] = value;
  }
  return json_response(200, {{"records", records.size()}, {"scores", scores}});
}

HttpServer::HttpServer(CorrectionService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::install_routes() {
  auto reply = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server_->Post("/api/correct", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_correct(req.body));
  });
  server_->Post("/api/recompose", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_recompose(req.body));
  });
  server_->Post("/api/feedback", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, service_.handle_feedback(req.body));
  });
  server_->Get("/api/health", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.handle_health());
  });
  server_->Get("/api/usefulness", [this, reply](const httplib::Request&, httplib::Response& res) {
    reply(res, service_.handle_usefulness());
  });
}

int HttpServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) fail(ErrorCode::io_error, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void HttpServer::listen(const std::string& host, int port) {
  if (!server_->listen(host, port)) {
    fail(ErrorCode::io_error, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace ebgec
