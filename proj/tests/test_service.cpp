#include <fstream>

#include "support.hpp"

#include "ebgec/service.hpp"

// After Eigen: <resolv.h>, pulled in here, defines a _res macro that breaks
// Eigen headers included later.
#include "httplib.h"

using namespace ebgec;
using ebgec::testing::TempDir;
using ebgec::testing::tiny_system;
using nlohmann::json;

namespace {

std::shared_ptr<const Artifacts> tiny_artifacts() {
  static const auto artifacts = [] {
    const auto& sys = tiny_system();
    return Artifacts::assemble(sys.vocab, sys.params, Corpus(sys.train),
                               build_datastore(*sys.model, sys.train, sys.vocab), ClosedClasses::builtin());
  }();
  return artifacts;
}

AppConfig config_in(const TempDir& dir) {
  AppConfig c;
  c.feedback_log = dir / "feedback.jsonl";
  c.max_text_length = 200;
  return c;
}

std::string text_of(std::size_t i) { return join_tokens(tiny_system().held_out[i].src); }

json body_of(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("correct returns edits with examples and is deterministic") {
  TempDir dir;
  const CorrectionService svc(config_in(dir), tiny_artifacts());
  std::size_t with_examples = 0;
  for (std::size_t i = 0; i < 15; ++i) {
    const auto r = svc.handle_correct(json{{"text", text_of(i)}}.dump());
    REQUIRE(r.status == 200);
    const auto j = body_of(r);
    CHECK(j["method"] == "eb");
    CHECK(j["sentence_id"] == sentence_id_for(text_of(i)));
    CHECK(j["corrected"] == join_tokens(j["corrected_tokens"].get<std::vector<std::string>>()));
    for (const auto& e : j["edits"]) {
      CHECK(e.contains("rendered"));
      CHECK(e.contains("error_type"));
      if (!e["example"].is_null()) {
        ++with_examples;
        const auto tgt = e["example"]["tgt_tokens"].get<std::vector<std::string>>();
        CHECK(e["example"]["anchor_position"].get<std::size_t>() <= tgt.size());
      }
    }
    CHECK(svc.handle_correct(json{{"text", text_of(i)}}.dump()).body == r.body);
  }
  CHECK(with_examples > 0);
}

TEST_CASE("correct request validation") {
  TempDir dir;
  const CorrectionService svc(config_in(dir), tiny_artifacts());
  CHECK(svc.handle_correct("not json").status == 400);
  CHECK(svc.handle_correct("[1,2]").status == 400);
  CHECK(svc.handle_correct(R"({"text": 5})").status == 400);
  CHECK(svc.handle_correct(R"({"text": "   "})").status == 400);
  CHECK(svc.handle_correct(R"({"text": "a b", "lambda": 1.5})").status == 400);
  CHECK(svc.handle_correct(R"({"text": "a b", "lambda": "x"})").status == 400);
  CHECK(svc.handle_correct(R"({"text": "a b", "method": "nearest"})").status == 400);
  CHECK(svc.handle_correct(json{{"text", std::string(201, 'a')}}.dump()).status == 413);

  const CorrectionService empty(config_in(dir), nullptr);
  CHECK(empty.handle_correct(R"({"text": "a b"})").status == 503);
  const auto health = body_of(empty.handle_health());
  CHECK(health["model_loaded"] == false);
  CHECK(health["status"] == "unavailable");
}

TEST_CASE("baseline methods and lambda override") {
  TempDir dir;
  const CorrectionService svc(config_in(dir), tiny_artifacts());
  const auto& sys = tiny_system();
  for (std::size_t i = 0; i < 15; ++i) {
    const auto eb = body_of(svc.handle_correct(json{{"text", text_of(i)}}.dump()));
    for (const char* m : {"token", "embed"}) {
      const auto j = body_of(svc.handle_correct(json{{"text", text_of(i)}, {"method", m}}.dump()));
      CHECK(j["method"] == m);
      CHECK(j["corrected"] == eb["corrected"]);
      CHECK(j["edits"].size() == eb["edits"].size());
    }
    // lambda 0 is plain model output.
    const auto van = body_of(svc.handle_correct(json{{"text", text_of(i)}, {"lambda", 0.0}}.dump()));
    const Corrector vanilla(*sys.model, nullptr, nullptr);
    DecodeConfig cfg;
    const auto src = sys.held_out[i].src;
    CHECK(van["corrected_tokens"].get<std::vector<std::string>>() ==
          output_tokens(vanilla.correct(sys.vocab.encode(src), cfg), sys.vocab, src));
  }
  // Token examples carry the very same edit, or nothing.
  std::size_t null_examples = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    const auto j = body_of(svc.handle_correct(json{{"text", text_of(i)}, {"method", "token"}}.dump()));
    for (const auto& e : j["edits"]) {
      if (e["example"].is_null()) {
        ++null_examples;
        continue;
      }
      CHECK(e["example"]["anchor_edit"]["rendered"] == e["rendered"]);
    }
  }
  MESSAGE("token edits without an indexed twin: " << null_examples);
}

TEST_CASE("recompose applies accepted edits only") {
  TempDir dir;
  const CorrectionService svc(config_in(dir), tiny_artifacts());
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 40 && checked < 5; ++i) {
    const auto corrected = body_of(svc.handle_correct(json{{"text", text_of(i)}}.dump()));
    const std::size_t n = corrected["edits"].size();
    if (n == 0) continue;
    ++checked;
    const auto all = body_of(svc.handle_recompose(json{{"text", text_of(i)}, {"accepted", std::vector<bool>(n, true)}}.dump()));
    CHECK(all["recomposed"] == corrected["corrected"]);
    const auto none = body_of(svc.handle_recompose(json{{"text", text_of(i)}, {"accepted", std::vector<bool>(n, false)}}.dump()));
    CHECK(none["recomposed"] == text_of(i));
    if (n >= 2) {
      std::vector<bool> first(n, false);
      first[0] = true;
      const auto mixed = body_of(svc.handle_recompose(json{{"text", text_of(i)}, {"accepted", first}}.dump()));
      CHECK(mixed["recomposed"] != none["recomposed"]);
      CHECK(mixed["recomposed"] != all["recomposed"]);
    }
    CHECK(svc.handle_recompose(json{{"text", text_of(i)}, {"accepted", std::vector<bool>(n + 1, true)}}.dump()).status == 400);
  }
  CHECK(checked > 0);
  CHECK(svc.handle_recompose(R"({"text": "a b", "accepted": [1]})").status == 400);
  CHECK(svc.handle_recompose(R"({"text": "a b"})").status == 400);
}

TEST_CASE("feedback is validated, logged and survives a restart") {
  TempDir dir;
  const auto cfg = config_in(dir);
  {
    CorrectionService svc(cfg, tiny_artifacts());
    CHECK(svc.handle_feedback(R"({"sentence_id":"s1","edit_index":0,"method":"eb","label":2})").status == 400);
    CHECK(svc.handle_feedback(R"({"sentence_id":"s1","edit_index":-1,"method":"eb","label":1})").status == 400);
    CHECK(svc.handle_feedback(R"({"sentence_id":"s1","edit_index":0,"method":"knn","label":1})").status == 400);
    CHECK(svc.handle_feedback(R"({"edit_index":0,"method":"eb","label":1})").status == 400);
    CHECK(svc.handle_feedback("nope").status == 400);
    const auto ok = svc.handle_feedback(R"({"sentence_id":"s1","edit_index":0,"method":"eb","label":1,"accepted":true})");
    CHECK(ok.status == 200);
    CHECK(body_of(ok)["status"] == "ok");
    CHECK(svc.handle_feedback(R"({"sentence_id":"s1","edit_index":1,"method":"token","label":0})").status == 200);
    CHECK(svc.feedback_log().read().size() == 2);
  }
  CorrectionService restarted(cfg, tiny_artifacts());
  CHECK(restarted.feedback_log().read().size() == 2);
  CHECK(restarted.handle_feedback(R"({"sentence_id":"s2","edit_index":0,"method":"eb","label":0})").status == 200);
  const auto records = restarted.feedback_log().read();
  REQUIRE(records.size() == 3);
  CHECK(records[0].accepted);
  CHECK(records[0].timestamp.size() == 20);
  const auto u = body_of(restarted.handle_usefulness());
  CHECK(u["records"] == 3);
  CHECK(u["scores"]["eb"] == 50.0);
  CHECK(u["scores"]["token"] == 0.0);
}

TEST_CASE("HTTP routes serve the handlers") {
  TempDir dir;
  CorrectionService svc(config_in(dir), tiny_artifacts());
  HttpServer server(svc);
  const int port = server.start("127.0.0.1", 0);
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);

  const auto health = client.Get("/api/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["datastore_entries"] == tiny_artifacts()->store.size());

  const auto corrected = client.Post("/api/correct", json{{"text", text_of(0)}}.dump(), "application/json");
  REQUIRE(corrected);
  CHECK(corrected->status == 200);
  CHECK(corrected->body == svc.handle_correct(json{{"text", text_of(0)}}.dump()).body);

  const auto bad = client.Post("/api/correct", "{", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  const auto fb = client.Post("/api/feedback", R"({"sentence_id":"x","edit_index":0,"method":"embed","label":1})",
                              "application/json");
  REQUIRE(fb);
  CHECK(fb->status == 200);
  const auto u = client.Get("/api/usefulness");
  REQUIRE(u);
  CHECK(json::parse(u->body)["scores"]["embed"] == 100.0);
  server.stop();
}

TEST_CASE("config parsing") {
  const auto c = AppConfig::from_json(json::parse(R"({
    "paths": {"model": "m.bin", "store": "s.bin"},
    "decode": {"lambda": 0.25, "k": 8, "search_mode": "approximate", "distance_threshold": 4.5},
    "service": {"port": 9000, "default_method": "embed"}
  })"));
  CHECK(c.model == "m.bin");
  CHECK(c.decode.lambda == 0.25);
  CHECK(c.decode.k == 8);
  CHECK(c.decode.temperature == 1000.0);
  CHECK(c.decode.search_mode == SearchMode::approximate);
  CHECK(c.decode.distance_threshold == 4.5);
  CHECK(c.port == 9000);
  CHECK(c.default_method == ExampleMethod::embed);
  const auto round = AppConfig::from_json(c.to_json());
  CHECK(round.to_json() == c.to_json());

  CHECK_THROWS_CODE(AppConfig::from_json(json::parse(R"({"decode": {"lamda": 0.1}})")), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(AppConfig::from_json(json::parse(R"({"decode": {"k": "many"}})")), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(AppConfig::from_json(json::parse(R"({"service": {"port": 70000}})")), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(AppConfig::from_json(json::parse(R"({"service": {"default_method": "x"}})")), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(AppConfig::from_json(json::parse(R"({"extra": 1})")), ErrorCode::invalid_config);
  CHECK_THROWS_CODE(AppConfig{}.validate(), ErrorCode::invalid_config);

  TempDir dir;
  {
    std::ofstream out(dir / "cfg.json");
    out << R"({"paths": {"model": "sub/m.bin", "feedback_log": "fb.jsonl"}})";
  }
  const auto loaded = AppConfig::load(dir / "cfg.json");
  CHECK(loaded.model == dir / "sub/m.bin");
  CHECK(loaded.feedback_log == dir / "fb.jsonl");
  CHECK_THROWS_CODE(AppConfig::load(dir / "none.json"), ErrorCode::invalid_config);
}

TEST_CASE("artifacts persist and reload through the config") {
  const auto& sys = tiny_system();
  TempDir dir;
  save_checkpoint(dir / "model.bin", sys.params);
  sys.vocab.save(dir / "vocab.txt");
  save_corpus(dir / "corpus.jsonl", sys.train);
  auto store = build_datastore(*sys.model, sys.train, sys.vocab);
  store.build_index(IvfOptions{16, 4, 10, 1});
  store.save(dir / "store.bin");
  store.save_index(dir / "store.bin.ivf");

  AppConfig cfg = config_in(dir);
  cfg.model = dir / "model.bin";
  cfg.vocab = dir / "vocab.txt";
  cfg.corpus = dir / "corpus.jsonl";
  cfg.store = dir / "store.bin";
  cfg.validate();
  const auto loaded = Artifacts::load(cfg);
  CHECK(loaded->store.size() == store.size());
  CHECK(loaded->store.has_index());
  const CorrectionService a(cfg, loaded), b(cfg, tiny_artifacts());
  for (std::size_t i = 0; i < 10; ++i) {
    const auto body = json{{"text", text_of(i)}}.dump();
    CHECK(a.handle_correct(body).body == b.handle_correct(body).body);
  }
  cfg.decode.search_mode = SearchMode::approximate;
  const CorrectionService approx(cfg, loaded);
  CHECK(approx.handle_correct(json{{"text", text_of(0)}}.dump()).status == 200);
}
