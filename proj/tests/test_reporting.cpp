// Batch execution, persistence, and report emission. Determinism contract:
// transcripts.jsonl, results.jsonl, and metrics.json are byte-identical for
// identical scripted batches; manifest.json and exchanges.jsonl carry
// timestamps/latency and are exempt.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "support/test_support.hpp"
#include "tradertalk/reporting.hpp"

namespace report = tradertalk::report;
namespace core = tradertalk::core;
namespace llm = tradertalk::llm;
namespace scenario = tradertalk::scenario;
namespace analysis = tradertalk::analysis;
namespace metrics = tradertalk::metrics;
namespace sim = tradertalk::sim;

namespace {

const analysis::ClassifierRules& rules() {
  static const analysis::ClassifierRules r = analysis::ClassifierRules::defaults();
  return r;
}

/// Four single-shot texts cycled by run index; both agents answer alike.
void script_rq1_mix(llm::ScriptedBackend& backend) {
  backend.set_default_responses({
      "1. Quiet. 2. Flat mandate. 3. I actually have 0 bonds. 4. Decision: no trade.",
      "1. Quiet. 2. Flat mandate. 3. I am flat. 4. Decision: flatten my trading book.",
      "1. Flow seen. 2. Provide liquidity. 3. I am flat. 4. Decision: buy bonds. I will buy.",
      "1. Flow seen. 2. Provide liquidity. 3. I am flat. 4. Decision: sell bonds. I will sell.",
  });
}

/// Fails every completion for one specific run index; zero retries.
class FailsOnRun final : public llm::LlmBackend {
 public:
  explicit FailsOnRun(int bad_run)
      : LlmBackend(llm::RetryPolicy{0, std::chrono::milliseconds{0}}), bad_run_(bad_run) {}

 protected:
  std::string complete_once(const llm::LlmRequest&, const llm::CallContext& ctx) override {
    if (ctx.run_index == bad_run_) throw llm::TransportError("simulated outage");
    return "1. Quiet. 2. Flat mandate. 3. I actually have 0 bonds. 4. Decision: no trade.";
  }

 private:
  int bad_run_;
};

}  // namespace

// --- run_batch --------------------------------------------------------------------------------

TEST(RunBatch, ScriptedBatchWritesTheFullOutputLayout) {
  const auto cfg = scenario::builtin_rq1();
  llm::ScriptedBackend backend;
  script_rq1_mix(backend);
  test_support::TempDir tmp("batch");

  const auto batch = report::run_batch(backend, report::BackendKind::Scripted, cfg, 8, 4,
                                       tmp.path() / "out", rules());

  EXPECT_EQ(batch.exit_code, 0);
  EXPECT_EQ(batch.manifest.n_requested, 8);
  EXPECT_EQ(batch.manifest.n_completed, 8);
  EXPECT_EQ(batch.manifest.n_errored, 0);
  EXPECT_EQ(batch.manifest.scenario_id, "rq1");
  EXPECT_EQ(batch.manifest.mode, "rq1");
  EXPECT_EQ(batch.manifest.backend_kind, report::BackendKind::Scripted);
  EXPECT_EQ(batch.manifest.tool_version, tradertalk::version_string);
  EXPECT_EQ(batch.metrics.n_runs, 8);
  ASSERT_EQ(batch.results.size(), 8u);

  for (const auto* name : {"manifest.json", "transcripts.jsonl", "results.jsonl",
                           "metrics.json", "metrics.csv", "exchanges.jsonl"})
    EXPECT_TRUE(std::filesystem::exists(tmp.path() / "out" / name)) << name;

  // Runs land in index order regardless of worker interleaving.
  const auto stored = report::read_transcripts_jsonl(tmp.path() / "out" / "transcripts.jsonl");
  ASSERT_EQ(stored.size(), 8u);
  for (int i = 0; i < 8; ++i) {
    EXPECT_EQ(stored[static_cast<std::size_t>(i)].run_index, i);
    EXPECT_EQ(stored[static_cast<std::size_t>(i)].transcript.scenario_id, "rq1");
    EXPECT_EQ(stored[static_cast<std::size_t>(i)].transcript.turns.size(), 3u);
  }
  const auto results = report::read_results_jsonl(tmp.path() / "out" / "results.jsonl");
  EXPECT_EQ(results, batch.results);

  // Responses rotate by run index: run 0 no-trade, run 1 flatten, ...
  EXPECT_EQ(metrics::run_decision(batch.results[0]), core::TradeDecision::NoTrade);
  EXPECT_EQ(metrics::run_decision(batch.results[1]), core::TradeDecision::Flatten);
  EXPECT_EQ(metrics::run_decision(batch.results[2]), core::TradeDecision::Buy);
  EXPECT_EQ(metrics::run_decision(batch.results[3]), core::TradeDecision::Sell);
  EXPECT_EQ(metrics::run_decision(batch.results[4]), core::TradeDecision::NoTrade);
}

TEST(RunBatch, DeterministicBytesAcrossIdenticalBatches) {
  const auto cfg = scenario::builtin_rq1();
  test_support::TempDir tmp("determinism");

  const auto run_once = [&](const std::filesystem::path& dir) {
    llm::ScriptedBackend backend;
    script_rq1_mix(backend);
    return report::run_batch(backend, report::BackendKind::Scripted, cfg, 12, 6, dir,
                             rules(), {}, 42);
  };
  const auto first = run_once(tmp.path() / "a");
  const auto second = run_once(tmp.path() / "b");

  EXPECT_EQ(first.metrics, second.metrics);
  for (const auto* name : {"transcripts.jsonl", "results.jsonl", "metrics.json"}) {
    const auto a = test_support::read_file(tmp.path() / "a" / name);
    const auto b = test_support::read_file(tmp.path() / "b" / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, b) << name << " differs between identical batches";
  }
}

TEST(RunBatch, ErroredRunsAreKeptCountedAndFlagged) {
  const auto cfg = scenario::builtin_rq1();
  FailsOnRun backend(2);
  test_support::TempDir tmp("errored");

  const auto batch = report::run_batch(backend, report::BackendKind::Scripted, cfg, 4, 2,
                                       tmp.path() / "out", rules());

  EXPECT_EQ(batch.exit_code, 2);
  EXPECT_EQ(batch.manifest.n_errored, 1);
  EXPECT_EQ(batch.manifest.n_completed, 3);
  EXPECT_TRUE(batch.results[2].errored);
  EXPECT_FALSE(batch.results[1].errored);
  EXPECT_EQ(batch.metrics.n_errored, 1);

  const auto stored = report::read_transcripts_jsonl(tmp.path() / "out" / "transcripts.jsonl");
  ASSERT_EQ(stored.size(), 4u);
  EXPECT_EQ(stored[2].transcript.termination, core::Termination::BackendError);
  EXPECT_EQ(stored[1].transcript.termination, core::Termination::Concluded);
}

TEST(RunBatch, RejectsBadArguments) {
  const auto cfg = scenario::builtin_rq1();
  llm::ScriptedBackend backend;
  test_support::TempDir tmp("badargs");
  EXPECT_THROW((void)report::run_batch(backend, report::BackendKind::Scripted, cfg, 0, 1,
                                       tmp.path() / "out", rules()),
               llm::ConfigError);
}

TEST(RunBatch, JudgeClassifierVerdictReplacesRuleBasedLabels) {
  const auto cfg = scenario::builtin_rq1();
  llm::ScriptedBackend backend;
  // The agents' prompt is pinned by fingerprint; the judge call falls through
  // to the default response, which answers with a structured verdict.
  backend.add_response(scenario::make_request(cfg.agents[0], cfg, {}),
                       "1. Quiet. 2. Flat. 3. I am flat. 4. Decision: no trade.");
  backend.set_default(
      R"({"per_agent_intention":{"mm_one":"unclear","mm_two":"declines"},)"
      R"("per_agent_decision":{"mm_one":null,"mm_two":"no_trade"},"trade":null})");

  test_support::TempDir tmp("judge");
  sim::RunOptions options;
  options.llm_judge_classifier = true;
  const auto batch = report::run_batch(backend, report::BackendKind::Scripted, cfg, 1, 1,
                                       tmp.path() / "out", rules(), options);

  // These labels disagree with the rule-based classifier on purpose: they can
  // only have come from the judge.
  EXPECT_EQ(batch.results[0].per_agent_intention.at("mm_one"), core::IntentionLabel::Unclear);
  EXPECT_EQ(batch.results[0].per_agent_decision.at("mm_one"), std::nullopt);
  EXPECT_EQ(batch.results[0].per_agent_decision.at("mm_two"), core::TradeDecision::NoTrade);
}

TEST(RunBatch, JudgeClassifierFallsBackToRulesOnGarbage) {
  const auto cfg = scenario::builtin_rq1();
  test_support::TempDir tmp("judgefallback");

  llm::ScriptedBackend backend;
  script_rq1_mix(backend);  // the judge call also gets these texts → unparseable
  sim::RunOptions options;
  options.llm_judge_classifier = true;
  const auto judged = report::run_batch(backend, report::BackendKind::Scripted, cfg, 4, 2,
                                        tmp.path() / "a", rules(), options);

  llm::ScriptedBackend plain_backend;
  script_rq1_mix(plain_backend);
  const auto plain = report::run_batch(plain_backend, report::BackendKind::Scripted, cfg, 4,
                                       2, tmp.path() / "b", rules());

  EXPECT_EQ(judged.results, plain.results);  // fallback produced identical labels
}

TEST(RunBatch, ReplayReproducesTheRecordedConversations) {
  const auto cfg = scenario::builtin_rq1();
  test_support::TempDir tmp("replay");
  llm::ScriptedBackend backend;
  script_rq1_mix(backend);
  (void)report::run_batch(backend, report::BackendKind::Scripted, cfg, 6, 3,
                          tmp.path() / "rec", rules());

  llm::ReplayBackend replay(tmp.path() / "rec" / "exchanges.jsonl");
  (void)report::run_batch(replay, report::BackendKind::Replay, cfg, 6, 3,
                          tmp.path() / "rep", rules());

  EXPECT_EQ(test_support::read_file(tmp.path() / "rec" / "transcripts.jsonl"),
            test_support::read_file(tmp.path() / "rep" / "transcripts.jsonl"));
  EXPECT_EQ(test_support::read_file(tmp.path() / "rec" / "results.jsonl"),
            test_support::read_file(tmp.path() / "rep" / "results.jsonl"));
}

// --- emit_report -------------------------------------------------------------------------------

namespace {

report::RunManifest manifest_for(const std::string& mode) {
  report::RunManifest m;
  m.scenario_id = mode;
  m.mode = mode;
  m.n_requested = 4;
  m.n_completed = 4;
  m.backend_kind = report::BackendKind::Scripted;
  m.model_id = "gpt-4o-mini";
  m.temperature = 1.0;
  m.started_at = "2026-08-19T00:00:00Z";
  m.finished_at = "2026-08-19T00:00:01Z";
  m.tool_version = tradertalk::version_string;
  return m;
}

metrics::BatchMetrics sample_metrics() {
  std::vector<core::SimulationResult> results;
  for (int i = 0; i < 4; ++i) {
    core::SimulationResult r;
    r.scenario_id = "rq2";
    r.run_index = i;
    r.per_agent_intention = {{"A", core::IntentionLabel::IntendsToTrade},
                             {"B", core::IntentionLabel::IntendsToTrade}};
    r.per_agent_decision = {{"A", core::TradeDecision::NoTrade},
                            {"B", core::TradeDecision::NoTrade}};
    r.recall = {{"A", core::RecallVerdict::Correct}, {"B", core::RecallVerdict::Omitted}};
    if (i == 0) r.trade = core::ExecutedTrade{"B", "A", 10'000'000, "mid"};
    results.push_back(std::move(r));
  }
  return metrics::aggregate(results);
}

}  // namespace

TEST(EmitReport, FormatSelection) {
  test_support::TempDir tmp("formats");
  const auto m = sample_metrics();

  auto written = report::emit_report(manifest_for("rq2"), m, "json", tmp.path() / "j");
  ASSERT_EQ(written.size(), 1u);
  EXPECT_EQ(written[0].filename(), "metrics.json");

  written = report::emit_report(manifest_for("rq2"), m, "csv", tmp.path() / "c");
  ASSERT_EQ(written.size(), 1u);
  EXPECT_EQ(written[0].filename(), "metrics.csv");

  written = report::emit_report(manifest_for("rq2"), m, "both", tmp.path() / "b");
  EXPECT_EQ(written.size(), 2u);
  written = report::emit_report(manifest_for("rq2"), m, "", tmp.path() / "e");
  EXPECT_EQ(written.size(), 2u);

  EXPECT_THROW(
      (void)report::emit_report(manifest_for("rq2"), m, "xml", tmp.path() / "x"),
      llm::ConfigError);
}

TEST(EmitReport, JsonCarriesBenchmarksOnlyForConversationMode) {
  test_support::TempDir tmp("bench");
  const auto m = sample_metrics();

  (void)report::emit_report(manifest_for("rq2"), m, "json", tmp.path() / "rq2");
  const auto j2 = nlohmann::json::parse(
      test_support::read_file(tmp.path() / "rq2" / "metrics.json"));
  ASSERT_FALSE(j2.at("benchmarks").is_null());
  EXPECT_DOUBLE_EQ(j2.at("benchmarks").at("trade_rate").get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j2.at("benchmarks").at("us_equity_otr_2024").get<double>(), 0.0461);
  EXPECT_EQ(j2.at("metrics").at("n_runs").get<int>(), 4);
  EXPECT_FALSE(j2.contains("started_at"));  // byte-stable: no timestamps here

  (void)report::emit_report(manifest_for("rq1"), m, "json", tmp.path() / "rq1");
  const auto j1 = nlohmann::json::parse(
      test_support::read_file(tmp.path() / "rq1" / "metrics.json"));
  EXPECT_TRUE(j1.at("benchmarks").is_null());
}

TEST(EmitReport, CsvShapeAndRows) {
  test_support::TempDir tmp("csv");
  (void)report::emit_report(manifest_for("rq2"), sample_metrics(), "csv", tmp.path());
  const auto csv = test_support::read_file(tmp.path() / "metrics.csv");
  EXPECT_EQ(csv.rfind("metric,value,low,high\n", 0), 0u);  // header first
  EXPECT_NE(csv.find("\nn_runs,4,,\n"), std::string::npos);
  EXPECT_NE(csv.find("\ntrade_rate,0.25,"), std::string::npos);
  EXPECT_NE(csv.find("\ndecision_rate.no_trade,1,"), std::string::npos);
  EXPECT_NE(csv.find("\nintend_rate.A,1,"), std::string::npos);
}

TEST(EmitReport, MissingOutputDirectoryIsCreated) {
  test_support::TempDir tmp("mkdirs");
  const auto nested = tmp.path() / "a" / "b";
  (void)report::emit_report(manifest_for("rq2"), sample_metrics(), "json", nested);
  EXPECT_TRUE(std::filesystem::exists(nested / "metrics.json"));
}

TEST(EmitReport, UnwritableTargetRaisesIoErrorNamingThePath) {
  test_support::TempDir tmp("unwritable");
  // A regular file where a directory component must go makes the target
  // impossible to create.
  const auto blocker = tmp.path() / "blocker";
  std::ofstream(blocker) << "in the way";
  const auto target = blocker / "nested";
  try {
    (void)report::emit_report(manifest_for("rq2"), sample_metrics(), "json", target);
    FAIL() << "expected IoError";
  } catch (const report::IoError& e) {
    EXPECT_NE(std::string(e.what()).find("blocker"), std::string::npos);
  }
}

// --- manifest and JSONL IO -----------------------------------------------------------------------

TEST(Manifest, JsonRoundTripWithAndWithoutSeed) {
  auto m = manifest_for("rq2");
  m.n_errored = 1;
  m.seed = 42;
  const nlohmann::json j = m;
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_EQ(j.get<report::RunManifest>(), m);

  auto bare = manifest_for("rq1");
  bare.seed.reset();
  const nlohmann::json jb = bare;
  EXPECT_TRUE(jb.at("seed").is_null());
  EXPECT_EQ(jb.get<report::RunManifest>(), bare);
}

TEST(JsonlIo, ResultsRoundTripThroughDisk) {
  test_support::TempDir tmp("jsonl");
  std::vector<core::SimulationResult> results;
  core::SimulationResult r;
  r.scenario_id = "rq2";
  r.run_index = 0;
  r.transcript_ref = "rq2#0";
  r.per_agent_intention = {{"David", core::IntentionLabel::Declines}};
  r.per_agent_decision = {{"David", std::nullopt}};
  r.recall = {{"David", core::RecallVerdict::Omitted}};
  results.push_back(r);
  r.run_index = 1;
  r.errored = true;
  results.push_back(r);

  const auto path = tmp.path() / "results.jsonl";
  report::write_results_jsonl(path, results);
  EXPECT_EQ(report::read_results_jsonl(path), results);
}

TEST(JsonlIo, BadLinesAreReportedWithLineNumbers) {
  test_support::TempDir tmp("badlines");
  const auto path = tmp.path() / "transcripts.jsonl";
  std::ofstream(path) << R"({"run_index":0,"scenario_id":"x","termination":"concluded","turns":[]})"
                      << "\n"
                      << "{broken\n";
  try {
    (void)report::read_transcripts_jsonl(path);
    FAIL() << "expected ConfigError";
  } catch (const llm::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }

  EXPECT_THROW((void)report::read_transcripts_jsonl(tmp.path() / "absent.jsonl"),
               report::IoError);
  EXPECT_THROW((void)report::read_results_jsonl(tmp.path() / "absent.jsonl"),
               report::IoError);
}

TEST(OrderedWriter, OutOfOrderPutsLandInRunOrder) {
  test_support::TempDir tmp("writer");
  const auto tpath = tmp.path() / "t.jsonl";
  const auto rpath = tmp.path() / "r.jsonl";
  {
    report::detail::OrderedBatchWriter w(tpath, rpath);
    w.put(2, "t2", "r2");
    w.put(0, "t0", "r0");
    w.put(1, "t1", "r1");
  }
  EXPECT_EQ(test_support::read_file(tpath), "t0\nt1\nt2\n");
  EXPECT_EQ(test_support::read_file(rpath), "r0\nr1\nr2\n");
}

// --- text report and backend specs ---------------------------------------------------------------

TEST(TextReport, NamesTheHeadlineNumbers) {
  const auto m = sample_metrics();
  const auto text =
      report::render_text_report(manifest_for("rq2"), m, metrics::compare_to_benchmarks(m));
  EXPECT_NE(text.find("scenario rq2 (rq2), 4 runs, 0 errored"), std::string::npos);
  EXPECT_NE(text.find("trade_rate"), std::string::npos);
  EXPECT_NE(text.find("intention_to_execution_gap"), std::string::npos);
  EXPECT_NE(text.find("us_equity_otr_2024 (0.0461)"), std::string::npos);
  EXPECT_NE(text.find("reference_trade_rate (0.057)"), std::string::npos);

  const auto bare = report::render_text_report(manifest_for("rq1"), m, std::nullopt);
  EXPECT_EQ(bare.find("us_equity_otr_2024"), std::string::npos);
}

TEST(BackendSpec, ParsesAllThreeKinds) {
  auto [kind, path] = report::parse_backend_spec("live");
  EXPECT_EQ(kind, report::BackendKind::Live);
  EXPECT_TRUE(path.empty());

  std::tie(kind, path) = report::parse_backend_spec("scripted:data/scripts/x.json");
  EXPECT_EQ(kind, report::BackendKind::Scripted);
  EXPECT_EQ(path, "data/scripts/x.json");

  std::tie(kind, path) = report::parse_backend_spec("replay:out/exchanges.jsonl");
  EXPECT_EQ(kind, report::BackendKind::Replay);
  EXPECT_EQ(path, "out/exchanges.jsonl");

  EXPECT_THROW((void)report::parse_backend_spec("http://example.test"), llm::ConfigError);
  EXPECT_THROW((void)report::parse_backend_spec(""), llm::ConfigError);
}

TEST(BackendSpec, MakeBackendBuildsScriptedAndReplay) {
  test_support::TempDir tmp("make");
  const auto script = tmp.path() / "script.json";
  std::ofstream(script) << R"({"version":1,"default":"scripted hello"})";
  auto backend = report::make_backend(report::BackendKind::Scripted, script.string(), 7);
  llm::LlmRequest req;
  req.model_id = "m";
  req.messages = {{llm::Role::User, "ping"}};
  EXPECT_EQ(backend->complete(req), "scripted hello");

  EXPECT_THROW((void)report::make_backend(report::BackendKind::Scripted, "", std::nullopt),
               llm::ConfigError);
  EXPECT_THROW((void)report::make_backend(report::BackendKind::Replay, "", std::nullopt),
               llm::ConfigError);

  ::unsetenv("TRADERTALK_API_KEY");
  EXPECT_THROW((void)report::make_backend(report::BackendKind::Live, "", std::nullopt),
               llm::ConfigError);
}

TEST(BackendKindNames, RoundTrip) {
  using report::BackendKind;
  EXPECT_EQ(report::to_string(BackendKind::Live), "live");
  EXPECT_EQ(report::to_string(BackendKind::Scripted), "scripted");
  EXPECT_EQ(report::to_string(BackendKind::Replay), "replay");
  EXPECT_EQ(report::backend_kind_from_string("replay"), BackendKind::Replay);
  EXPECT_THROW((void)report::backend_kind_from_string("memory"), llm::ConfigError);
}
