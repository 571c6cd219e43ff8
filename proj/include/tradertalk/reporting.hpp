#pragma once

/// Batch execution and persistence. Runs n simulations through a bounded
/// worker pool, persists transcripts/results incrementally in run_index
/// order (a killed batch loses at most the in-flight runs), aggregates
/// metrics, and emits the report files:
///
///   out_dir/manifest.json     run envelope (timestamps, backend, seed)
///   out_dir/transcripts.jsonl one conversation per line, ordered by run_index
///   out_dir/results.jsonl     one classification result per line, same order
///   out_dir/metrics.json      aggregated rates + intervals (+ benchmarks)
///   out_dir/metrics.csv       flat metric,value,low,high rows
///   out_dir/exchanges.jsonl   every model call, replayable via the gateway
///
/// transcripts.jsonl, results.jsonl, and metrics.json are byte-stable for
/// identical inputs; manifest.json and exchanges.jsonl carry wall-clock data.

#include <atomic>
#include <charconv>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tradertalk/analysis.hpp"
#include "tradertalk/core.hpp"
#include "tradertalk/gateway.hpp"
#include "tradertalk/http_backend.hpp"
#include "tradertalk/metrics.hpp"
#include "tradertalk/orchestrator.hpp"
#include "tradertalk/scenario.hpp"
#include "tradertalk/version.hpp"

namespace tradertalk::report {

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

enum class BackendKind { Live, Scripted, Replay };

[[nodiscard]] inline std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Live: return "live";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Replay: return "replay";
  }
  return "scripted";
}

[[nodiscard]] inline BackendKind backend_kind_from_string(const std::string& s) {
  if (s == "live") return BackendKind::Live;
  if (s == "scripted") return BackendKind::Scripted;
  if (s == "replay") return BackendKind::Replay;
  throw llm::ConfigError("unknown backend kind: " + s);
}

[[nodiscard]] inline std::string timestamp_utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
  return buf;
}

/// Reproducibility envelope for one batch. Invariant:
/// n_completed + n_errored = n_requested.
struct RunManifest {
  std::string scenario_id;
  std::string mode;
  int n_requested = 0;
  int n_completed = 0;
  int n_errored = 0;
  BackendKind backend_kind = BackendKind::Scripted;
  std::string model_id;
  double temperature = 1.0;
  std::optional<std::uint64_t> seed;
  std::string started_at;
  std::string finished_at;
  std::string tool_version;

  bool operator==(const RunManifest&) const = default;
};

inline void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"scenario_id", m.scenario_id},
                     {"mode", m.mode},
                     {"n_requested", m.n_requested},
                     {"n_completed", m.n_completed},
                     {"n_errored", m.n_errored},
                     {"backend_kind", to_string(m.backend_kind)},
                     {"model_id", m.model_id},
                     {"temperature", m.temperature},
                     {"seed", nullptr},
                     {"started_at", m.started_at},
                     {"finished_at", m.finished_at},
                     {"tool_version", m.tool_version}};
  if (m.seed) j["seed"] = *m.seed;
}

inline void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("scenario_id").get_to(m.scenario_id);
  j.at("mode").get_to(m.mode);
  j.at("n_requested").get_to(m.n_requested);
  j.at("n_completed").get_to(m.n_completed);
  j.at("n_errored").get_to(m.n_errored);
  m.backend_kind = backend_kind_from_string(j.at("backend_kind").get<std::string>());
  j.at("model_id").get_to(m.model_id);
  j.at("temperature").get_to(m.temperature);
  m.seed = std::nullopt;
  if (j.contains("seed") && !j.at("seed").is_null()) m.seed = j.at("seed").get<std::uint64_t>();
  j.at("started_at").get_to(m.started_at);
  j.at("finished_at").get_to(m.finished_at);
  j.at("tool_version").get_to(m.tool_version);
}

namespace detail {

/// Shortest round-trip decimal form, matching the JSON serializer's style.
[[nodiscard]] inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Serializes JSONL output so lines land in run_index order no matter which
/// worker finishes first: completed lines are parked until every earlier run
/// has been flushed.
class OrderedBatchWriter {
 public:
  OrderedBatchWriter(const std::filesystem::path& transcripts_path,
                     const std::filesystem::path& results_path)
      : transcripts_(transcripts_path, std::ios::trunc), results_(results_path, std::ios::trunc) {
    if (!transcripts_) throw IoError("cannot write " + transcripts_path.string());
    if (!results_) throw IoError("cannot write " + results_path.string());
    transcripts_path_ = transcripts_path;
    results_path_ = results_path;
  }

  void put(int run_index, std::string transcript_line, std::string result_line) {
    std::lock_guard lock(mutex_);
    pending_[run_index] = {std::move(transcript_line), std::move(result_line)};
    for (auto it = pending_.find(next_); it != pending_.end(); it = pending_.find(next_)) {
      transcripts_ << it->second.first << '\n' << std::flush;
      results_ << it->second.second << '\n' << std::flush;
      pending_.erase(it);
      ++next_;
    }
    if (!transcripts_) throw IoError("write failed: " + transcripts_path_.string());
    if (!results_) throw IoError("write failed: " + results_path_.string());
  }

 private:
  std::ofstream transcripts_;
  std::ofstream results_;
  std::filesystem::path transcripts_path_;
  std::filesystem::path results_path_;
  std::mutex mutex_;
  std::map<int, std::pair<std::string, std::string>> pending_;
  int next_ = 0;
};

[[nodiscard]] inline nlohmann::json transcript_line(int run_index, const core::Transcript& t) {
  return nlohmann::json{{"run_index", run_index},
                        {"scenario_id", t.scenario_id},
                        {"termination", core::to_string(t.termination)},
                        {"turns", t.turns}};
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace detail

/// Writes metrics.json and/or metrics.csv ("" or "both" → both formats).
/// Benchmark comparison is included for conversation-mode batches, where the
/// trade rate is the headline number. Returns the paths written.
[[nodiscard]] inline std::vector<std::filesystem::path> emit_report(
    const RunManifest& manifest, const metrics::BatchMetrics& m, const std::string& format,
    const std::filesystem::path& out_dir) {
  const bool want_json = format.empty() || format == "both" || format == "json";
  const bool want_csv = format.empty() || format == "both" || format == "csv";
  if (!want_json && !want_csv) throw llm::ConfigError("unknown report format: " + format);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());

  std::vector<std::filesystem::path> written;
  if (want_json) {
    nlohmann::json j{{"scenario_id", manifest.scenario_id},
                     {"mode", manifest.mode},
                     {"note", "rates exclude errored runs from denominators"},
                     {"metrics", m},
                     {"benchmarks", nullptr}};
    if (manifest.mode == "rq2") j["benchmarks"] = metrics::compare_to_benchmarks(m);
    const auto path = out_dir / "metrics.json";
    detail::write_text_file(path, j.dump(2) + "\n");
    written.push_back(path);
  }
  if (want_csv) {
    std::string csv = "metric,value,low,high\n";
    const auto row = [&csv, &m](const std::string& name, double value) {
      csv += name + "," + detail::format_double(value);
      if (auto it = m.intervals.find(name); it != m.intervals.end())
        csv += "," + detail::format_double(it->second.low) + "," +
               detail::format_double(it->second.high);
      else
        csv += ",,";
      csv += "\n";
    };
    csv += "n_runs," + std::to_string(m.n_runs) + ",,\n";
    csv += "n_errored," + std::to_string(m.n_errored) + ",,\n";
    row("both_intend_rate", m.both_intend_rate);
    row("any_intend_rate", m.any_intend_rate);
    row("no_trade_rate", m.no_trade_rate);
    row("trade_rate", m.trade_rate);
    row("intention_to_execution_gap", m.intention_to_execution_gap);
    row("recall_both_correct_rate", m.recall_both_correct_rate);
    row("recall_omitted_rate", m.recall_omitted_rate);
    for (const auto& [decision, rate] : m.decision_distribution)
      row("decision_rate." + core::to_string(decision), rate);
    for (const auto& [agent, rate] : m.per_agent_intention_rate) row("intend_rate." + agent, rate);
    for (const auto& [agent, rate] : m.per_agent_decline_rate) row("decline_rate." + agent, rate);
    for (const auto& [agent, rate] : m.per_agent_unclear_rate) row("unclear_rate." + agent, rate);
    const auto path = out_dir / "metrics.csv";
    detail::write_text_file(path, csv);
    written.push_back(path);
  }
  return written;
}

struct BatchResult {
  RunManifest manifest;
  metrics::BatchMetrics metrics;
  std::vector<core::SimulationResult> results;
  int exit_code = 0;  // 0 when no run errored, 2 otherwise
};

/// Runs n simulations with at most `concurrency` in flight (values < 1 pick
/// the default: 4 live, 16 otherwise). Each worker owns its simulation
/// exclusively; persistence goes through the single ordered writer. The seed
/// drives only harness-side randomness (retry jitter) — remote sampling is
/// not controllable beyond temperature. A persistence failure aborts the
/// batch with IoError.
[[nodiscard]] inline BatchResult run_batch(llm::LlmBackend& backend, BackendKind kind,
                                           const scenario::ScenarioConfig& config, int n,
                                           int concurrency,
                                           const std::filesystem::path& out_dir,
                                           const analysis::ClassifierRules& rules,
                                           const sim::RunOptions& options = {},
                                           std::optional<std::uint64_t> seed = std::nullopt) {
  scenario::validate(config);
  if (n < 1) throw llm::ConfigError("run_batch: n must be >= 1");
  if (concurrency < 1) concurrency = (kind == BackendKind::Live) ? 4 : 16;
  concurrency = std::min(concurrency, n);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  BatchResult batch;
  auto& manifest = batch.manifest;
  manifest.scenario_id = config.scenario_id;
  manifest.mode = scenario::to_string(config.mode);
  manifest.n_requested = n;
  manifest.backend_kind = kind;
  manifest.model_id = config.model_id;
  manifest.temperature = config.temperature;
  manifest.seed = seed;
  manifest.started_at = timestamp_utc_now();
  manifest.tool_version = version_string;

  detail::OrderedBatchWriter writer(out_dir / "transcripts.jsonl", out_dir / "results.jsonl");
  batch.results.assign(static_cast<std::size_t>(n), core::SimulationResult{});

  std::atomic<int> next_run{0};
  std::atomic<bool> abort{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  const auto worker = [&]() {
    while (!abort.load(std::memory_order_relaxed)) {
      const int i = next_run.fetch_add(1);
      if (i >= n) break;
      try {
        core::Transcript transcript;
        if (config.mode == scenario::Mode::RQ1) {
          transcript = sim::run_rq1(backend, config, i).transcript;
        } else {
          transcript = sim::run_rq2(backend, config, i, rules, options);
        }

        core::SimulationResult result;
        if (options.llm_judge_classifier &&
            transcript.termination != core::Termination::BackendError) {
          try {
            result = analysis::classify_with_llm_judge(backend, transcript, config.agents,
                                                       config.model_id, i,
                                                       llm::CallContext{i, 1'000'000});
          } catch (const llm::GatewayError&) {
            // judge unavailable or unparseable → deterministic classifier
            result = analysis::analyse(transcript, config.agents, rules, i);
          }
        } else {
          result = analysis::analyse(transcript, config.agents, rules, i);
        }

        writer.put(i, detail::transcript_line(i, transcript).dump(),
                   nlohmann::json(result).dump());
        batch.results[static_cast<std::size_t>(i)] = std::move(result);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort.store(true);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(concurrency));
  for (int t = 0; t < concurrency; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  for (const auto& r : batch.results)
    if (r.errored) manifest.n_errored += 1;
  manifest.n_completed = n - manifest.n_errored;
  manifest.finished_at = timestamp_utc_now();

  batch.metrics = metrics::aggregate(batch.results);

  detail::write_text_file(out_dir / "manifest.json", nlohmann::json(manifest).dump(2) + "\n");
  (void)emit_report(manifest, batch.metrics, "", out_dir);

  auto exchanges = backend.recorder().snapshot();
  std::stable_sort(exchanges.begin(), exchanges.end(),
                   [](const llm::RecordedExchange& a, const llm::RecordedExchange& b) {
                     return a.run_index != b.run_index ? a.run_index < b.run_index
                                                       : a.call_index < b.call_index;
                   });
  std::string exchange_lines;
  for (const auto& e : exchanges) exchange_lines += nlohmann::json(e).dump() + "\n";
  detail::write_text_file(out_dir / "exchanges.jsonl", exchange_lines);

  batch.exit_code = manifest.n_errored == 0 ? 0 : 2;
  return batch;
}

// --- Re-analysis of stored transcripts -------------------------------------------------------

/// One stored conversation, as read back from transcripts.jsonl.
struct StoredTranscript {
  int run_index = 0;
  core::Transcript transcript;
};

[[nodiscard]] inline std::vector<StoredTranscript> read_transcripts_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<StoredTranscript> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      StoredTranscript st;
      st.run_index = j.at("run_index").get<int>();
      st.transcript.scenario_id = j.at("scenario_id").get<std::string>();
      st.transcript.termination =
          core::termination_from_string(j.at("termination").get<std::string>());
      st.transcript.turns = j.at("turns").get<std::vector<core::Turn>>();
      out.push_back(std::move(st));
    } catch (const nlohmann::json::exception& e) {
      throw llm::ConfigError("bad transcript line " + std::to_string(line_no) + " in " +
                             path.string() + ": " + e.what());
    }
  }
  return out;
}

[[nodiscard]] inline std::vector<core::SimulationResult> read_results_jsonl(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<core::SimulationResult> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<core::SimulationResult>());
    } catch (const nlohmann::json::exception& e) {
      throw llm::ConfigError("bad result line " + std::to_string(line_no) + " in " +
                             path.string() + ": " + e.what());
    }
  }
  return out;
}

inline void write_results_jsonl(const std::filesystem::path& path,
                                const std::vector<core::SimulationResult>& results) {
  std::string lines;
  for (const auto& r : results) lines += nlohmann::json(r).dump() + "\n";
  detail::write_text_file(path, lines);
}

/// Human-readable batch summary for the terminal.
[[nodiscard]] inline std::string render_text_report(
    const RunManifest& manifest, const metrics::BatchMetrics& m,
    const std::optional<metrics::BenchmarkReport>& benchmarks) {
  std::string s;
  const auto line = [&s, &m](const std::string& name, double value) {
    s += "  " + name;
    if (name.size() < 34) s += std::string(34 - name.size(), ' ');
    s += detail::format_double(value);
    if (auto it = m.intervals.find(name); it != m.intervals.end())
      s += "  [" + detail::format_double(it->second.low) + ", " +
           detail::format_double(it->second.high) + "]";
    s += "\n";
  };
  s += "scenario " + manifest.scenario_id + " (" + manifest.mode + "), " +
       std::to_string(m.n_runs) + " runs, " + std::to_string(m.n_errored) +
       " errored (rates exclude errored runs; intervals are 95% Wilson)\n";
  line("both_intend_rate", m.both_intend_rate);
  line("any_intend_rate", m.any_intend_rate);
  line("no_trade_rate", m.no_trade_rate);
  line("trade_rate", m.trade_rate);
  line("intention_to_execution_gap", m.intention_to_execution_gap);
  line("recall_both_correct_rate", m.recall_both_correct_rate);
  line("recall_omitted_rate", m.recall_omitted_rate);
  for (const auto& [decision, rate] : m.decision_distribution)
    line("decision_rate." + core::to_string(decision), rate);
  for (const auto& [agent, rate] : m.per_agent_intention_rate) line("intend_rate." + agent, rate);
  for (const auto& [agent, rate] : m.per_agent_decline_rate) line("decline_rate." + agent, rate);
  for (const auto& [agent, rate] : m.per_agent_unclear_rate) line("unclear_rate." + agent, rate);
  if (benchmarks) {
    s += "  trade_rate vs us_equity_otr_2024 (" + detail::format_double(benchmarks->us_equity_otr_2024) +
         "): diff " + detail::format_double(benchmarks->diff_vs_us_equity) + "\n";
    s += "  trade_rate vs reference_trade_rate (" +
         detail::format_double(benchmarks->reference_trade_rate) + "): diff " +
         detail::format_double(benchmarks->diff_vs_reference) + "\n";
  }
  return s;
}

// --- Backend construction from CLI specs ------------------------------------------------------

/// Parses "live", "scripted:<file>", or "replay:<file>".
[[nodiscard]] inline std::pair<BackendKind, std::string> parse_backend_spec(
    const std::string& spec) {
  if (spec == "live") return {BackendKind::Live, ""};
  if (spec.rfind("scripted:", 0) == 0) return {BackendKind::Scripted, spec.substr(9)};
  if (spec.rfind("replay:", 0) == 0) return {BackendKind::Replay, spec.substr(7)};
  throw llm::ConfigError("backend must be live, scripted:<script-file>, or replay:<log> (got '" +
                         spec + "')");
}

[[nodiscard]] inline std::unique_ptr<llm::LlmBackend> make_backend(
    BackendKind kind, const std::string& path, std::optional<std::uint64_t> seed) {
  switch (kind) {
    case BackendKind::Live:
      return std::make_unique<llm::HttpBackend>(llm::http_config_from_env(), llm::RetryPolicy{},
                                                seed.value_or(0));
    case BackendKind::Scripted: {
      if (path.empty()) throw llm::ConfigError("scripted backend needs a script file");
      return llm::ScriptedBackend::from_file(path);
    }
    case BackendKind::Replay: {
      if (path.empty()) throw llm::ConfigError("replay backend needs an exchange log");
      return std::make_unique<llm::ReplayBackend>(path);
    }
  }
  throw llm::ConfigError("unreachable backend kind");
}

}  // namespace tradertalk::report
