// Command-line front end: run simulation batches, re-analyse stored
// transcripts with (possibly new) classifier rules, and print reports.
//
// Exit codes: 0 success, 2 batch finished but some runs errored,
// 1 configuration/IO failure.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tradertalk/tradertalk.hpp"

namespace tt = tradertalk;

namespace {

tt::analysis::ClassifierRules load_rules(const std::string& rules_path) {
  if (rules_path.empty()) return tt::analysis::ClassifierRules::defaults();
  return tt::analysis::ClassifierRules::from_file(rules_path);
}

int cmd_run(const std::string& scenario_spec, int n, const std::string& backend_spec,
            int concurrency, std::optional<std::uint64_t> seed, const std::string& out_dir,
            const std::string& rules_path, bool judge_termination, bool judge_classifier) {
  const auto config = tt::scenario::resolve_scenario(scenario_spec);
  const auto [kind, backend_path] = tt::report::parse_backend_spec(backend_spec);
  const auto backend = tt::report::make_backend(kind, backend_path, seed);
  const auto rules = load_rules(rules_path);

  tt::sim::RunOptions options;
  options.llm_judge_termination = judge_termination;
  options.llm_judge_classifier = judge_classifier;

  const auto batch =
      tt::report::run_batch(*backend, kind, config, n, concurrency, out_dir, rules, options, seed);

  std::optional<tt::metrics::BenchmarkReport> benchmarks;
  if (config.mode == tt::scenario::Mode::RQ2)
    benchmarks = tt::metrics::compare_to_benchmarks(batch.metrics);
  std::cout << tt::report::render_text_report(batch.manifest, batch.metrics, benchmarks);
  std::cout << "wrote " << out_dir << "\n";
  return batch.exit_code;
}

int cmd_analyze(const std::string& transcripts_path, const std::string& rules_path,
                const std::string& scenario_spec, const std::string& out_dir) {
  const auto rules = load_rules(rules_path);
  const auto stored = tt::report::read_transcripts_jsonl(transcripts_path);
  if (stored.empty()) throw tt::llm::ConfigError("no transcripts in " + transcripts_path);

  // Agent profiles come from --scenario when given, otherwise from the
  // scenario_id recorded in the transcripts (rq1/rq2 resolve to built-ins).
  const std::string spec =
      scenario_spec.empty() ? stored.front().transcript.scenario_id : scenario_spec;
  const auto config = tt::scenario::resolve_scenario(spec);

  std::vector<tt::core::SimulationResult> results;
  results.reserve(stored.size());
  for (const auto& st : stored)
    results.push_back(tt::analysis::analyse(st.transcript, config.agents, rules, st.run_index));

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw tt::report::IoError("cannot create output directory " + out_dir);
  tt::report::write_results_jsonl(std::filesystem::path(out_dir) / "results.jsonl", results);

  tt::report::RunManifest manifest;  // minimal envelope for the report files
  manifest.scenario_id = config.scenario_id;
  manifest.mode = tt::scenario::to_string(config.mode);
  manifest.n_requested = static_cast<int>(results.size());
  const auto m = tt::metrics::aggregate(results);
  manifest.n_errored = m.n_errored;
  manifest.n_completed = manifest.n_requested - manifest.n_errored;
  (void)tt::report::emit_report(manifest, m, "", out_dir);

  std::optional<tt::metrics::BenchmarkReport> benchmarks;
  if (config.mode == tt::scenario::Mode::RQ2) benchmarks = tt::metrics::compare_to_benchmarks(m);
  std::cout << tt::report::render_text_report(manifest, m, benchmarks);
  std::cout << "wrote " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const std::filesystem::path dir(in_dir);
  const auto results = tt::report::read_results_jsonl(dir / "results.jsonl");
  if (results.empty()) throw tt::llm::ConfigError("no results in " + (dir / "results.jsonl").string());
  const auto m = tt::metrics::aggregate(results);

  tt::report::RunManifest manifest;
  manifest.scenario_id = results.front().scenario_id;
  manifest.mode = manifest.scenario_id == "rq1" ? "rq1" : "rq2";
  std::ifstream manifest_in(dir / "manifest.json");
  if (manifest_in) {
    nlohmann::json j;
    manifest_in >> j;
    manifest = j.get<tt::report::RunManifest>();
  }

  std::optional<tt::metrics::BenchmarkReport> benchmarks;
  if (manifest.mode == "rq2") benchmarks = tt::metrics::compare_to_benchmarks(m);
  std::cout << tt::report::render_text_report(manifest, m, benchmarks);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bilateral bond-trading simulator driven by a chat-completion backend"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a batch of simulations");
  std::string scenario_spec;
  int n = 1;
  std::string backend_spec;
  int concurrency = 0;  // < 1 → backend-kind default (live 4, otherwise 16)
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string rules_path;
  bool judge_termination = false;
  bool judge_classifier = false;
  run->add_option("--scenario", scenario_spec, "rq1, rq2, or a scenario JSON file")->required();
  run->add_option("--n", n, "number of simulations")->check(CLI::PositiveNumber);
  run->add_option("--backend", backend_spec, "live | scripted:<script-file> | replay:<log>")
      ->required();
  run->add_option("--concurrency", concurrency, "max simulations in flight (default 4 live / 16)");
  run->add_option("--seed", seed, "seed for harness randomness (retry jitter)");
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--rules", rules_path, "classifier rules JSON (default: built-in rules)");
  run->add_flag("--judge-termination", judge_termination,
                "ask the model whether the conversation has concluded (one extra call per turn)");
  run->add_flag("--judge-classifier", judge_classifier,
                "classify transcripts with a model verdict instead of the rule-based classifier");

  auto* analyze = app.add_subcommand("analyze", "Re-classify stored transcripts");
  std::string transcripts_path;
  std::string analyze_rules;
  std::string analyze_scenario;
  std::string analyze_out;
  analyze->add_option("--transcripts", transcripts_path, "transcripts.jsonl from a previous run")
      ->required();
  analyze->add_option("--rules", analyze_rules, "classifier rules JSON (default: built-in rules)");
  analyze->add_option("--scenario", analyze_scenario,
                      "scenario providing agent profiles (default: from scenario_id)");
  analyze->add_option("--out", analyze_out, "output directory")->required();

  auto* report = app.add_subcommand("report", "Print the report for a finished batch");
  std::string in_dir;
  report->add_option("--in", in_dir, "batch output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(scenario_spec, n, backend_spec, concurrency, seed, out_dir, rules_path,
                     judge_termination, judge_classifier);
    if (analyze->parsed())
      return cmd_analyze(transcripts_path, analyze_rules, analyze_scenario, analyze_out);
    if (report->parsed()) return cmd_report(in_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
