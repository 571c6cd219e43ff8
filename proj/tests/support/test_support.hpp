#pragma once

// Shared helpers for the test suite and the acceptance harness.

#include <unistd.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tradertalk/tradertalk.hpp"

namespace test_support {

/// Registers scripted responses for one planned conversation by walking the
/// exact game-master schedule: each planned agent text is keyed to the
/// fingerprint of the prompt the orchestrator will render at that point.
/// Throws if the plan would conclude before all texts are consumed (a bug in
/// the planned script, not in the code under test).
inline void script_rq2_conversation(
    tradertalk::llm::ScriptedBackend& backend, const tradertalk::scenario::ScenarioConfig& config,
    const tradertalk::analysis::ClassifierRules& rules,
    const std::vector<std::string>& termination_phrases, const std::vector<std::string>& texts) {
  namespace tt = tradertalk;
  tt::core::Transcript transcript;
  transcript.scenario_id = config.scenario_id;
  transcript.turns.push_back({0, tt::sim::kGameMasterName, tt::sim::rq2_scene_note(config)});

  tt::sim::GameMasterState state;
  for (const auto& text : texts) {
    state = tt::sim::game_master_step(state, transcript, config, rules, termination_phrases);
    if (state.concluded)
      throw std::logic_error("planned conversation concluded early, before: " + text);
    const auto& speaker = tt::scenario::agent_by_name(config, state.next_speaker);
    const auto request = tt::scenario::make_request(speaker, config, transcript);
    backend.add_response(tt::llm::fingerprint(request.messages), text);
    transcript.turns.push_back(
        {static_cast<int>(transcript.turns.size()), speaker.name, text});
  }
}

/// Fresh scratch directory under the system temp dir; removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("tradertalk_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

[[nodiscard]] inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace test_support
