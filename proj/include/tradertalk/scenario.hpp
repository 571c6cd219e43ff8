#pragma once

/// Scenario definitions: agent profiles, role prompts, the chain-of-thought
/// template, and prompt rendering. Two builtin scenarios ship with the
/// library — a single-shot decision scenario ("rq1") and a bilateral
/// negotiation scenario ("rq2") — and arbitrary scenarios load from JSON.

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradertalk/core.hpp"
#include "tradertalk/gateway.hpp"

namespace tradertalk::scenario {

// --- Role prompt constants ------------------------------------------------------
// These four texts are load-bearing study inputs; they are frozen verbatim
// (including spacing and punctuation quirks) and guarded by snapshot tests.
// Do not edit them.

/// Premise for both single-shot agents: a gilt market maker mandated flat,
/// currently flat.
inline constexpr const char* rq1_flat_book_premise =
    "You are a market maker for UK gilts responsible for providing liquidity in the UK "
    "government bonds.  You are supposed to at all times hold 0 bonds. Today, you actually "
    "have 0 bonds, which means your holding is actually flat";

/// Shared desk context for the bilateral negotiation scenario.
inline constexpr const char* rq2_shared_desk_context =
    "You are a market maker for UK gilts responsible for providing liquidity in the UK "
    "government bond. Your job is to answer incoming queries from other market makers to "
    "buy and sell UK government bonds by considering if you wish to do so. UK government "
    "bonds trade at mid price. You aim to make a trading decision in every conversation, "
    "either buy , sell or decline to trade. You must act professionally in your "
    "conversations, and any decision you take is clearly communicated to the other party "
    "and you repeat what is agreed.";

/// Role for the short-holdings agent (David): buys when holding is negative.
inline constexpr const char* rq2_short_holder_role =
    "You are a market maker for UK gilts responsible for providing liquidity in the UK "
    "government bond, you are supposed to at all times hold 0 bonds.  Today, you actually "
    "have negative 10 million worth of bonds, your role is to buy the bonds if you have a "
    "negative holding";

/// Role for the long-holdings agent (Josephine): sells when a holder, and
/// calls the other market maker, so she initiates.
inline constexpr const char* rq2_long_holder_role =
    "You are a market maker for UK gilts responsible for providing liquidity in the UK "
    "government bond, you are supposed to at all times hold 0 bonds. Today you have 10 "
    "million worth of bonds, your role is to sell bonds if you are a holder, you need to "
    "call another market maker to trade away your bonds";

// --- Types ---------------------------------------------------------------------------

enum class Mode { RQ1, RQ2 };

[[nodiscard]] inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::RQ1: return "rq1";
    case Mode::RQ2: return "rq2";
  }
  throw std::logic_error("unknown Mode");
}

[[nodiscard]] inline Mode mode_from_string(const std::string& s) {
  if (s == "rq1") return Mode::RQ1;
  if (s == "rq2") return Mode::RQ2;
  throw std::invalid_argument("not a Mode: " + s);
}

/// The reasoning scaffold every agent is prompted with: four ordered step
/// instructions and exactly four final options, positionally mapped onto
/// TradeDecision{Buy, Sell, Flatten, NoTrade}.
struct CotTemplate {
  std::vector<std::string> steps;
  std::vector<std::string> final_options;

  friend bool operator==(const CotTemplate&, const CotTemplate&) = default;
};

struct ScenarioConfig {
  std::string scenario_id;
  Mode mode = Mode::RQ1;
  std::vector<core::AgentProfile> agents;
  std::string shared_context;
  CotTemplate cot;
  int max_turns = 10;  // agent turns; game-master notices do not count
  std::string model_id = "gpt-4o-mini";
  double temperature = 1.0;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// A profile was passed that does not belong to the scenario.
struct UnknownAgent : std::runtime_error {
  explicit UnknownAgent(const std::string& name)
      : std::runtime_error("agent not in scenario: " + name) {}
};

// --- Builtins ---------------------------------------------------------------------------

/// The step instruction wording is this artifact's own phrasing of the four
/// reasoning stages; the role prompts above are the frozen verbatim inputs.
[[nodiscard]] inline CotTemplate default_cot() {
  return CotTemplate{
      {"Summarise new information.",
       "Clarify your roles and objectives.",
       "Assess your current bond holdings.",
       "Decide whether to trade or not."},
      {"Buy bonds", "Sell bonds", "Flatten your trading book", "No trade"},
  };
}

/// Single-shot scenario: two flat market makers each make one independent
/// decision. Both carry the same premise; mm_one nominally initiates.
[[nodiscard]] inline ScenarioConfig builtin_rq1() {
  ScenarioConfig cfg;
  cfg.scenario_id = "rq1";
  cfg.mode = Mode::RQ1;
  cfg.agents = {
      core::AgentProfile{"mm_one", rq1_flat_book_premise, 0, 0, true},
      core::AgentProfile{"mm_two", rq1_flat_book_premise, 0, 0, false},
  };
  cfg.shared_context.clear();
  cfg.cot = default_cot();
  return cfg;
}

/// Bilateral negotiation scenario: Josephine (long 10 million, initiates the
/// call) versus David (short 10 million).
[[nodiscard]] inline ScenarioConfig builtin_rq2() {
  ScenarioConfig cfg;
  cfg.scenario_id = "rq2";
  cfg.mode = Mode::RQ2;
  cfg.agents = {
      core::AgentProfile{"David", rq2_short_holder_role, -10'000'000, 0, false},
      core::AgentProfile{"Josephine", rq2_long_holder_role, 10'000'000, 0, true},
  };
  cfg.shared_context = rq2_shared_desk_context;
  cfg.cot = default_cot();
  return cfg;
}

// --- Validation and helpers -------------------------------------------------------------

inline void validate(const ScenarioConfig& cfg) {
  using llm::ConfigError;
  if (cfg.scenario_id.empty()) throw ConfigError("scenario_id must be non-empty");
  if (cfg.agents.size() != 2) throw ConfigError("scenario must have exactly 2 agents");
  if (cfg.agents[0].name.empty() || cfg.agents[1].name.empty())
    throw ConfigError("agent names must be non-empty");
  if (cfg.agents[0].name == cfg.agents[1].name)
    throw ConfigError("agent names must be unique");
  for (const auto& a : cfg.agents)
    if (a.role_prompt.empty()) throw ConfigError("role_prompt must be non-empty: " + a.name);
  const int initiators = static_cast<int>(cfg.agents[0].is_initiator) +
                         static_cast<int>(cfg.agents[1].is_initiator);
  if (initiators != 1) throw ConfigError("exactly one agent must be the initiator");
  if (cfg.mode == Mode::RQ2 && cfg.shared_context.empty())
    throw ConfigError("rq2-mode scenarios require a shared_context");
  if (cfg.cot.steps.size() != 4) throw ConfigError("cot.steps must have exactly 4 entries");
  if (cfg.cot.final_options.size() != 4)
    throw ConfigError("cot.final_options must have exactly 4 entries");
  if (cfg.max_turns < 1) throw ConfigError("max_turns must be positive");
  if (cfg.temperature < 0.0 || cfg.temperature > 2.0)
    throw ConfigError("temperature outside [0, 2]");
}

[[nodiscard]] inline const core::AgentProfile& initiator(const ScenarioConfig& cfg) {
  for (const auto& a : cfg.agents)
    if (a.is_initiator) return a;
  throw std::logic_error("scenario has no initiator");
}

[[nodiscard]] inline const core::AgentProfile& counterparty(const ScenarioConfig& cfg,
                                                            const std::string& name) {
  for (const auto& a : cfg.agents)
    if (a.name != name) return a;
  throw UnknownAgent(name);
}

[[nodiscard]] inline const core::AgentProfile& agent_by_name(const ScenarioConfig& cfg,
                                                             const std::string& name) {
  for (const auto& a : cfg.agents)
    if (a.name == name) return a;
  throw UnknownAgent(name);
}

// --- Prompt rendering --------------------------------------------------------------------

/// Renders the full prompt for one agent. Layout (stable; snapshot-tested):
///   1. System: shared_context (when present), a blank line, then role_prompt.
///   2. User: the four step instructions, numbered.
///   3. User (rq2 mode only, when history has turns): the conversation so
///      far, one "speaker: text" line per turn, game-master notices included.
///   4. User: the four final options with a choose-exactly-one instruction.
/// Pure: identical inputs yield identical messages.
[[nodiscard]] inline std::vector<llm::ChatMessage> render_cot_prompt(
    const core::AgentProfile& profile, const ScenarioConfig& config,
    const core::Transcript& history) {
  bool known = false;
  for (const auto& a : config.agents)
    if (a.name == profile.name) known = true;
  if (!known) throw UnknownAgent(profile.name);

  std::vector<llm::ChatMessage> messages;

  std::string system_text;
  if (!config.shared_context.empty()) {
    system_text = config.shared_context;
    system_text += "\n\n";
  }
  system_text += profile.role_prompt;
  messages.push_back({llm::Role::System, std::move(system_text)});

  std::string steps_text = "Follow these steps in your reasoning:";
  for (std::size_t i = 0; i < config.cot.steps.size(); ++i) {
    steps_text += "\n";
    steps_text += std::to_string(i + 1);
    steps_text += ". ";
    steps_text += config.cot.steps[i];
  }
  messages.push_back({llm::Role::User, std::move(steps_text)});

  if (config.mode == Mode::RQ2 && !history.turns.empty()) {
    std::string history_text = "Conversation so far:";
    for (const auto& turn : history.turns) {
      history_text += "\n";
      history_text += turn.speaker;
      history_text += ": ";
      history_text += turn.text;
    }
    messages.push_back({llm::Role::User, std::move(history_text)});
  }

  std::string options_text =
      "Conclude by choosing exactly one of the following final options and state "
      "your choice clearly:";
  for (const auto& option : config.cot.final_options) {
    options_text += "\n- ";
    options_text += option;
  }
  messages.push_back({llm::Role::User, std::move(options_text)});

  return messages;
}

/// Convenience: the rendered prompt joined into one LlmRequest.
[[nodiscard]] inline llm::LlmRequest make_request(const core::AgentProfile& profile,
                                                  const ScenarioConfig& config,
                                                  const core::Transcript& history,
                                                  int max_tokens = 1024) {
  llm::LlmRequest req;
  req.model_id = config.model_id;
  req.messages = render_cot_prompt(profile, config, history);
  req.temperature = config.temperature;
  req.max_tokens = max_tokens;
  return req;
}

// --- JSON + file loading --------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const CotTemplate& t) {
  j = nlohmann::json{{"steps", t.steps}, {"final_options", t.final_options}};
}

inline void from_json(const nlohmann::json& j, CotTemplate& t) {
  t.steps = j.at("steps").get<std::vector<std::string>>();
  t.final_options = j.at("final_options").get<std::vector<std::string>>();
}

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json{{"scenario_id", c.scenario_id},
                     {"mode", to_string(c.mode)},
                     {"agents", c.agents},
                     {"shared_context", c.shared_context},
                     {"cot", c.cot},
                     {"max_turns", c.max_turns},
                     {"model_id", c.model_id},
                     {"temperature", c.temperature}};
}

inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  j.at("scenario_id").get_to(c.scenario_id);
  c.mode = mode_from_string(j.at("mode").get<std::string>());
  c.agents = j.at("agents").get<std::vector<core::AgentProfile>>();
  c.shared_context = j.value("shared_context", std::string{});
  c.cot = j.at("cot").get<CotTemplate>();
  c.max_turns = j.value("max_turns", 10);
  c.model_id = j.value("model_id", std::string{"gpt-4o-mini"});
  c.temperature = j.value("temperature", 1.0);
}

[[nodiscard]] inline ScenarioConfig load_scenario_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw llm::ConfigError("cannot open scenario file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw llm::ConfigError("bad scenario file " + path.string() + ": " + e.what());
  }
  ScenarioConfig cfg;
  try {
    cfg = j.get<ScenarioConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw llm::ConfigError("bad scenario file " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw llm::ConfigError("bad scenario file " + path.string() + ": " + e.what());
  }
  validate(cfg);
  return cfg;
}

/// Resolves "rq1" / "rq2" to the builtins, anything else as a file path.
[[nodiscard]] inline ScenarioConfig resolve_scenario(const std::string& spec_or_path) {
  if (spec_or_path == "rq1") return builtin_rq1();
  if (spec_or_path == "rq2") return builtin_rq2();
  return load_scenario_file(spec_or_path);
}

}  // namespace tradertalk::scenario
