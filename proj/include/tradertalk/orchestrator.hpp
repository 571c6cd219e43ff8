#pragma once

/// Single-run simulation drivers. Two modes:
///  - run_rq1: each agent independently receives one chain-of-thought prompt
///    and produces one completion; no conversation.
///  - run_rq2: a game-master loop alternates the two agents in a dialogue,
///    re-rendering the prompt with full history each turn, until a
///    termination rule fires or the turn cap is reached.
/// Each simulation is strictly sequential internally (turn N+1 depends on
/// turn N); batching across runs happens a layer above.

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tradertalk/analysis.hpp"
#include "tradertalk/core.hpp"
#include "tradertalk/gateway.hpp"
#include "tradertalk/scenario.hpp"

namespace tradertalk::sim {

inline constexpr const char* kGameMasterName = "game_master";

/// Scheduler state carried between game-master steps.
/// Invariants: concluded ⇒ conclusion_reason present; turn_count ≤ max_turns.
struct GameMasterState {
  std::string next_speaker;
  int turn_count = 0;
  bool concluded = false;
  std::optional<std::string> conclusion_reason;

  bool operator==(const GameMasterState&) const = default;
};

/// Phrases whose case-insensitive presence in the latest agent turn marks the
/// conversation as concluded (final agreement or final refusal). A documented
/// stand-in for a human moderator's judgement; configurable per run.
[[nodiscard]] inline std::vector<std::string> default_termination_phrases() {
  return {
      "agreed",        "confirm",         "confirmed",        "decline to trade",
      "no trade today", "nothing agreed", "deal done",        "done at mid",
      "no business today", "i'll pass",   "pass today",       "not trading today",
      "will not be trading",
  };
}

/// Per-run behaviour switches.
struct RunOptions {
  std::vector<std::string> termination_phrases = default_termination_phrases();
  /// Ask the backend "has this negotiation concluded?" after each turn when
  /// the phrase detector stayed silent. Costs one completion per turn.
  bool llm_judge_termination = false;
  /// Classify finished transcripts with one structured-verdict completion
  /// instead of the rule-based classifier (recall stays rule-based).
  bool llm_judge_classifier = false;
};

namespace detail {

[[nodiscard]] inline std::string lowercase(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

[[nodiscard]] inline bool phrase_detector_fires(const std::string& turn_text,
                                                const std::vector<std::string>& phrases) {
  const std::string haystack = lowercase(turn_text);
  for (const auto& phrase : phrases)
    if (!phrase.empty() && haystack.find(lowercase(phrase)) != std::string::npos) return true;
  return false;
}

[[nodiscard]] inline const core::Turn* latest_agent_turn(const core::Transcript& transcript) {
  for (auto it = transcript.turns.rbegin(); it != transcript.turns.rend(); ++it)
    if (it->speaker != kGameMasterName) return &*it;
  return nullptr;
}

/// True when both agents have issued decision-bearing turns and the latest
/// decisions pair up consistently: opposite sides of one trade, or matching
/// stand-downs.
[[nodiscard]] inline bool decisions_aligned(const core::Transcript& transcript,
                                            const scenario::ScenarioConfig& config,
                                            const analysis::ClassifierRules& rules) {
  std::map<std::string, std::optional<core::TradeDecision>> latest;
  for (const auto& agent : config.agents) latest[agent.name] = std::nullopt;
  for (const auto& turn : transcript.turns) {
    auto it = latest.find(turn.speaker);
    if (it == latest.end()) continue;
    if (auto d = analysis::extract_decision(turn.text, rules)) it->second = d;
  }
  const auto a = latest[config.agents[0].name];
  const auto b = latest[config.agents[1].name];
  if (!a || !b) return false;
  using core::TradeDecision;
  return (*a == TradeDecision::Buy && *b == TradeDecision::Sell) ||
         (*a == TradeDecision::Sell && *b == TradeDecision::Buy) ||
         (*a == TradeDecision::NoTrade && *b == TradeDecision::NoTrade) ||
         (*a == TradeDecision::Flatten && *b == TradeDecision::Flatten);
}

}  // namespace detail

/// One scheduling decision. Pure: no IO, no randomness. Concludes when the
/// phrase detector fires on the latest agent turn or both agents' latest
/// decisions align ("agreement detected" / "decisions aligned"), or when the
/// turn cap is hit ("turn cap"); otherwise appoints the next speaker —
/// initiator first, then strict alternation — and increments turn_count.
[[nodiscard]] inline GameMasterState game_master_step(
    const GameMasterState& state, const core::Transcript& transcript,
    const scenario::ScenarioConfig& config, const analysis::ClassifierRules& rules,
    const std::vector<std::string>& termination_phrases = default_termination_phrases()) {
  GameMasterState next = state;
  if (next.concluded) return next;

  if (const auto* latest = detail::latest_agent_turn(transcript)) {
    if (detail::phrase_detector_fires(latest->text, termination_phrases)) {
      next.concluded = true;
      next.conclusion_reason = "agreement detected";
      return next;
    }
    if (detail::decisions_aligned(transcript, config, rules)) {
      next.concluded = true;
      next.conclusion_reason = "decisions aligned";
      return next;
    }
  }
  if (next.turn_count >= config.max_turns) {
    next.concluded = true;
    next.conclusion_reason = "turn cap";
    return next;
  }

  if (const auto* latest = detail::latest_agent_turn(transcript)) {
    next.next_speaker = scenario::counterparty(config, latest->speaker).name;
  } else {
    next.next_speaker = scenario::initiator(config).name;
  }
  next.turn_count += 1;
  return next;
}

/// Scene note opening an independent-decision transcript.
[[nodiscard]] inline std::string rq1_scene_note(const scenario::ScenarioConfig& config) {
  const auto& first = scenario::initiator(config);
  const auto& second = scenario::counterparty(config, first.name);
  return first.name + " and " + second.name + " each state their trading decision for the day.";
}

/// Scene note opening a conversation transcript.
[[nodiscard]] inline std::string rq2_scene_note(const scenario::ScenarioConfig& config) {
  const auto& first = scenario::initiator(config);
  const auto& second = scenario::counterparty(config, first.name);
  return first.name + " calls " + second.name +
         " on the desk line. They speak in turn until they conclude.";
}

/// Independent-decision mode result: the transcript plus each agent's raw
/// completion text, preserved verbatim for separate analysis.
struct Rq1Outcome {
  core::Transcript transcript;
  std::map<std::string, std::string> final_texts;
};

/// One rendered prompt and one completion per agent, initiator first. The
/// transcript opens with a game-master scene note; a gateway failure stops
/// the run with termination BackendError, keeping any completed turns.
[[nodiscard]] inline Rq1Outcome run_rq1(llm::LlmBackend& backend,
                                        const scenario::ScenarioConfig& config, int run_index) {
  scenario::validate(config);
  if (config.mode != scenario::Mode::RQ1)
    throw llm::ConfigError("run_rq1 requires an rq1-mode scenario");

  Rq1Outcome outcome;
  auto& transcript = outcome.transcript;
  transcript.scenario_id = config.scenario_id;

  const auto& first = scenario::initiator(config);
  const auto& second = scenario::counterparty(config, first.name);
  transcript.turns.push_back({0, kGameMasterName, rq1_scene_note(config)});

  transcript.termination = core::Termination::Concluded;
  int call_index = 0;
  for (const auto* agent : {&first, &second}) {
    try {
      const auto request = scenario::make_request(*agent, config, {});
      const std::string text =
          backend.complete(request, llm::CallContext{run_index, call_index++});
      transcript.turns.push_back(
          {static_cast<int>(transcript.turns.size()), agent->name, text});
      outcome.final_texts[agent->name] = text;
    } catch (const llm::GatewayError&) {
      transcript.termination = core::Termination::BackendError;
      break;
    }
  }
  return outcome;
}

/// Game-master-mediated conversation: schedule a speaker, render the prompt
/// with full history, complete, append, repeat. Stops on a detector firing,
/// decision alignment, the turn cap, or a gateway failure (partial transcript
/// kept, termination BackendError). Agent turns strictly alternate and never
/// exceed config.max_turns.
[[nodiscard]] inline core::Transcript run_rq2(llm::LlmBackend& backend,
                                              const scenario::ScenarioConfig& config,
                                              int run_index,
                                              const analysis::ClassifierRules& rules,
                                              const RunOptions& options = {}) {
  scenario::validate(config);
  if (config.mode != scenario::Mode::RQ2)
    throw llm::ConfigError("run_rq2 requires an rq2-mode scenario");

  core::Transcript transcript;
  transcript.scenario_id = config.scenario_id;
  transcript.turns.push_back({0, kGameMasterName, rq2_scene_note(config)});

  GameMasterState state;
  int call_index = 0;
  while (true) {
    state = game_master_step(state, transcript, config, rules, options.termination_phrases);

    if (!state.concluded && options.llm_judge_termination &&
        detail::latest_agent_turn(transcript) != nullptr) {
      std::string convo;
      for (const auto& turn : transcript.turns)
        convo += turn.speaker + ": " + turn.text + "\n";
      llm::LlmRequest judge_request;
      judge_request.model_id = config.model_id;
      judge_request.temperature = 0.0;
      judge_request.max_tokens = 8;
      judge_request.messages = {
          {llm::Role::System, "You supervise a trading conversation."},
          {llm::Role::User,
           convo + "\nHas this negotiation concluded? Answer yes or no."}};
      try {
        const std::string verdict = detail::lowercase(
            backend.complete(judge_request, llm::CallContext{run_index, call_index++}));
        if (verdict.find("yes") != std::string::npos) {
          state.concluded = true;
          state.conclusion_reason = "agreement detected";
        }
      } catch (const llm::GatewayError&) {
        transcript.termination = core::Termination::BackendError;
        return transcript;
      }
    }

    if (state.concluded) {
      transcript.termination = (state.conclusion_reason == "turn cap")
                                   ? core::Termination::TurnCapReached
                                   : core::Termination::Concluded;
      return transcript;
    }

    const auto& speaker = scenario::agent_by_name(config, state.next_speaker);
    try {
      const auto request = scenario::make_request(speaker, config, transcript);
      const std::string text =
          backend.complete(request, llm::CallContext{run_index, call_index++});
      transcript.turns.push_back(
          {static_cast<int>(transcript.turns.size()), speaker.name, text});
    } catch (const llm::GatewayError&) {
      transcript.termination = core::Termination::BackendError;
      return transcript;
    }
  }
}

}  // namespace tradertalk::sim
