#pragma once

/// Domain types shared by every other tradertalk module.
/// Pure data: no I/O, no backend calls.

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace tradertalk::core {

/// The four outcomes a trader can commit to at the end of its reasoning.
enum class TradeDecision { Buy, Sell, Flatten, NoTrade };

/// Whether a conversation participant wants to trade at all.
enum class IntentionLabel { IntendsToTrade, Declines, Unclear };

/// Whether an agent restated its starting book correctly during a conversation.
enum class RecallVerdict { Correct, Incorrect, Omitted };

/// How a simulated conversation ended.
enum class Termination { Concluded, TurnCapReached, BackendError };

[[nodiscard]] inline std::string to_string(TradeDecision d) {
  switch (d) {
    case TradeDecision::Buy: return "buy";
    case TradeDecision::Sell: return "sell";
    case TradeDecision::Flatten: return "flatten";
    case TradeDecision::NoTrade: return "no_trade";
  }
  throw std::logic_error("unknown TradeDecision");
}

[[nodiscard]] inline TradeDecision trade_decision_from_string(const std::string& s) {
  if (s == "buy") return TradeDecision::Buy;
  if (s == "sell") return TradeDecision::Sell;
  if (s == "flatten") return TradeDecision::Flatten;
  if (s == "no_trade") return TradeDecision::NoTrade;
  throw std::invalid_argument("not a TradeDecision: " + s);
}

[[nodiscard]] inline std::string to_string(IntentionLabel l) {
  switch (l) {
    case IntentionLabel::IntendsToTrade: return "intends_to_trade";
    case IntentionLabel::Declines: return "declines";
    case IntentionLabel::Unclear: return "unclear";
  }
  throw std::logic_error("unknown IntentionLabel");
}

[[nodiscard]] inline IntentionLabel intention_label_from_string(const std::string& s) {
  if (s == "intends_to_trade") return IntentionLabel::IntendsToTrade;
  if (s == "declines") return IntentionLabel::Declines;
  if (s == "unclear") return IntentionLabel::Unclear;
  throw std::invalid_argument("not an IntentionLabel: " + s);
}

[[nodiscard]] inline std::string to_string(RecallVerdict v) {
  switch (v) {
    case RecallVerdict::Correct: return "correct";
    case RecallVerdict::Incorrect: return "incorrect";
    case RecallVerdict::Omitted: return "omitted";
  }
  throw std::logic_error("unknown RecallVerdict");
}

[[nodiscard]] inline RecallVerdict recall_verdict_from_string(const std::string& s) {
  if (s == "correct") return RecallVerdict::Correct;
  if (s == "incorrect") return RecallVerdict::Incorrect;
  if (s == "omitted") return RecallVerdict::Omitted;
  throw std::invalid_argument("not a RecallVerdict: " + s);
}

[[nodiscard]] inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::Concluded: return "concluded";
    case Termination::TurnCapReached: return "turn_cap_reached";
    case Termination::BackendError: return "backend_error";
  }
  throw std::logic_error("unknown Termination");
}

[[nodiscard]] inline Termination termination_from_string(const std::string& s) {
  if (s == "concluded") return Termination::Concluded;
  if (s == "turn_cap_reached") return Termination::TurnCapReached;
  if (s == "backend_error") return Termination::BackendError;
  throw std::invalid_argument("not a Termination: " + s);
}

/// One trader's identity and mandate.
struct AgentProfile {
  std::string name;
  std::string role_prompt;
  /// Signed bond notional in whole currency units (GBP); never a float so
  /// recall verdicts can compare exactly.
  long long initial_holdings = 0;
  long long target_holdings = 0;
  bool is_initiator = false;

  friend bool operator==(const AgentProfile&, const AgentProfile&) = default;
};

/// One utterance in a conversation. `speaker` is an agent name or "game_master".
struct Turn {
  int index = 0;
  std::string speaker;
  std::string text;

  friend bool operator==(const Turn&, const Turn&) = default;
};

/// An ordered, attributed record of one simulated conversation.
struct Transcript {
  std::string scenario_id;
  std::vector<Turn> turns;
  Termination termination = Termination::Concluded;

  friend bool operator==(const Transcript&, const Transcript&) = default;
};

/// A mutually confirmed trade extracted from a transcript. Quantity is a
/// positive notional in currency units; gilts here always print at mid.
struct ExecutedTrade {
  std::string buyer;
  std::string seller;
  long long quantity = 0;
  std::string price_convention = "mid";

  friend bool operator==(const ExecutedTrade&, const ExecutedTrade&) = default;
};

/// Classified outcome of a single run.
struct SimulationResult {
  std::string scenario_id;
  int run_index = 0;
  std::map<std::string, IntentionLabel> per_agent_intention;
  std::map<std::string, std::optional<TradeDecision>> per_agent_decision;
  std::optional<ExecutedTrade> trade;
  std::map<std::string, RecallVerdict> recall;
  /// Stable identifier into the transcript store ("<scenario_id>#<run_index>").
  std::string transcript_ref;
  /// True when the run's conversation aborted on a backend failure; errored
  /// runs are excluded from rate denominators downstream.
  bool errored = false;

  friend bool operator==(const SimulationResult&, const SimulationResult&) = default;
};

// --- JSON serialization -----------------------------------------------------
// Manual to_json/from_json so enum spellings and optional fields are explicit.

inline void to_json(nlohmann::json& j, const AgentProfile& p) {
  j = nlohmann::json{{"name", p.name},
                     {"role_prompt", p.role_prompt},
                     {"initial_holdings", p.initial_holdings},
                     {"target_holdings", p.target_holdings},
                     {"is_initiator", p.is_initiator}};
}

inline void from_json(const nlohmann::json& j, AgentProfile& p) {
  j.at("name").get_to(p.name);
  j.at("role_prompt").get_to(p.role_prompt);
  j.at("initial_holdings").get_to(p.initial_holdings);
  j.at("target_holdings").get_to(p.target_holdings);
  j.at("is_initiator").get_to(p.is_initiator);
}

inline void to_json(nlohmann::json& j, const Turn& t) {
  j = nlohmann::json{{"index", t.index}, {"speaker", t.speaker}, {"text", t.text}};
}

inline void from_json(const nlohmann::json& j, Turn& t) {
  j.at("index").get_to(t.index);
  j.at("speaker").get_to(t.speaker);
  j.at("text").get_to(t.text);
}

inline void to_json(nlohmann::json& j, const Transcript& t) {
  j = nlohmann::json{{"scenario_id", t.scenario_id},
                     {"turns", t.turns},
                     {"termination", to_string(t.termination)}};
}

inline void from_json(const nlohmann::json& j, Transcript& t) {
  j.at("scenario_id").get_to(t.scenario_id);
  t.turns = j.at("turns").get<std::vector<Turn>>();
  t.termination = termination_from_string(j.at("termination").get<std::string>());
}

inline void to_json(nlohmann::json& j, const ExecutedTrade& t) {
  j = nlohmann::json{{"buyer", t.buyer},
                     {"seller", t.seller},
                     {"quantity", t.quantity},
                     {"price_convention", t.price_convention}};
}

inline void from_json(const nlohmann::json& j, ExecutedTrade& t) {
  j.at("buyer").get_to(t.buyer);
  j.at("seller").get_to(t.seller);
  j.at("quantity").get_to(t.quantity);
  j.at("price_convention").get_to(t.price_convention);
}

inline void to_json(nlohmann::json& j, const SimulationResult& r) {
  nlohmann::json intentions = nlohmann::json::object();
  for (const auto& [name, label] : r.per_agent_intention) intentions[name] = to_string(label);

  nlohmann::json decisions = nlohmann::json::object();
  for (const auto& [name, dec] : r.per_agent_decision)
    decisions[name] = dec ? nlohmann::json(to_string(*dec)) : nlohmann::json(nullptr);

  nlohmann::json recall = nlohmann::json::object();
  for (const auto& [name, verdict] : r.recall) recall[name] = to_string(verdict);

  j = nlohmann::json{{"scenario_id", r.scenario_id},
                     {"run_index", r.run_index},
                     {"per_agent_intention", std::move(intentions)},
                     {"per_agent_decision", std::move(decisions)},
                     {"trade", r.trade ? nlohmann::json(*r.trade) : nlohmann::json(nullptr)},
                     {"recall", std::move(recall)},
                     {"transcript_ref", r.transcript_ref},
                     {"errored", r.errored}};
}

inline void from_json(const nlohmann::json& j, SimulationResult& r) {
  j.at("scenario_id").get_to(r.scenario_id);
  j.at("run_index").get_to(r.run_index);

  r.per_agent_intention.clear();
  for (const auto& [name, v] : j.at("per_agent_intention").items())
    r.per_agent_intention[name] = intention_label_from_string(v.get<std::string>());

  r.per_agent_decision.clear();
  for (const auto& [name, v] : j.at("per_agent_decision").items())
    r.per_agent_decision[name] =
        v.is_null() ? std::nullopt
                    : std::optional<TradeDecision>(trade_decision_from_string(v.get<std::string>()));

  const auto& trade = j.at("trade");
  r.trade = trade.is_null() ? std::nullopt : std::optional<ExecutedTrade>(trade.get<ExecutedTrade>());

  r.recall.clear();
  for (const auto& [name, v] : j.at("recall").items())
    r.recall[name] = recall_verdict_from_string(v.get<std::string>());

  j.at("transcript_ref").get_to(r.transcript_ref);
  r.errored = j.value("errored", false);
}

}  // namespace tradertalk::core
