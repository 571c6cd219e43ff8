#pragma once

/// Rule-based transcript classification: per-agent intention, final trade
/// decision, executed-trade detection with quantity, and holdings-recall
/// verdicts. All operations are pure functions over (transcript, rules);
/// identical inputs always produce identical results.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradertalk/core.hpp"
#include "tradertalk/gateway.hpp"

namespace tradertalk::analysis {

namespace detail {

[[nodiscard]] inline std::regex compile(const std::string& pattern) {
  return std::regex(pattern, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
}

[[nodiscard]] inline std::vector<std::regex> compile_all(const std::vector<std::string>& patterns) {
  std::vector<std::regex> out;
  out.reserve(patterns.size());
  for (const auto& p : patterns) out.push_back(compile(p));
  return out;
}

[[nodiscard]] inline bool matches_any(const std::string& text, const std::vector<std::regex>& res) {
  for (const auto& re : res)
    if (std::regex_search(text, re)) return true;
  return false;
}

/// True when the text just before `pos` ends with a negating token, making a
/// match that starts at `pos` a negated mention ("not interested in buying")
/// rather than a statement. ECMAScript std::regex has no lookbehind, so the
/// prefix is inspected separately.
[[nodiscard]] inline bool negated_just_before(const std::string& text, std::size_t pos) {
  static const std::regex negation_tail(
      "(?:\\b(?:not|no|never|don't|do not|doesn't|does not|won't|will not|wouldn't|cannot|"
      "can't|isn't|aren't|wasn't|weren't|no longer|nor)\\b[\\s,]*)$",
      std::regex::ECMAScript | std::regex::icase);
  const std::size_t start = pos > 32 ? pos - 32 : 0;
  const std::string prefix = text.substr(start, pos - start);
  return std::regex_search(prefix, negation_tail);
}

/// matches_any, except occurrences immediately preceded by a negation do not
/// count as matches.
[[nodiscard]] inline bool matches_any_unnegated(const std::string& text,
                                                const std::vector<std::regex>& res) {
  for (const auto& re : res) {
    const auto end = std::sregex_iterator();
    for (std::sregex_iterator it(text.begin(), text.end(), re); it != end; ++it)
      if (!negated_just_before(text, static_cast<std::size_t>(it->position()))) return true;
  }
  return false;
}

/// Split on sentence enders [.!?;]; trimmed, empty pieces dropped. Colons and
/// commas do not split, so "Decision: buy" and "Agreed: I sell ... at mid"
/// stay whole.
[[nodiscard]] inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char c : text) {
    if (c == '.' || c == '!' || c == '?' || c == ';') {
      if (!current.empty()) out.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!current.empty()) out.push_back(current);
  for (auto& s : out) {
    const auto begin = s.find_first_not_of(" \t\n\r");
    const auto end = s.find_last_not_of(" \t\n\r");
    s = (begin == std::string::npos) ? std::string{} : s.substr(begin, end - begin + 1);
  }
  std::erase_if(out, [](const std::string& s) { return s.empty(); });
  return out;
}

/// Combine "<digits>" + optional ".<frac>" + optional million suffix into
/// exact currency units. Million forms scale by 1e6 with string arithmetic so
/// "2.5 million" is exactly 2,500,000; non-integral totals are rejected.
/// Plain (unsuffixed) numbers need a thousands separator unless `allow_bare`.
[[nodiscard]] inline std::optional<long long> combine_amount(std::string digits,
                                                             std::string frac,
                                                             const std::string& suffix,
                                                             bool allow_bare) {
  const bool had_separator = digits.find(',') != std::string::npos;
  digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
  if (digits.empty() || digits.size() > 12) return std::nullopt;
  long long whole = 0;
  for (char c : digits) whole = whole * 10 + (c - '0');

  if (!suffix.empty()) {
    if (frac.size() > 6) {
      if (frac.find_first_not_of('0', 6) != std::string::npos) return std::nullopt;
      frac.resize(6);
    }
    frac.resize(6, '0');
    long long sub = 0;
    for (char c : frac) sub = sub * 10 + (c - '0');
    if (whole > (std::numeric_limits<long long>::max() - sub) / 1'000'000) return std::nullopt;
    return whole * 1'000'000 + sub;
  }
  if (!frac.empty()) return std::nullopt;          // decimals need a million suffix
  if (!had_separator && !allow_bare) return std::nullopt;
  return whole;
}

/// The one quantity grammar: optional £, digits (with or without thousands
/// separators), optional decimal part, optional million suffix (million|mm|m).
[[nodiscard]] inline const std::regex& amount_regex() {
  static const std::regex re(
      "(?:£)?\\s*(\\d{1,3}(?:,\\d{3})+|\\d+)(?:\\.(\\d+))?\\s*(million\\b|mm\\b|m\\b)?",
      std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
  return re;
}

}  // namespace detail

// --- Rules ---------------------------------------------------------------------------

/// Versioned pattern sets driving the classifier. Patterns are ECMAScript
/// regexes, matched case-insensitively; they are compiled once at load so the
/// per-transcript operations stay cheap. Loading from a file keeps
/// classifications reproducible: identical rules file + identical transcript
/// always yields the identical result.
class ClassifierRules {
 public:
  ClassifierRules() = default;

  [[nodiscard]] static ClassifierRules from_json(const nlohmann::json& j) {
    ClassifierRules r;
    r.version_ = j.value("version", 1);
    const auto& dp = j.at("decision_patterns");
    r.decision_strings_[core::TradeDecision::Buy] =
        dp.at("buy").get<std::vector<std::string>>();
    r.decision_strings_[core::TradeDecision::Sell] =
        dp.at("sell").get<std::vector<std::string>>();
    r.decision_strings_[core::TradeDecision::Flatten] =
        dp.at("flatten").get<std::vector<std::string>>();
    r.decision_strings_[core::TradeDecision::NoTrade] =
        dp.at("no_trade").get<std::vector<std::string>>();
    const auto& ip = j.at("intention_patterns");
    r.intends_strings_ = ip.at("intends_to_trade").get<std::vector<std::string>>();
    r.declines_strings_ = ip.at("declines").get<std::vector<std::string>>();
    r.agreement_strings_ = j.at("agreement_patterns").get<std::vector<std::string>>();
    r.quantity_strings_ = j.at("quantity_patterns").get<std::vector<std::string>>();
    r.validate_and_compile();
    return r;
  }

  [[nodiscard]] static ClassifierRules from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw llm::ConfigError("cannot open rules file: " + path.string());
    nlohmann::json j;
    try {
      in >> j;
      return from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw llm::ConfigError("bad rules file " + path.string() + ": " + e.what());
    }
  }

  /// Built-in default rule set, version 1. data/rules.default.json carries
  /// the same content; a test keeps the two in lockstep.
  [[nodiscard]] static ClassifierRules defaults();

  [[nodiscard]] nlohmann::json to_json() const {
    return nlohmann::json{
        {"version", version_},
        {"decision_patterns",
         {{"buy", decision_strings_.at(core::TradeDecision::Buy)},
          {"sell", decision_strings_.at(core::TradeDecision::Sell)},
          {"flatten", decision_strings_.at(core::TradeDecision::Flatten)},
          {"no_trade", decision_strings_.at(core::TradeDecision::NoTrade)}}},
        {"intention_patterns",
         {{"intends_to_trade", intends_strings_}, {"declines", declines_strings_}}},
        {"agreement_patterns", agreement_strings_},
        {"quantity_patterns", quantity_strings_}};
  }

  [[nodiscard]] int version() const { return version_; }

  [[nodiscard]] bool matches_decision(const std::string& text, core::TradeDecision d) const {
    return detail::matches_any(text, decision_res_.at(d));
  }

  /// Intent statements only count when not negated: "I am interested in
  /// buying" signals intent, "I am not interested in buying" does not.
  [[nodiscard]] bool matches_intends(const std::string& text) const {
    return detail::matches_any_unnegated(text, intends_res_);
  }

  [[nodiscard]] bool matches_declines(const std::string& text) const {
    return detail::matches_any(text, declines_res_);
  }

  [[nodiscard]] bool matches_agreement_marker(const std::string& text) const {
    return detail::matches_any(text, agreement_res_);
  }

  /// Refusal language: any explicit-refusal or no-trade pattern. Used both for
  /// Declines classification and as the veto that keeps turns like
  /// "nothing agreed - no trade today" from counting as agreement-bearing.
  [[nodiscard]] bool matches_refusal(const std::string& text) const {
    return detail::matches_any(text, declines_res_) ||
           detail::matches_any(text, decision_res_.at(core::TradeDecision::NoTrade));
  }

  /// Agreement-bearing: an agreement marker with no refusal language beside it.
  [[nodiscard]] bool is_agreement_bearing(const std::string& text) const {
    return matches_agreement_marker(text) && !matches_refusal(text);
  }

 private:
  void validate_and_compile() {
    for (auto d : {core::TradeDecision::Buy, core::TradeDecision::Sell,
                   core::TradeDecision::Flatten, core::TradeDecision::NoTrade}) {
      if (decision_strings_[d].empty())
        throw llm::ConfigError("rules: empty decision pattern list for " + core::to_string(d));
      decision_res_[d] = detail::compile_all(decision_strings_[d]);
    }
    if (intends_strings_.empty() || declines_strings_.empty())
      throw llm::ConfigError("rules: intention pattern lists must be non-empty");
    if (agreement_strings_.empty()) throw llm::ConfigError("rules: agreement_patterns empty");
    if (quantity_strings_.empty()) throw llm::ConfigError("rules: quantity_patterns empty");
    intends_res_ = detail::compile_all(intends_strings_);
    declines_res_ = detail::compile_all(declines_strings_);
    agreement_res_ = detail::compile_all(agreement_strings_);
  }

  int version_ = 1;
  std::map<core::TradeDecision, std::vector<std::string>> decision_strings_;
  std::vector<std::string> intends_strings_;
  std::vector<std::string> declines_strings_;
  std::vector<std::string> agreement_strings_;
  std::vector<std::string> quantity_strings_;
  std::map<core::TradeDecision, std::vector<std::regex>> decision_res_;
  std::vector<std::regex> intends_res_;
  std::vector<std::regex> declines_res_;
  std::vector<std::regex> agreement_res_;
};

inline ClassifierRules ClassifierRules::defaults() {
  nlohmann::json j;
  j["version"] = 1;
  j["decision_patterns"]["buy"] = {
      "\\bdecision\\s*:\\s*buy\\b",
      "\\bi will buy\\b",
      "\\bi'll buy\\b",
      "\\bi'd like to buy\\b",
      "\\bi (?:want|would like|would love|wish|need|intend|plan|am going|am looking|am "
      "willing|am happy|am ready|choose) to buy\\b",
      "\\bhappy to buy\\b",
      "\\bready to buy\\b",
      "\\bkeen to buy\\b",
      "\\bi am a buyer\\b",
      "\\bi'm a buyer\\b",
      "\\bi buy\\b",
      "\\bmight buy\\b",
      "\\bi can buy\\b",
      "\\bi could buy\\b",
  };
  j["decision_patterns"]["sell"] = {
      "\\bdecision\\s*:\\s*sell\\b",
      "\\bi will sell\\b",
      "\\bi'll sell\\b",
      "\\bi'd like to sell\\b",
      "\\bi (?:want|would like|would love|wish|need|intend|plan|am going|am looking|am "
      "willing|am happy|am ready|choose) to sell\\b",
      "\\bhappy to sell\\b",
      "\\bready to sell\\b",
      "\\bkeen to sell\\b",
      "\\bi am a seller\\b",
      "\\bi'm a seller\\b",
      "\\bi sell\\b",
      "\\bmight sell\\b",
      "\\bi can sell\\b",
      "\\bi could sell\\b",
  };
  j["decision_patterns"]["flatten"] = {
      "\\bdecision\\s*:\\s*flatten\\b",
      "\\bflatten(?:s|ed|ing)?\\b",
  };
  j["decision_patterns"]["no_trade"] = {
      "\\bno trade\\b",
      "\\bnot to trade\\b",
      "\\bwill not (?:be )?trad(?:e|ing)\\b",
      "\\bwon't (?:be )?trad(?:e|ing)\\b",
      "\\bdecline(?:d|s)? to trade\\b",
      "\\bmust decline\\b",
      "\\bi decline\\b",
      "\\bnot interested in trading\\b",
      "\\bdo(?:n't| not) wish to trade\\b",
      "\\bmaintain (?:my|our) current position\\b",
      "\\bno deal\\b",
      "\\bnothing agreed\\b",
      "\\bi(?:'ll| will) pass\\b",
      "\\bpass today\\b",
      "\\bno business today\\b",
      "\\bnot trading today\\b",
      "\\bsit this one out\\b",
  };
  j["intention_patterns"]["intends_to_trade"] = {
      "\\bi (?:want|would like|wish|need|intend|plan|am looking|am keen|hope) to trade\\b",
      "\\blooking to (?:buy|sell|trade)\\b",
      "\\bkeen to trade\\b",
      "\\bhappy to trade\\b",
      "\\bready to trade\\b",
      "\\b(?:my|our) (?:role|job|objective|goal|aim|mandate)(?: today)? is to "
      "(?:buy|sell|trade)\\b",
      "\\bi am in the market to (?:buy|sell)\\b",
      "\\bcall(?:ing)?(?: you)? to (?:buy|sell|trade)\\b",
      "\\binterested in (?:buying|selling|trading)\\b",
  };
  j["intention_patterns"]["declines"] = j["decision_patterns"]["no_trade"];
  j["agreement_patterns"] = {
      "\\bagreed\\b",
      "\\bi confirm\\b",
      "\\bconfirmed\\b",
      "\\bwe have a deal\\b",
      "\\bit's a deal\\b",
      "\\bdeal done\\b",
      "\\bdone at mid\\b",
      "\\bi accept\\b",
      "\\bi (?:buy|sell)\\b[^.!?;]*\\bat mid\\b",
  };
  j["quantity_patterns"] = {
      "(?:£)?\\s*(?:\\d{1,3}(?:,\\d{3})+|\\d+)(?:\\.\\d+)?\\s*(?:million|mm|m)\\b",
      "\\b\\d{1,3}(?:,\\d{3})+\\b",
  };
  return from_json(j);
}

// --- Quantity parsing ------------------------------------------------------------------

/// Parses a money quantity into whole currency units. Recognized forms:
/// "<n> million", "<n>m", "£<n> million", "£<n>m", "<n>mm" (all scaled by
/// 1,000,000, decimals allowed when they stay integral) and plain integers
/// with thousands separators. Total and never throws; zero/negative, bare
/// unsuffixed integers, or several distinct values in one text → absent.
[[nodiscard]] inline std::optional<long long> parse_quantity(const std::string& text) noexcept {
  try {
    std::set<long long> values;
    const auto& re = detail::amount_regex();
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re);
         it != std::sregex_iterator{}; ++it) {
      const auto value = detail::combine_amount((*it)[1].str(), (*it)[2].str(), (*it)[3].str(),
                                                /*allow_bare=*/false);
      if (value && *value > 0) values.insert(*value);
    }
    if (values.size() != 1) return std::nullopt;
    return *values.begin();
  } catch (...) {
    return std::nullopt;
  }
}

// --- Decision and intention ---------------------------------------------------------------

/// The unique decision whose patterns match `text`; absent when none match or
/// when patterns of several distinct decisions match (conflicts are never
/// guessed at).
[[nodiscard]] inline std::optional<core::TradeDecision> extract_decision(
    const std::string& text, const ClassifierRules& rules) {
  std::optional<core::TradeDecision> found;
  for (auto d : {core::TradeDecision::Buy, core::TradeDecision::Sell,
                 core::TradeDecision::Flatten, core::TradeDecision::NoTrade}) {
    if (rules.matches_decision(text, d)) {
      if (found) return std::nullopt;  // conflicting categories
      found = d;
    }
  }
  return found;
}

/// IntendsToTrade when any turn shows buy/sell/flatten language or an explicit
/// trade intention; Declines when refusal language appears and no trade
/// intention does; Unclear otherwise (including an empty turn list).
[[nodiscard]] inline core::IntentionLabel classify_intention(
    const std::vector<std::string>& agent_turns, const ClassifierRules& rules) {
  bool declines = false;
  for (const auto& text : agent_turns) {
    if (rules.matches_decision(text, core::TradeDecision::Buy) ||
        rules.matches_decision(text, core::TradeDecision::Sell) ||
        rules.matches_decision(text, core::TradeDecision::Flatten) ||
        rules.matches_intends(text)) {
      return core::IntentionLabel::IntendsToTrade;
    }
    if (rules.matches_declines(text)) declines = true;
  }
  return declines ? core::IntentionLabel::Declines : core::IntentionLabel::Unclear;
}

// --- Trade detection ----------------------------------------------------------------------

namespace detail {

enum class Direction { Unknown, Buy, Sell, Conflict };

[[nodiscard]] inline Direction direction_of(const std::vector<std::string>& agreement_turns,
                                            const ClassifierRules& rules) {
  bool buy = false;
  bool sell = false;
  for (const auto& t : agreement_turns) {
    buy = buy || rules.matches_decision(t, core::TradeDecision::Buy);
    sell = sell || rules.matches_decision(t, core::TradeDecision::Sell);
  }
  if (buy && sell) return Direction::Conflict;
  if (buy) return Direction::Buy;
  if (sell) return Direction::Sell;
  return Direction::Unknown;
}

/// Quantity candidate of one agreement-bearing turn: sentences carrying an
/// agreement marker are tried first (proximity cuts false pairing), then the
/// whole turn.
[[nodiscard]] inline std::optional<long long> turn_quantity(const std::string& text,
                                                            const ClassifierRules& rules) {
  for (const auto& sentence : split_sentences(text)) {
    if (!rules.matches_agreement_marker(sentence)) continue;
    if (auto q = parse_quantity(sentence)) return q;
  }
  return parse_quantity(text);
}

}  // namespace detail

/// Mutual-confirmation trade detection. A trade exists only when BOTH agents
/// produce agreement-bearing turns, the buy/sell language in those turns
/// yields one consistent direction (one side may stay silent on direction and
/// takes the opposite of the other), and the agreement turns pin down exactly
/// one quantity. Anything else — one-sided agreement, same-direction talk,
/// missing or conflicting quantities — is no trade.
[[nodiscard]] inline std::optional<core::ExecutedTrade> detect_trade(
    const core::Transcript& transcript, const std::vector<core::AgentProfile>& profiles,
    const ClassifierRules& rules) {
  if (profiles.size() != 2) return std::nullopt;
  const std::string& a = profiles[0].name;
  const std::string& b = profiles[1].name;

  std::map<std::string, std::vector<std::string>> agreement_turns;
  std::vector<const std::string*> agreement_in_order;
  for (const auto& turn : transcript.turns) {
    if (turn.speaker != a && turn.speaker != b) continue;
    if (rules.is_agreement_bearing(turn.text)) {
      agreement_turns[turn.speaker].push_back(turn.text);
      agreement_in_order.push_back(&turn.text);
    }
  }
  if (agreement_turns[a].empty() || agreement_turns[b].empty()) return std::nullopt;

  const auto dir_a = detail::direction_of(agreement_turns[a], rules);
  const auto dir_b = detail::direction_of(agreement_turns[b], rules);
  if (dir_a == detail::Direction::Conflict || dir_b == detail::Direction::Conflict)
    return std::nullopt;

  std::string buyer, seller;
  using detail::Direction;
  if (dir_a == Direction::Buy && dir_b != Direction::Buy) {
    buyer = a;
    seller = b;
  } else if (dir_a == Direction::Sell && dir_b != Direction::Sell) {
    buyer = b;
    seller = a;
  } else if (dir_a == Direction::Unknown && dir_b == Direction::Buy) {
    buyer = b;
    seller = a;
  } else if (dir_a == Direction::Unknown && dir_b == Direction::Sell) {
    buyer = a;
    seller = b;
  } else {
    return std::nullopt;  // no direction at all, or both sides on the same side
  }

  std::set<long long> quantities;
  for (const auto* text : agreement_in_order) {
    if (auto q = detail::turn_quantity(*text, rules)) quantities.insert(*q);
  }
  if (quantities.size() != 1) return std::nullopt;

  return core::ExecutedTrade{buyer, seller, *quantities.begin(), "mid"};
}

// --- Holdings recall ------------------------------------------------------------------------

namespace detail {

struct RecallPatterns {
  // First-person holdings statements. The filler whitelist (currently/
  // actually/now/today/still) deliberately excludes modals, so obligations
  // like "I am supposed to hold 0 bonds" never count as statements.
  std::regex stated_amount;    // "I hold/have [a] [negative] [position of] <amount>"
  std::regex possessive;       // "my position/book/holding is [sign] <amount>|flat|zero"
  std::regex short_long;       // "I am short/long <amount>"
  std::regex zero_words;       // "I hold/have no/zero/0 bonds|gilts|position"
  std::regex i_am_flat;        // "I am flat"

  RecallPatterns() {
    static const std::string filler = "(?:currently\\s+|actually\\s+|now\\s+|today\\s+|still\\s+)*";
    static const std::string sign = "(negative\\s+|minus\\s+|short\\s+|-\\s*)?";
    static const std::string amount =
        "((?:£)?\\s*(?:\\d{1,3}(?:,\\d{3})+|\\d+)(?:\\.\\d+)?\\s*(?:million\\b|mm\\b|m\\b)?)";
    const auto flags = std::regex::ECMAScript | std::regex::icase | std::regex::optimize;
    stated_amount = std::regex(
        "\\b(?:i|we)\\s+" + filler +
            "(?:hold|have|held|had|am\\s+holding|are\\s+holding)\\s+(?:a\\s+|an\\s+)?" + sign +
            "(?:(?:position|holding|balance)\\s+of\\s+)?" + amount,
        flags);
    possessive = std::regex(
        "\\b(?:my|our)\\s+(?:current\\s+|actual\\s+|starting\\s+|initial\\s+)?"
        "(?:holding|holdings|position|book|balance)\\s+"
        "(?:is|are|stands\\s+at|sits\\s+at|remains)\\s+" +
            filler + "(?:at\\s+)?" + sign + "(?:" + amount + "|flat\\b|zero\\b)",
        flags);
    short_long = std::regex(
        "\\b(?:i\\s+am|i'm|i\\s+was|we\\s+are|we\\s+were)\\s+" + filler + "(short|long)\\s+" +
            amount,
        flags);
    zero_words = std::regex(
        "\\b(?:i|we)\\s+" + filler +
            "(?:hold|have|held|had)\\s+(?:no|zero|0)\\s+(?:bonds|gilts|position)\\b",
        flags);
    i_am_flat =
        std::regex("\\b(?:i\\s+am|i'm|we\\s+are)\\s+" + filler + "flat\\b", flags);
  }
};

[[nodiscard]] inline const RecallPatterns& recall_patterns() {
  static const RecallPatterns p;
  return p;
}

[[nodiscard]] inline bool is_negative_sign(const std::string& sign_text) {
  return !sign_text.empty();  // capture group only matches negative markers
}

/// Amount token from a recall statement; bare integers (including 0) allowed.
[[nodiscard]] inline std::optional<long long> parse_recall_amount(const std::string& token) {
  std::smatch m;
  if (!std::regex_search(token, m, amount_regex())) return std::nullopt;
  return combine_amount(m[1].str(), m[2].str(), m[3].str(), /*allow_bare=*/true);
}

inline void collect_statements(const std::string& text, std::set<long long>& out) {
  const auto& p = recall_patterns();

  for (auto it = std::sregex_iterator(text.begin(), text.end(), p.stated_amount);
       it != std::sregex_iterator{}; ++it) {
    if (auto v = parse_recall_amount((*it)[2].str()))
      out.insert(is_negative_sign((*it)[1].str()) ? -*v : *v);
  }
  for (auto it = std::sregex_iterator(text.begin(), text.end(), p.possessive);
       it != std::sregex_iterator{}; ++it) {
    const std::string amount = (*it)[2].str();
    if (amount.empty()) {
      out.insert(0);  // "... is flat" / "... is zero"
    } else if (auto v = parse_recall_amount(amount)) {
      out.insert(is_negative_sign((*it)[1].str()) ? -*v : *v);
    }
  }
  for (auto it = std::sregex_iterator(text.begin(), text.end(), p.short_long);
       it != std::sregex_iterator{}; ++it) {
    if (auto v = parse_recall_amount((*it)[2].str())) {
      std::string side = (*it)[1].str();
      std::transform(side.begin(), side.end(), side.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      out.insert(side == "short" ? -*v : *v);
    }
  }
  if (std::regex_search(text, p.zero_words)) out.insert(0);
  if (std::regex_search(text, p.i_am_flat)) out.insert(0);
}

}  // namespace detail

/// Scans each agent's own turns for stated holdings. Correct iff the set of
/// distinct stated values is exactly {initial_holdings}; Omitted iff nothing
/// was stated; Incorrect otherwise (wrong figure, wrong sign, or inconsistent
/// restatements).
[[nodiscard]] inline std::map<std::string, core::RecallVerdict> check_holdings_recall(
    const core::Transcript& transcript, const std::vector<core::AgentProfile>& profiles) {
  std::map<std::string, core::RecallVerdict> out;
  for (const auto& profile : profiles) {
    std::set<long long> stated;
    for (const auto& turn : transcript.turns) {
      if (turn.speaker != profile.name) continue;
      detail::collect_statements(turn.text, stated);
    }
    if (stated.empty()) {
      out[profile.name] = core::RecallVerdict::Omitted;
    } else if (stated.size() == 1 && *stated.begin() == profile.initial_holdings) {
      out[profile.name] = core::RecallVerdict::Correct;
    } else {
      out[profile.name] = core::RecallVerdict::Incorrect;
    }
  }
  return out;
}

// --- Composition -------------------------------------------------------------------------------

/// Full per-run classification. Decisions come from each agent's final
/// decision-bearing turn ("the last stance is the outcome"); a turn whose
/// decision patterns conflict is not decision-bearing.
[[nodiscard]] inline core::SimulationResult analyse(const core::Transcript& transcript,
                                                    const std::vector<core::AgentProfile>& profiles,
                                                    const ClassifierRules& rules,
                                                    int run_index = 0) {
  core::SimulationResult result;
  result.scenario_id = transcript.scenario_id;
  result.run_index = run_index;
  result.transcript_ref = transcript.scenario_id + "#" + std::to_string(run_index);
  result.errored = transcript.termination == core::Termination::BackendError;

  for (const auto& profile : profiles) {
    std::vector<std::string> own_turns;
    for (const auto& turn : transcript.turns)
      if (turn.speaker == profile.name) own_turns.push_back(turn.text);

    result.per_agent_intention[profile.name] = classify_intention(own_turns, rules);

    std::optional<core::TradeDecision> decision;
    for (const auto& text : own_turns)
      if (auto d = extract_decision(text, rules)) decision = d;
    result.per_agent_decision[profile.name] = decision;
  }

  result.trade = detect_trade(transcript, profiles, rules);
  result.recall = check_holdings_recall(transcript, profiles);
  return result;
}

// --- Optional LLM-judge classifier ------------------------------------------------------------

/// Experimental classifier that asks the backend for a structured verdict in
/// one completion (enabled behind a CLI flag, for studying disagreement with
/// the rule-based path). Recall verdicts still come from the deterministic
/// scan. The judge must answer with bare JSON; anything unparseable raises
/// MalformedResponse.
[[nodiscard]] inline core::SimulationResult classify_with_llm_judge(
    llm::LlmBackend& backend, const core::Transcript& transcript,
    const std::vector<core::AgentProfile>& profiles, const std::string& model_id,
    int run_index = 0, const llm::CallContext& context = {}) {
  std::string convo;
  for (const auto& turn : transcript.turns) {
    convo += turn.speaker;
    convo += ": ";
    convo += turn.text;
    convo += "\n";
  }
  std::string names;
  for (const auto& p : profiles) {
    if (!names.empty()) names += ", ";
    names += p.name;
  }
  llm::LlmRequest req;
  req.model_id = model_id;
  req.temperature = 0.0;
  req.max_tokens = 512;
  req.messages = {
      {llm::Role::System,
       "You annotate bond-trading conversations. Answer with JSON only, no prose."},
      {llm::Role::User,
       "Conversation:\n" + convo + "\nFor each agent (" + names +
           ") give intention (intends_to_trade|declines|unclear) and decision "
           "(buy|sell|flatten|no_trade|null), plus trade: null or "
           "{\"buyer\":name,\"seller\":name,\"quantity\":integer}. Respond with JSON: "
           "{\"per_agent_intention\":{},\"per_agent_decision\":{},\"trade\":null}"},
  };
  const std::string answer = backend.complete(req, context);

  core::SimulationResult result;
  result.scenario_id = transcript.scenario_id;
  result.run_index = run_index;
  result.transcript_ref = transcript.scenario_id + "#" + std::to_string(run_index);
  result.errored = transcript.termination == core::Termination::BackendError;
  try {
    const auto j = nlohmann::json::parse(answer);
    for (const auto& p : profiles) {
      result.per_agent_intention[p.name] = core::intention_label_from_string(
          j.at("per_agent_intention").at(p.name).get<std::string>());
      const auto& dec = j.at("per_agent_decision").at(p.name);
      result.per_agent_decision[p.name] =
          dec.is_null() ? std::nullopt
                        : std::optional<core::TradeDecision>(
                              core::trade_decision_from_string(dec.get<std::string>()));
    }
    const auto& trade = j.at("trade");
    if (!trade.is_null()) {
      result.trade = core::ExecutedTrade{trade.at("buyer").get<std::string>(),
                                         trade.at("seller").get<std::string>(),
                                         trade.at("quantity").get<long long>(), "mid"};
    }
  } catch (const std::exception& e) {
    throw llm::MalformedResponse(std::string{"judge verdict unparseable: "} + e.what());
  }
  result.recall = check_holdings_recall(transcript, profiles);
  return result;
}

}  // namespace tradertalk::analysis
