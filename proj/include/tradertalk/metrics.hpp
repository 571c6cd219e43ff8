#pragma once

/// Batch aggregation: turns a list of per-run classification results into
/// rates with Wilson score confidence intervals, plus a benchmark comparison
/// for the order-to-trade ratio. Pure integer counting followed by single
/// divisions, so aggregation is exactly permutation-invariant and
/// deterministic. Errored runs are excluded from every rate denominator and
/// reported separately via n_errored — dropping them silently would bias the
/// rates invisibly.

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tradertalk/core.hpp"

namespace tradertalk::metrics {

struct EmptyBatch : std::runtime_error {
  EmptyBatch() : std::runtime_error("aggregate: empty result batch") {}
};

struct InvalidCounts : std::runtime_error {
  explicit InvalidCounts(const std::string& what) : std::runtime_error(what) {}
};

struct Interval {
  double low = 0.0;
  double high = 0.0;
  bool operator==(const Interval&) const = default;
};

inline void to_json(nlohmann::json& j, const Interval& iv) {
  j = nlohmann::json{{"low", iv.low}, {"high", iv.high}};
}

inline void from_json(const nlohmann::json& j, Interval& iv) {
  j.at("low").get_to(iv.low);
  j.at("high").get_to(iv.high);
}

/// Wilson score interval for a binomial proportion at critical value z.
/// Boundary-exact: 0 successes pins low to 0.0 and n successes pins high to
/// 1.0; everything is clamped to [0,1] and always brackets successes/n.
[[nodiscard]] inline Interval wilson_interval(long long successes, long long n, double z = 1.96) {
  if (n < 1 || successes < 0 || successes > n)
    throw InvalidCounts("wilson_interval: need 0 <= successes <= n, n >= 1 (got " +
                        std::to_string(successes) + "/" + std::to_string(n) + ")");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval iv{centre - half, centre + half};
  iv.low = std::max(0.0, std::min(iv.low, 1.0));
  iv.high = std::max(0.0, std::min(iv.high, 1.0));
  if (successes == 0) iv.low = 0.0;
  if (successes == n) iv.high = 1.0;
  return iv;
}

/// The batch-level statistics. All rates live in [0,1]; denominators are
/// n_runs − n_errored except decision_distribution, which is normalized over
/// classified runs only (so its values sum to 1 whenever any run classified).
/// `intervals` maps metric names (per-agent ones suffixed ".<agent>") to 95%
/// Wilson intervals; a rate whose denominator is zero is reported as 0 with
/// no interval.
struct BatchMetrics {
  int n_runs = 0;
  int n_errored = 0;
  std::map<std::string, double> per_agent_intention_rate;
  double both_intend_rate = 0.0;
  double any_intend_rate = 0.0;
  std::map<std::string, double> per_agent_decline_rate;
  std::map<std::string, double> per_agent_unclear_rate;
  std::map<core::TradeDecision, double> decision_distribution;
  double no_trade_rate = 0.0;
  double trade_rate = 0.0;
  double intention_to_execution_gap = 0.0;
  double recall_both_correct_rate = 0.0;
  double recall_omitted_rate = 0.0;
  std::map<std::string, Interval> intervals;

  bool operator==(const BatchMetrics&) const = default;
};

inline void to_json(nlohmann::json& j, const BatchMetrics& m) {
  nlohmann::json distribution = nlohmann::json::object();
  for (const auto& [decision, rate] : m.decision_distribution)
    distribution[core::to_string(decision)] = rate;
  j = nlohmann::json{{"n_runs", m.n_runs},
                     {"n_errored", m.n_errored},
                     {"per_agent_intention_rate", m.per_agent_intention_rate},
                     {"both_intend_rate", m.both_intend_rate},
                     {"any_intend_rate", m.any_intend_rate},
                     {"per_agent_decline_rate", m.per_agent_decline_rate},
                     {"per_agent_unclear_rate", m.per_agent_unclear_rate},
                     {"decision_distribution", distribution},
                     {"no_trade_rate", m.no_trade_rate},
                     {"trade_rate", m.trade_rate},
                     {"intention_to_execution_gap", m.intention_to_execution_gap},
                     {"recall_both_correct_rate", m.recall_both_correct_rate},
                     {"recall_omitted_rate", m.recall_omitted_rate},
                     {"intervals", m.intervals}};
}

inline void from_json(const nlohmann::json& j, BatchMetrics& m) {
  j.at("n_runs").get_to(m.n_runs);
  j.at("n_errored").get_to(m.n_errored);
  j.at("per_agent_intention_rate").get_to(m.per_agent_intention_rate);
  j.at("both_intend_rate").get_to(m.both_intend_rate);
  j.at("any_intend_rate").get_to(m.any_intend_rate);
  j.at("per_agent_decline_rate").get_to(m.per_agent_decline_rate);
  j.at("per_agent_unclear_rate").get_to(m.per_agent_unclear_rate);
  m.decision_distribution.clear();
  for (const auto& [key, value] : j.at("decision_distribution").items())
    m.decision_distribution[core::trade_decision_from_string(key)] = value.get<double>();
  j.at("no_trade_rate").get_to(m.no_trade_rate);
  j.at("trade_rate").get_to(m.trade_rate);
  j.at("intention_to_execution_gap").get_to(m.intention_to_execution_gap);
  j.at("recall_both_correct_rate").get_to(m.recall_both_correct_rate);
  j.at("recall_omitted_rate").get_to(m.recall_omitted_rate);
  j.at("intervals").get_to(m.intervals);
}

/// The run-level decision: the single decision all deciding agents share.
/// Absent when no agent produced a decision or the agents' decisions differ —
/// such runs stay out of the decision distribution.
[[nodiscard]] inline std::optional<core::TradeDecision> run_decision(
    const core::SimulationResult& result) {
  std::set<core::TradeDecision> distinct;
  for (const auto& [name, decision] : result.per_agent_decision)
    if (decision) distinct.insert(*decision);
  if (distinct.size() != 1) return std::nullopt;
  return *distinct.begin();
}

/// Aggregates one batch (all results must share a scenario_id; the batch must
/// be non-empty). Every rate is a plain count divided by its denominator;
/// Wilson intervals at z = 1.96 accompany each binomial rate.
[[nodiscard]] inline BatchMetrics aggregate(const std::vector<core::SimulationResult>& results) {
  if (results.empty()) throw EmptyBatch{};
  for (const auto& r : results)
    if (r.scenario_id != results.front().scenario_id)
      throw std::invalid_argument("aggregate: results span multiple scenario ids (" +
                                  results.front().scenario_id + " vs " + r.scenario_id + ")");

  BatchMetrics m;
  m.n_runs = static_cast<int>(results.size());

  std::map<std::string, long long> intend_counts, decline_counts, unclear_counts;
  std::map<core::TradeDecision, long long> decision_counts;
  long long both_intend = 0, any_intend = 0, classified = 0, no_trade_runs = 0, trades = 0,
            recall_all_correct = 0, recall_all_omitted = 0;

  for (const auto& r : results) {
    if (r.errored) {
      m.n_errored += 1;
      continue;
    }
    bool all_intend = !r.per_agent_intention.empty();
    bool some_intend = false;
    for (const auto& [name, label] : r.per_agent_intention) {
      switch (label) {
        case core::IntentionLabel::IntendsToTrade: intend_counts[name] += 1; break;
        case core::IntentionLabel::Declines: decline_counts[name] += 1; break;
        case core::IntentionLabel::Unclear: unclear_counts[name] += 1; break;
      }
      // ensure every agent appears in every per-agent map
      intend_counts[name] += 0;
      decline_counts[name] += 0;
      unclear_counts[name] += 0;
      const bool intends = label == core::IntentionLabel::IntendsToTrade;
      all_intend = all_intend && intends;
      some_intend = some_intend || intends;
    }
    if (all_intend) both_intend += 1;
    if (some_intend) any_intend += 1;

    if (const auto d = run_decision(r)) {
      classified += 1;
      decision_counts[*d] += 1;
      if (*d == core::TradeDecision::NoTrade) no_trade_runs += 1;
    }
    if (r.trade) trades += 1;

    if (!r.recall.empty()) {
      bool all_correct = true, all_omitted = true;
      for (const auto& [name, verdict] : r.recall) {
        all_correct = all_correct && verdict == core::RecallVerdict::Correct;
        all_omitted = all_omitted && verdict == core::RecallVerdict::Omitted;
      }
      if (all_correct) recall_all_correct += 1;
      if (all_omitted) recall_all_omitted += 1;
    }
  }

  const long long n_ok = m.n_runs - m.n_errored;
  const auto rate = [](long long count, long long denom) {
    return denom > 0 ? static_cast<double>(count) / static_cast<double>(denom) : 0.0;
  };
  const auto add_interval = [&m](const std::string& name, long long count, long long denom) {
    if (denom > 0) m.intervals[name] = wilson_interval(count, denom);
  };

  for (const auto& [name, count] : intend_counts) {
    m.per_agent_intention_rate[name] = rate(count, n_ok);
    add_interval("intend_rate." + name, count, n_ok);
  }
  for (const auto& [name, count] : decline_counts) {
    m.per_agent_decline_rate[name] = rate(count, n_ok);
    add_interval("decline_rate." + name, count, n_ok);
  }
  for (const auto& [name, count] : unclear_counts) {
    m.per_agent_unclear_rate[name] = rate(count, n_ok);
    add_interval("unclear_rate." + name, count, n_ok);
  }
  m.both_intend_rate = rate(both_intend, n_ok);
  m.any_intend_rate = rate(any_intend, n_ok);
  m.no_trade_rate = rate(no_trade_runs, n_ok);
  m.trade_rate = rate(trades, n_ok);
  m.intention_to_execution_gap = m.both_intend_rate - m.trade_rate;
  m.recall_both_correct_rate = rate(recall_all_correct, n_ok);
  m.recall_omitted_rate = rate(recall_all_omitted, n_ok);
  add_interval("both_intend_rate", both_intend, n_ok);
  add_interval("any_intend_rate", any_intend, n_ok);
  add_interval("no_trade_rate", no_trade_runs, n_ok);
  add_interval("trade_rate", trades, n_ok);
  add_interval("recall_both_correct_rate", recall_all_correct, n_ok);
  add_interval("recall_omitted_rate", recall_all_omitted, n_ok);

  for (const auto& [decision, count] : decision_counts) {
    m.decision_distribution[decision] = rate(count, classified);
    add_interval("decision_rate." + core::to_string(decision), count, classified);
  }
  return m;
}

/// Reference order-to-trade-style ratios the trade rate is set beside:
/// 0.0461 (published 2024 US equity order-to-trade figure) and 0.057 (the
/// reference two-agent study's execution rate). Reported with absolute
/// differences, deliberately without any pass/fail judgment — live model
/// drift makes sampled rates non-binding.
struct BenchmarkReport {
  double trade_rate = 0.0;
  double us_equity_otr_2024 = 0.0461;
  double reference_trade_rate = 0.057;
  double diff_vs_us_equity = 0.0;
  double diff_vs_reference = 0.0;

  bool operator==(const BenchmarkReport&) const = default;
};

inline void to_json(nlohmann::json& j, const BenchmarkReport& b) {
  j = nlohmann::json{{"trade_rate", b.trade_rate},
                     {"us_equity_otr_2024", b.us_equity_otr_2024},
                     {"reference_trade_rate", b.reference_trade_rate},
                     {"diff_vs_us_equity", b.diff_vs_us_equity},
                     {"diff_vs_reference", b.diff_vs_reference}};
}

inline void from_json(const nlohmann::json& j, BenchmarkReport& b) {
  j.at("trade_rate").get_to(b.trade_rate);
  j.at("us_equity_otr_2024").get_to(b.us_equity_otr_2024);
  j.at("reference_trade_rate").get_to(b.reference_trade_rate);
  j.at("diff_vs_us_equity").get_to(b.diff_vs_us_equity);
  j.at("diff_vs_reference").get_to(b.diff_vs_reference);
}

[[nodiscard]] inline BenchmarkReport compare_to_benchmarks(const BatchMetrics& m) {
  BenchmarkReport b;
  b.trade_rate = m.trade_rate;
  b.diff_vs_us_equity = std::abs(m.trade_rate - b.us_equity_otr_2024);
  b.diff_vs_reference = std::abs(m.trade_rate - b.reference_trade_rate);
  return b;
}

}  // namespace tradertalk::metrics
