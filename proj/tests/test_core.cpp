// Core vocabulary types: enum string forms and JSON round-trips.

#include <gtest/gtest.h>

#include <json.hpp>

#include "tradertalk/core.hpp"

namespace core = tradertalk::core;
using nlohmann::json;

TEST(TradeDecision, StringRoundTrip) {
  using core::TradeDecision;
  for (auto d : {TradeDecision::Buy, TradeDecision::Sell, TradeDecision::Flatten,
                 TradeDecision::NoTrade}) {
    EXPECT_EQ(core::trade_decision_from_string(core::to_string(d)), d);
  }
  EXPECT_EQ(core::to_string(TradeDecision::Buy), "buy");
  EXPECT_EQ(core::to_string(TradeDecision::Sell), "sell");
  EXPECT_EQ(core::to_string(TradeDecision::Flatten), "flatten");
  EXPECT_EQ(core::to_string(TradeDecision::NoTrade), "no_trade");
  EXPECT_THROW((void)core::trade_decision_from_string("hold"), std::invalid_argument);
}

TEST(IntentionLabel, StringRoundTrip) {
  using core::IntentionLabel;
  for (auto l :
       {IntentionLabel::IntendsToTrade, IntentionLabel::Declines, IntentionLabel::Unclear}) {
    EXPECT_EQ(core::intention_label_from_string(core::to_string(l)), l);
  }
  EXPECT_EQ(core::to_string(IntentionLabel::IntendsToTrade), "intends_to_trade");
  EXPECT_THROW((void)core::intention_label_from_string(""), std::invalid_argument);
}

TEST(RecallVerdict, StringRoundTrip) {
  using core::RecallVerdict;
  for (auto v : {RecallVerdict::Correct, RecallVerdict::Incorrect, RecallVerdict::Omitted}) {
    EXPECT_EQ(core::recall_verdict_from_string(core::to_string(v)), v);
  }
}

TEST(Termination, StringRoundTrip) {
  using core::Termination;
  for (auto t :
       {Termination::Concluded, Termination::TurnCapReached, Termination::BackendError}) {
    EXPECT_EQ(core::termination_from_string(core::to_string(t)), t);
  }
  EXPECT_EQ(core::to_string(Termination::TurnCapReached), "turn_cap_reached");
}

TEST(AgentProfile, JsonRoundTrip) {
  core::AgentProfile p{"Josephine", "sells when a holder", 10'000'000, 0, true};
  const json j = p;
  EXPECT_EQ(j.at("name"), "Josephine");
  EXPECT_EQ(j.at("initial_holdings").get<long long>(), 10'000'000);
  EXPECT_TRUE(j.at("is_initiator").get<bool>());
  EXPECT_EQ(j.get<core::AgentProfile>(), p);
}

TEST(Transcript, JsonRoundTrip) {
  core::Transcript t;
  t.scenario_id = "rq2";
  t.termination = core::Termination::TurnCapReached;
  t.turns = {{0, "game_master", "scene"}, {1, "Josephine", "hello"}};
  const json j = t;
  EXPECT_EQ(j.at("termination"), "turn_cap_reached");
  EXPECT_EQ(j.at("turns").size(), 2u);
  EXPECT_EQ(j.get<core::Transcript>(), t);
}

TEST(SimulationResult, JsonRoundTripWithAbsentOptionals) {
  core::SimulationResult r;
  r.scenario_id = "rq1";
  r.run_index = 7;
  r.per_agent_intention = {{"mm_one", core::IntentionLabel::Declines},
                           {"mm_two", core::IntentionLabel::Unclear}};
  r.per_agent_decision = {{"mm_one", core::TradeDecision::NoTrade}, {"mm_two", std::nullopt}};
  r.trade = std::nullopt;
  r.recall = {{"mm_one", core::RecallVerdict::Omitted}, {"mm_two", core::RecallVerdict::Correct}};
  r.transcript_ref = "rq1#7";

  const json j = r;
  EXPECT_TRUE(j.at("per_agent_decision").at("mm_two").is_null());
  EXPECT_TRUE(j.at("trade").is_null());
  EXPECT_FALSE(j.at("errored").get<bool>());
  EXPECT_EQ(j.get<core::SimulationResult>(), r);
}

TEST(SimulationResult, JsonRoundTripWithTrade) {
  core::SimulationResult r;
  r.scenario_id = "rq2";
  r.run_index = 0;
  r.per_agent_intention = {{"David", core::IntentionLabel::IntendsToTrade},
                           {"Josephine", core::IntentionLabel::IntendsToTrade}};
  r.per_agent_decision = {{"David", core::TradeDecision::Buy},
                          {"Josephine", core::TradeDecision::Sell}};
  r.trade = core::ExecutedTrade{"David", "Josephine", 10'000'000, "mid"};
  r.recall = {{"David", core::RecallVerdict::Correct},
              {"Josephine", core::RecallVerdict::Incorrect}};
  r.transcript_ref = "rq2#0";
  r.errored = false;

  const json j = r;
  EXPECT_EQ(j.at("trade").at("buyer"), "David");
  EXPECT_EQ(j.at("trade").at("quantity").get<long long>(), 10'000'000);
  EXPECT_EQ(j.at("trade").at("price_convention"), "mid");
  EXPECT_EQ(j.get<core::SimulationResult>(), r);
}

TEST(SimulationResult, ErroredDefaultsFalseWhenMissing) {
  const auto j = json::parse(R"({
    "scenario_id": "rq1", "run_index": 0,
    "per_agent_intention": {}, "per_agent_decision": {},
    "trade": null, "recall": {}, "transcript_ref": "rq1#0"
  })");
  EXPECT_FALSE(j.get<core::SimulationResult>().errored);
}
