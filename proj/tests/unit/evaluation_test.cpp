#include <cmath>

#include <gtest/gtest.h>

#include "stagecraft/error.hpp"
#include "stagecraft/evaluation.hpp"

using namespace stagecraft;

namespace {

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an Error";
    return Errc::precondition;
}

std::vector<TranscriptEvent> ended(const std::string& line) {
    TranscriptEvent speech;
    speech.seq = 1;
    speech.kind = EventKind::speech;
    speech.speaker = "A";
    speech.speech = line;
    speech.text = line;
    TranscriptEvent secret = speech;
    secret.seq = 2;
    secret.kind = EventKind::thinking;
    secret.visibility = Visibility::private_to("A");
    secret.text = "hidden thought";
    TranscriptEvent done;
    done.seq = 3;
    done.text = "The performance is complete.";
    done.data = {{"type", "completed"}};
    return {speech, secret, done};
}

}  // namespace

TEST(Verdict, ParsesLinesAndCommaForms) {
    auto v = parse_verdict("explanation: A is livelier.\nscore: 2\nchoice: Model A", Dimension::cp);
    EXPECT_EQ(v.score, 2);
    EXPECT_EQ(v.choice, Choice::model_a);
    EXPECT_EQ(v.explanation, "A is livelier.");
    v = parse_verdict("Explanation: equal, Score: 3, Choice: tie", Dimension::nq);
    EXPECT_EQ(v.choice, Choice::tie);
    EXPECT_EQ(v.explanation, "equal");
    EXPECT_EQ(parse_verdict("SCORE = **5**\nCHOICE: model_b", Dimension::ie).choice, Choice::model_b);
}

TEST(Verdict, InconsistentOrIncompleteIsRejected) {
    for (const auto* raw : {"score: 1\nchoice: Model B", "score: 4\nchoice: tie", "score: 3\nchoice: Model A",
                            "score: 6\nchoice: Model B", "score: 0\nchoice: Model A", "choice: tie", "score: 2"})
        EXPECT_EQ(code_of([&] { parse_verdict(raw, Dimension::cp); }), Errc::unparseable_verdict) << raw;
}

TEST(Verdict, JsonRoundTripRechecksConsistency) {
    const JudgeVerdict v{Dimension::nq, "why", 4, Choice::model_b};
    EXPECT_EQ(verdict_from_json(to_json(v)), v);
    auto bad = to_json(v);
    bad["choice"] = "model_a";
    EXPECT_EQ(code_of([&] { verdict_from_json(bad); }), Errc::unparseable_verdict);
    EXPECT_EQ(code_of([] { verdict_from_json(nlohmann::json::object()); }), Errc::unparseable_verdict);
}

TEST(Judge, RepromptsOnceThenSucceeds) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"judge", std::nullopt, "score: 1\nchoice: Model B", 1, false});
    backend->add({"judge", std::nullopt, "explanation: A wins\nscore: 1\nchoice: Model A", 1, false});
    Gateway gw(backend);
    const auto v = judge_pairwise(ended("mine"), ended("theirs"), Dimension::cp, gw);
    EXPECT_EQ(v.score, 1);
    const auto reqs = backend->requests();
    ASSERT_EQ(reqs.size(), 2u);
    EXPECT_NE(reqs[1].messages[0].text.find("rejected"), std::string::npos);
    EXPECT_LT(reqs[0].messages[0].text.find("mine"), reqs[0].messages[0].text.find("theirs"));
    EXPECT_EQ(reqs[0].messages[0].text.find("hidden thought"), std::string::npos);
}

TEST(Judge, SwapMirrorsScore) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"judge", std::nullopt, "explanation: first is better\nscore: 2\nchoice: Model A", 1, false});
    Gateway gw(backend);
    const auto v = judge_pairwise(ended("mine"), ended("theirs"), Dimension::ie, gw, {"judge", true});
    EXPECT_EQ(v.score, 4);
    EXPECT_EQ(v.choice, Choice::model_b);
    const auto text = backend->requests()[0].messages[0].text;
    EXPECT_LT(text.find("theirs"), text.find("mine"));
}

TEST(Judge, RequiresEndedPerformances) {
    Gateway gw(std::make_shared<ScriptedBackend>());
    auto open = ended("x");
    open.pop_back();
    EXPECT_EQ(code_of([&] { judge_pairwise(open, ended("y"), Dimension::cp, gw); }), Errc::precondition);
}

TEST(WinRate, CreditScale) {
    EXPECT_DOUBLE_EQ(win_rate(std::vector<int>{1}), 100.0);
    EXPECT_DOUBLE_EQ(win_rate(std::vector<int>{5}), 0.0);
    EXPECT_DOUBLE_EQ(win_rate(std::vector<int>{3, 3}), 50.0);
    EXPECT_DOUBLE_EQ(win_rate(std::vector<int>{1, 2, 4}), 100.0 * (1.0 + 0.75 + 0.25) / 3.0);
    EXPECT_EQ(code_of([] { win_rate(std::vector<int>{}); }), Errc::empty_input);
    EXPECT_EQ(code_of([] { win_rate(std::vector<int>{7}); }), Errc::unparseable_verdict);
}

TEST(Rounding, HalfUp) {
    EXPECT_DOUBLE_EQ(round_half_up(76.925), 76.93);
    EXPECT_DOUBLE_EQ(round_half_up(1.005), 1.01);
    EXPECT_DOUBLE_EQ(round_half_up(0.4225, 3), 0.423);
    EXPECT_DOUBLE_EQ(round_half_up(2.344), 2.34);
}

TEST(Leaderboard, AveragesAndOverall) {
    const auto lb = aggregate_leaderboard({{"en", {{Dimension::cp, 60}, {Dimension::nq, 70}, {Dimension::ie, 80}}},
                                           {"zh", {{Dimension::cp, 50}, {Dimension::nq, 50}, {Dimension::ie, 50}}}});
    EXPECT_DOUBLE_EQ(lb.average.at("en"), 70.0);
    EXPECT_DOUBLE_EQ(lb.overall, 60.0);
    EXPECT_EQ(code_of([] { aggregate_leaderboard({{"en", {{Dimension::cp, 1}, {Dimension::nq, 1}}}}); }),
              Errc::missing_dimension);
    EXPECT_EQ(code_of([] { aggregate_leaderboard({}); }), Errc::empty_input);
}

TEST(Pearson, KnownValuesAndErrors) {
    EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
    EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
    // x = 1..5, y = 2,1,4,3,5: cov 8/4, var 10/4 each -> 0.8
    EXPECT_NEAR(pearson({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5}), 0.8, 1e-15);
    EXPECT_EQ(code_of([] { pearson({1, 2}, {1}); }), Errc::length_mismatch);
    EXPECT_EQ(code_of([] { pearson({1}, {1}); }), Errc::empty_input);
    EXPECT_EQ(code_of([] { pearson({1, 1, 1}, {1, 2, 3}); }), Errc::degenerate_variance);
}

TEST(Latency, PenaltyBands) {
    EXPECT_EQ(latency_to_penalty(0.0), 0.0);
    EXPECT_EQ(latency_to_penalty(1.999), 0.0);
    EXPECT_EQ(latency_to_penalty(2.0), 0.05);
    EXPECT_EQ(latency_to_penalty(9.99), 0.05);
    EXPECT_EQ(latency_to_penalty(10.0), 0.10);
    EXPECT_EQ(latency_to_penalty(29.99), 0.10);
    EXPECT_EQ(latency_to_penalty(30.0), 0.15);
    EXPECT_EQ(latency_to_penalty(1e6), 0.15);
    EXPECT_EQ(code_of([] { latency_to_penalty(-0.1); }), Errc::negative_latency);
    EXPECT_EQ(code_of([] { latency_to_penalty(std::nan("")); }), Errc::negative_latency);
}

TEST(PadScore, FinalScoreFloorsAtZero) {
    EXPECT_DOUBLE_EQ(pad_final_score(0.9, 0.6, 0.3, 0.0), 0.6);
    EXPECT_DOUBLE_EQ(pad_final_score(0.05, 0.05, 0.05, 0.15), 0.0);
    EXPECT_THROW(pad_final_score(1.2, 0, 0, 0), Error);
}

TEST(PadScore, StrategyAccuracyPerGoldClass) {
    auto d = [](Strategy s) { return PadDecision{s, {}, {}, {}}; };
    const auto acc = pad_strategy_accuracy({d(Strategy::fast), d(Strategy::slow), d(Strategy::fast), d(Strategy::fast)},
                                           {Strategy::fast, Strategy::slow, Strategy::slow, Strategy::fast});
    EXPECT_DOUBLE_EQ(*acc.fast, 1.0);
    EXPECT_DOUBLE_EQ(*acc.slow, 0.5);
    EXPECT_FALSE(acc.silence);
    EXPECT_FALSE(pad_eval_row(acc, 1.0).final_score);
    EXPECT_EQ(code_of([&] { pad_strategy_accuracy({d(Strategy::fast)}, {}); }), Errc::length_mismatch);

    const auto full = pad_strategy_accuracy({d(Strategy::fast), d(Strategy::slow), d(Strategy::silence)},
                                            {Strategy::fast, Strategy::slow, Strategy::silence});
    const auto row = pad_eval_row(full, 6.89);
    EXPECT_DOUBLE_EQ(row.penalty, 0.05);
    EXPECT_DOUBLE_EQ(*row.final_score, 0.95);
    EXPECT_EQ(to_json(row)["penalty"], 0.05);
}

TEST(Dimension, NamesRoundTrip) {
    for (auto d : {Dimension::cp, Dimension::nq, Dimension::ie}) {
        EXPECT_EQ(parse_dimension(to_string(d)), d);
        EXPECT_FALSE(rubric(d).empty());
    }
    EXPECT_EQ(parse_dimension("nq"), Dimension::nq);
    EXPECT_FALSE(parse_dimension("xx"));
}
