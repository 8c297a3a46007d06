#include <gtest/gtest.h>

#include "cases.hpp"
#include "stagecraft/error.hpp"
#include "stagecraft/stage.hpp"

using namespace stagecraft;
using namespace stagecraft::testing;

namespace {

const char* kFast = R"(<tool_call>{"name": "respond_fast", "arguments": {}}</tool_call>)";
const char* kSilent = R"(<tool_call>{"name": "keep_silence", "arguments": {}}</tool_call>)";

/// Every role answers forever with the same reply.
std::shared_ptr<ScriptedBackend> chatty(const NarrativeBlueprint& bp, const char* pad, const std::string& transfer) {
    auto b = std::make_shared<ScriptedBackend>();
    for (const auto& a : bp.actors) {
        b->add({"goal/" + a.name, std::nullopt, "Keep going.", 1, true});
        b->add({"pad/" + a.name, std::nullopt, pad, 1, true});
        b->add({"actor/" + a.name, std::nullopt, a.name + " speaks.", 1, true});
    }
    b->add({"transfer", std::nullopt, transfer, 1, true});
    b->add({"planner/plan", std::nullopt, R"({"trajectories": [["move on"]]})", 1, true});
    b->add({"advancer", std::nullopt, "<think>stuck</think>Instruction to all: move on", 1, true});
    return b;
}

struct Rig {
    NarrativeBlueprint bp = load_blueprint("hamlet_closet");
    std::shared_ptr<ScriptedBackend> backend;
    std::shared_ptr<EventLog> log = std::make_shared<EventLog>();
    std::shared_ptr<QueuedInput> input = std::make_shared<QueuedInput>();
    std::unique_ptr<Session> session;

    Rig(const char* pad, const std::string& transfer, StageConfig config = {}, Roster roster = {}) {
        backend = chatty(bp, pad, transfer);
        if (roster.empty()) roster = default_roster(bp);
        session = std::make_unique<Session>(bp, roster, std::make_shared<const Gateway>(backend), config, "rig", input, log);
        session->start();
    }
};

std::vector<std::string> speakers(const std::vector<TranscriptEvent>& events) {
    std::vector<std::string> out;
    for (const auto& e : of_kind(events, EventKind::speech)) out.push_back(e.speaker);
    return out;
}

}  // namespace

TEST(Session, RosterMustMatchCast) {
    auto bp = load_blueprint("hamlet_closet");
    auto gw = std::make_shared<const Gateway>(std::make_shared<ScriptedBackend>());
    Roster r = default_roster(bp);
    r.erase("Polonius");
    EXPECT_THROW(Session(bp, r, gw, {}, "x"), Error);
    r = default_roster(bp);
    r["Laertes"] = Controller::ai;
    EXPECT_THROW(Session(bp, r, gw, {}, "x"), Error);
    bp.acts[0].end_point_id = "p1";
    EXPECT_THROW(Session(bp, default_roster(bp), gw, {}, "x"), Error);
}

TEST(Session, StartEmitsHeaderGoalsAndEntrances) {
    Rig rig(kSilent, "FLAG_MET: false");
    const auto events = rig.log->snapshot();
    EXPECT_EQ(of_type(events, "session_start").size(), 1u);
    EXPECT_EQ(of_type(events, "goal").size(), 3u);
    EXPECT_EQ(of_type(events, "entrance").size(), 3u);
    const auto s = rig.session->state();
    EXPECT_EQ(s.on_stage, (std::vector<std::string>{"Hamlet", "Gertrude", "Polonius"}));
    EXPECT_EQ(s.active_scene, "closet");
    EXPECT_EQ(s.private_goals.at("Hamlet"), "Keep going.");
}

TEST(Session, RoundRobinWithExclusionOfLastSpeaker) {
    Rig rig(kFast, "<think>r</think>FLAG_MET: false");
    for (int i = 0; i < 4; ++i) rig.session->step();
    EXPECT_EQ(speakers(rig.log->snapshot()), (std::vector<std::string>{"Hamlet", "Gertrude", "Polonius", "Hamlet"}));
    // The last speaker is never asked to decide in the next round.
    const auto pads = of_type(rig.log->snapshot(), "pad_decision");
    EXPECT_EQ(pads.size(), 9u);
}

TEST(Session, BudgetExhaustionStopsIncomplete) {
    StageConfig c;
    c.turn_budget = 3;
    Rig rig(kSilent, "FLAG_MET: false", c);
    EXPECT_EQ(rig.session->run(), SessionStatus::budget_exhausted);
    EXPECT_EQ(rig.session->state().rounds_in_act, 3);
    EXPECT_TRUE(rig.log->closed());
    const auto end = of_type(rig.log->snapshot(), "budget_exhausted");
    ASSERT_EQ(end.size(), 1u);
    EXPECT_TRUE(end[0].data["incomplete"].get<bool>());
    EXPECT_FALSE(rig.session->step());
}

TEST(Session, StallTriggersAdvancerAfterThreshold) {
    StageConfig c;
    c.stall_threshold = 2;
    Rig rig(kSilent, "FLAG_MET: false", c);
    rig.session->step();
    EXPECT_TRUE(of_type(rig.log->snapshot(), "stall").empty());
    rig.session->step();
    EXPECT_EQ(of_type(rig.log->snapshot(), "stall").size(), 1u);
    const auto ins = of_kind(rig.log->snapshot(), EventKind::instruction);
    ASSERT_EQ(ins.size(), 1u);
    EXPECT_EQ(ins[0].visibility, Visibility::all());
    EXPECT_EQ(rig.session->state().stall_counter, 0);
}

TEST(Session, MetFlagsWalkToCompletion) {
    Rig rig(kFast, "<think>r</think>Done.\nFLAG_MET: true");
    EXPECT_EQ(rig.session->run(10), SessionStatus::completed);
    const auto events = rig.log->snapshot();
    EXPECT_EQ(of_type(events, "enter_point").size(), 2u);
    EXPECT_EQ(of_type(events, "completed").size(), 1u);
    EXPECT_EQ(of_type(events, "review").size(), 0u);  // no human, human_only review
    EXPECT_THROW(rig.session->advance_point(), Error);
}

TEST(Session, AdvancePointManually) {
    Rig rig(kSilent, "FLAG_MET: false");
    const auto t = rig.session->advance_point();
    EXPECT_EQ(t.from_point, "p1");
    EXPECT_EQ(t.to_point, "p2");
    EXPECT_EQ(t.left, (std::vector<std::string>{"Polonius"}));
    const auto done = rig.session->advance_point();
    EXPECT_TRUE(done.completed);
    try {
        rig.session->advance_point();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::already_at_final_point);
    }
}

TEST(Session, SubmitTurnErrors) {
    Rig rig(kSilent, "FLAG_MET: false");
    EXPECT_THROW(rig.session->submit_turn("Laertes", "Hello"), Error);
    try {
        rig.session->submit_turn("Hamlet", "  ( ) ");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::empty_turn);
    }
    rig.session->advance_point();
    try {
        rig.session->submit_turn("Polonius", "I am still here");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::actor_off_stage);
    }
    rig.session->abort("test");
    try {
        rig.session->submit_turn("Hamlet", "Hello");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::session_not_performing);
    }
}

TEST(Session, ThinkingIsPrivateToTheSpeaker) {
    Rig rig(kSilent, "FLAG_MET: false");
    rig.backend->add({"narrator", std::nullopt, "VERDICT: failure\nno", 1, true});
    const auto produced = rig.session->submit_turn("Hamlet", "(sit) [She knows.] Mother.");
    ASSERT_EQ(produced.size(), 4u);
    EXPECT_EQ(produced[0].kind, EventKind::thinking);
    EXPECT_EQ(produced[0].visibility, Visibility::private_to("Hamlet"));
    EXPECT_EQ(produced[1].kind, EventKind::speech);
    EXPECT_EQ(produced[2].kind, EventKind::action_attempt);
    EXPECT_EQ(produced[3].kind, EventKind::action_result);
}

TEST(Session, HumanWithoutInputIsWaitedOn) {
    Roster r = default_roster(load_blueprint("hamlet_closet"));
    r["Hamlet"] = Controller::human;
    Rig rig(kSilent, "FLAG_MET: false", {}, r);
    rig.session->step();
    rig.session->step();
    EXPECT_EQ(of_type(rig.log->snapshot(), "waiting").size(), 1u);
    rig.input->push("Hamlet", "Is anyone there?");
    rig.session->step();
    EXPECT_EQ(speakers(rig.log->snapshot()), (std::vector<std::string>{"Hamlet"}));
    EXPECT_EQ(rig.input->pending("Hamlet"), 0u);
}

TEST(Session, RestoreContinuesFromTranscript) {
    const auto run = run_case(4);
    auto backend = ScriptedBackend::from_jsonl(fixture("scripts/case4.jsonl"));
    auto log = std::make_shared<EventLog>();
    Session again(run.blueprint, run.roster, std::make_shared<const Gateway>(backend), run.config, "case4", nullptr, log);
    again.restore(run.events);
    EXPECT_EQ(again.state().point_index, 1u);
    EXPECT_EQ(again.state().prop_states, run.state.prop_states);
    EXPECT_EQ(again.state().on_stage, run.state.on_stage);
    EXPECT_EQ(log->last_seq(), run.events.back().seq);

    auto other = load_blueprint("murder_study");
    Session wrong(other, default_roster(other), std::make_shared<const Gateway>(backend), {}, "x");
    EXPECT_THROW(wrong.restore(run.events), Error);
}

TEST(Replay, DetectsTampering) {
    auto events = run_case(1).events;
    ASSERT_NO_THROW(replay(events));

    auto tampered = events;
    for (auto& e : tampered)
        if (e.kind == EventKind::action_result && !e.data["state_diff"].empty()) e.data["state_diff"][0]["old_value"] = "drawn";
    EXPECT_THROW(replay(tampered), Error);

    tampered = events;
    tampered[4].seq = 40;
    EXPECT_THROW(replay(tampered), Error);

    tampered = events;
    tampered.erase(tampered.begin());
    for (std::size_t i = 0; i < tampered.size(); ++i) tampered[i].seq = static_cast<std::int64_t>(i + 1);
    EXPECT_THROW(replay(tampered), Error);
}

TEST(StageConfig, JsonRoundTripAndValidation) {
    StageConfig c;
    c.stall_threshold = 3;
    c.review_mode = ReviewMode::always;
    c.clock = ClockMode::wall;
    const auto back = StageConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json());
    EXPECT_EQ(StageConfig::from_json(nlohmann::json::object()).stall_threshold, 6);
    EXPECT_THROW(StageConfig::from_json({{"turn_budget", 0}}), Error);
}

TEST(QueuedInput, CapacityAndOrder) {
    QueuedInput q;
    EXPECT_TRUE(q.push("A", "one", 2));
    EXPECT_TRUE(q.push("A", "two", 2));
    EXPECT_FALSE(q.push("A", "three", 2));
    EXPECT_EQ(q.peek("A", std::chrono::milliseconds(0)).value_or(""), "one");
    q.consume("A");
    EXPECT_EQ(q.peek("A", std::chrono::milliseconds(0)).value_or(""), "two");
    EXPECT_FALSE(q.peek("B", std::chrono::milliseconds(1)));
}
