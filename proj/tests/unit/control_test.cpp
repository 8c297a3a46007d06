#include <gtest/gtest.h>

#include "cases.hpp"
#include "stagecraft/control.hpp"
#include "stagecraft/error.hpp"

using namespace stagecraft;

namespace {

ModelReply reply(const std::string& raw) { return parse_reply(raw, Seconds{0}); }

StallView view() {
    StallView v;
    v.on_stage = {"Hamlet", "Gertrude"};
    v.point.id = "p1";
    v.point.flag.description = "The curtain is pierced";
    return v;
}

std::shared_ptr<ScriptedBackend> scripted(const std::string& role, const std::string& text) {
    auto b = std::make_shared<ScriptedBackend>();
    b->add({role, std::nullopt, text, 1, false});
    return b;
}

}  // namespace

TEST(FlagCheck, MetWithCitations) {
    const auto c = parse_flag_check(reply("<think>yes</think>It happened.\nFLAG_MET: true\nCITED: 4, 9, 100, x"), "p1",
                                    {3, 4, 5, 9});
    EXPECT_TRUE(c.met);
    EXPECT_EQ(c.cited_events, (std::vector<std::int64_t>{4, 9}));
    EXPECT_EQ(c.conclusion, "It happened.");
    EXPECT_EQ(c.warnings.size(), 2u);
}

TEST(FlagCheck, ConservativeOnAnythingElse) {
    for (const auto* raw : {"", "FLAG_MET: yes", "flag met true", "FLAG_MET true"})
        EXPECT_FALSE(parse_flag_check(reply(raw), "p1", {1}).met) << raw;
    EXPECT_TRUE(parse_flag_check(reply("flag_met: TRUE"), "p1", {1}).met);
}

TEST(FlagCheck, MetWithoutCitationCitesNewest) {
    const auto c = parse_flag_check(reply("<think>r</think>FLAG_MET: true"), "p1", {2, 7});
    EXPECT_EQ(c.cited_events, (std::vector<std::int64_t>{7}));
    EXPECT_FALSE(parse_flag_check(reply("FLAG_MET: true"), "p1", {}).met);
}

TEST(FlagCheck, EmptyWindowIsPrecondition) {
    Gateway gw(scripted("transfer", "FLAG_MET: false"));
    EXPECT_THROW(check_flag({}, Point{}, gw, "s"), Error);
}

TEST(Review, PassRejectAndFailOpen) {
    auto r = parse_trajectory_review(reply("TRAJECTORY: reject\nThe accusation came from nowhere."));
    EXPECT_FALSE(r.passed);
    EXPECT_EQ(r.reason, "The accusation came from nowhere.");
    EXPECT_TRUE(parse_trajectory_review(reply("trajectory: PASS\n\nfine")).passed);
    r = parse_trajectory_review(reply("no idea"));
    EXPECT_TRUE(r.passed);
    EXPECT_FALSE(r.warnings.empty());
}

TEST(Review, EmptyBeatsRejectedWithoutModel) {
    auto backend = std::make_shared<ScriptedBackend>();
    Gateway gw(backend);
    EXPECT_FALSE(review_trajectory({}, nullptr, FlagSpec{"f", "r"}, gw, "s").passed);
    EXPECT_TRUE(backend->requests().empty());
}

TEST(Plan, ParsesCandidates) {
    const auto p = parse_trajectory_plan(
        reply(R"(Here: {"trajectories": [[{"actor": "Holmes", "beat": "find cufflink"}, "accuse"], [], 3]})"), "p1", "p2");
    ASSERT_EQ(p.candidates.size(), 1u);
    EXPECT_EQ(p.candidates[0][0], (PlannedBeat{"Holmes", "find cufflink"}));
    EXPECT_EQ(p.candidates[0][1], (PlannedBeat{"", "accuse"}));
    EXPECT_THROW(parse_trajectory_plan(reply(R"({"trajectories": [[]]})"), "a", "b"), Error);
    EXPECT_THROW(parse_trajectory_plan(reply("nothing"), "a", "b"), Error);
}

TEST(Plan, RequiresConsecutivePoints) {
    const auto bp = stagecraft::testing::load_blueprint("murder_study");
    Gateway gw(scripted("planner/plan", R"({"trajectories": [["x"]]})"));
    EXPECT_THROW(plan_trajectories(bp, bp.acts[0], "p2", "p1", gw, "s"), Error);
    EXPECT_EQ(plan_trajectories(bp, bp.acts[0], "p1", "p2", gw, "s").candidates.size(), 1u);
}

TEST(Advancer, ParsesTargetsAndDropsOffStage) {
    const auto d = parse_advancer(reply("<think>why</think>Instruction to Hamlet: stab it.\ninstruction to Polonius: hide\n"
                                        "Instruction to all: hurry up\nInstruction to Hamlet: again"),
                                  view());
    EXPECT_FALSE(d.fallback);
    EXPECT_EQ(d.targets(), (std::vector<std::string>{"Hamlet"}));
    EXPECT_TRUE(d.broadcast());
    EXPECT_EQ(d.instructions.size(), 3u);
    EXPECT_EQ(d.warnings.size(), 1u);
    EXPECT_EQ(d.reasoning, "why");
}

TEST(Advancer, FallbackRestatesFlag) {
    const auto d = parse_advancer(reply("Instruction to Laertes: come in"), view());
    EXPECT_TRUE(d.fallback);
    ASSERT_EQ(d.instructions.size(), 1u);
    EXPECT_TRUE(d.instructions[0].target.empty());
    EXPECT_NE(d.instructions[0].text.find("The curtain is pierced"), std::string::npos);
    EXPECT_TRUE(parse_advancer(reply("rambling"), view()).fallback);
}

TEST(Advancer, BackendFailureFallsBack) {
    Gateway gw(std::make_shared<ScriptedBackend>());  // every call exhausts the script
    EXPECT_THROW(stall_recover(view(), nullptr, gw, "s"), Error);
    class Down : public Backend {
        std::string generate(const ChatRequest&) override { throw Error(Errc::backend_unavailable, "down"); }
    };
    EXPECT_TRUE(stall_recover(view(), nullptr, Gateway(std::make_shared<Down>()), "s").fallback);
}
