#include <algorithm>

#include <gtest/gtest.h>

#include "cases.hpp"
#include "stagecraft/error.hpp"
#include "stagecraft/planning.hpp"

using namespace stagecraft;
using namespace stagecraft::testing;

namespace {

const std::string kTopic = "A lighthouse keeper hides a shipwrecked stranger from the harbour constable during a storm.";
const char* kReject = R"({"approved": false, "issues": ["flat"], "suggestions": ["sharpen the conflict"]})";

struct Planner {
    std::shared_ptr<ScriptedBackend> backend;
    Gateway gateway;
    AuditTrail audit;
    PlanningContext ctx;

    explicit Planner(std::shared_ptr<ScriptedBackend> b) : backend(std::move(b)), gateway(backend) {
        ctx.gateway = &gateway;
        ctx.audit = &audit;
    }
    explicit Planner(const std::string& script) : Planner(ScriptedBackend::from_jsonl(fixture("scripts/" + script))) {}
};

class DownSearch : public SearchProvider {
public:
    std::vector<SearchHit> search(const std::string&) override { throw Error(Errc::search_unavailable, "offline"); }
    std::string name() const override { return "down"; }
};

std::ptrdiff_t position(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) - v.begin();
}

}  // namespace

TEST(ReviewLoop, RejectingForeverIsForcedAtRoundSix) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"reviewer/plot", std::nullopt, kReject, 1, true});
    Planner p(backend);
    int revisions = 0;
    const auto out = review_loop<int>(
        0, ReviewKind::plot, "t", p.ctx, [](const int& v) { return nlohmann::json(v); },
        [&](const int& v, const ReviewResult& r) {
            EXPECT_EQ(r.suggestions.size(), 1u);
            ++revisions;
            return v + 1;
        });
    EXPECT_EQ(out.rounds, kMaxReviewRounds);
    EXPECT_EQ(out.artifact, 5);
    EXPECT_EQ(revisions, 5);
    EXPECT_TRUE(out.reviews.back().approved);
    EXPECT_TRUE(out.reviews.back().forced);
    EXPECT_EQ(backend->calls_for("reviewer/plot"), 5);
}

TEST(ReviewLoop, StopsAtFirstApproval) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"reviewer/actors", std::nullopt, kReject, 1, false});
    backend->add({"reviewer/actors", std::nullopt, R"({"approved": true})", 1, false});
    Planner p(backend);
    const auto out = review_loop<int>(
        0, ReviewKind::actors, "t", p.ctx, [](const int& v) { return nlohmann::json(v); },
        [](const int& v, const ReviewResult&) { return v + 1; });
    EXPECT_EQ(out.rounds, 2);
    EXPECT_FALSE(out.reviews.back().forced);
}

TEST(Review, RejectionNeedsOneToThreeSuggestions) {
    auto parse = [](const std::string& raw) { return parse_review(parse_reply(raw, Seconds{0}), 1); };
    EXPECT_THROW(parse(R"({"approved": false, "suggestions": []})"), Error);
    EXPECT_THROW(parse(R"({"approved": false, "suggestions": ["a","b","c","d"]})"), Error);
    EXPECT_THROW(parse(R"({"approved": "yes"})"), Error);
    EXPECT_EQ(parse(R"(```json
{"approved": false, "suggestions": ["a","b","c"]}
```)")
                  .suggestions.size(),
              3u);
}

TEST(Review, UnusableReplyIsRepairedOnce) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"reviewer/plot", std::nullopt, "looks fine to me", 1, false});
    backend->add({"reviewer/plot", std::nullopt, R"({"approved": true})", 1, false});
    Planner p(backend);
    EXPECT_TRUE(review_once(nlohmann::json::array(), ReviewKind::plot, "t", 1, p.ctx).approved);
    EXPECT_NE(backend->requests()[1].messages[0].text.find("could not be used"), std::string::npos);
    EXPECT_EQ(p.audit.stages(), (std::vector<std::string>{"repair"}));

    auto hopeless = std::make_shared<ScriptedBackend>();
    hopeless->add({"reviewer/plot", std::nullopt, "no", 1, true});
    Planner q(hopeless);
    EXPECT_THROW(review_once(nlohmann::json::array(), ReviewKind::plot, "t", 1, q.ctx), Error);
    EXPECT_EQ(hopeless->calls_for("reviewer/plot"), 2);
}

TEST(PlanTopic, FixtureRunProducesValidBlueprint) {
    Planner p("planning_topic.jsonl");
    auto search = FixtureSearch::from_file(fixture("search_fixture.json"));
    p.ctx.search = &search;
    const auto bp = plan_topic(kTopic, p.ctx);
    EXPECT_TRUE(validate(bp).empty());
    ASSERT_EQ(bp.actors.size(), 3u);
    EXPECT_NE(bp.actors[1].persona.find("quick to lie"), std::string::npos);  // revised after the rejection
    EXPECT_TRUE(bp.actors[1].relationships.at("The Captain").external);
    ASSERT_EQ(bp.acts.size(), 1u);
    const auto& points = bp.acts[0].points;
    ASSERT_EQ(points.size(), 3u);
    EXPECT_EQ(bp.acts[0].end_point_id, points.back().id);
    EXPECT_NE(points.back().flag.description.find("arrest the ship's captain"), std::string::npos);
    EXPECT_EQ(points[0].id, "p1");
    EXPECT_TRUE(bp.extra.contains("synopsis"));
    EXPECT_EQ(bp.scenes[0].find_prop("manifest")->placement.relative_to.value_or(""), "lamp");
}

TEST(PlanTopic, AuditShowsBackwardOrdering) {
    Planner p("planning_topic.jsonl");
    plan_topic(kTopic, p.ctx);
    const auto stages = p.audit.stages();
    EXPECT_LT(position(stages, "plot/end"), position(stages, "plot/points"));
    EXPECT_LT(position(stages, "review/actors"), position(stages, "plot/end"));
    EXPECT_LT(position(stages, "plot/points"), position(stages, "scenes"));
    EXPECT_EQ(stages.back(), "blueprint");
    EXPECT_EQ(std::count(stages.begin(), stages.end(), "review/actors"), 2);
}

TEST(ActorList, DeduplicatesAndRejectsEmptyTopic) {
    Planner p("planning_topic.jsonl");
    EXPECT_EQ(generate_actor_list(kTopic, p.ctx), (std::vector<std::string>{"Mara", "Ilya", "Constable Reed"}));
    EXPECT_THROW(generate_actor_list("  ", p.ctx), Error);
}

TEST(ActorProfiles, SearchOutageDegrades) {
    Planner p("planning_topic.jsonl");
    DownSearch down;
    p.ctx.search = &down;
    const auto names = generate_actor_list(kTopic, p.ctx);
    EXPECT_EQ(generate_actor_profiles(kTopic, names, p.ctx).size(), 3u);
    const auto entries = p.audit.entries();
    const auto it = std::find_if(entries.begin(), entries.end(), [](const auto& e) { return e["stage"] == "search"; });
    ASSERT_NE(it, entries.end());
    EXPECT_TRUE((*it)["detail"]["degraded"].get<bool>());
}

TEST(ActorProfiles, MissingProfileIsParseFailure) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"actor_designer/profiles", std::nullopt,
                  R"([{"name": "A", "persona": "p", "initial_goal": "g"}])", 1, true});
    Planner p(backend);
    try {
        generate_actor_profiles("t", {"A", "B"}, p.ctx);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::parse_failure);
    }
}

TEST(Scenes, DanglingRelativeParent) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"scene_designer", std::nullopt,
                  R"([{"id": "s", "environment_description": "e", "props": [
                      {"id": "a", "name": "a", "placement": {"relative_to": "ghost", "text": "on"}}]}])",
                  1, true});
    Planner p(backend);
    try {
        generate_scene_props("t", PlotDraft{}, p.ctx);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::dangling_relative_parent);
    }
}

TEST(Literary, HeadingSplit) {
    Planner p("planning_work.jsonl");
    const auto segments = segment_literary_work(read_fixture("literary_work.txt"), p.ctx);
    ASSERT_EQ(segments.size(), 2u);
    EXPECT_EQ(segments[0].rfind("Chapter 1", 0), 0u);
    EXPECT_EQ(p.backend->calls_for("segmenter"), 0);
}

TEST(Literary, ModelSplitWithoutHeadings) {
    Planner p("planning_work.jsonl");
    const auto segments = segment_literary_work("A storm. A rescue. A knock at the door.", p.ctx);
    EXPECT_EQ(segments.size(), 2u);
    EXPECT_EQ(p.backend->calls_for("segmenter"), 1);
    EXPECT_THROW(segment_literary_work(" ", p.ctx), Error);
}

TEST(Literary, OneActPerSegment) {
    Planner p("planning_work.jsonl");
    const auto bp = plan_literary_work("The Keeper of Gull Rock", read_fixture("literary_work.txt"), p.ctx);
    EXPECT_TRUE(validate(bp).empty());
    ASSERT_EQ(bp.acts.size(), 2u);
    EXPECT_EQ(bp.acts[0].scene_ids, (std::vector<std::string>{"act1-lighthouse"}));
    EXPECT_EQ(bp.acts[1].scene_ids, (std::vector<std::string>{"act2-lighthouse"}));
    EXPECT_EQ(bp.source.kind, Source::Kind::literary_work);
    EXPECT_EQ(bp.source.title, "The Keeper of Gull Rock");
}
