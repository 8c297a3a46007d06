#include <gtest/gtest.h>

#include "cases.hpp"
#include "stagecraft/blueprint.hpp"
#include "stagecraft/error.hpp"

using namespace stagecraft;
using stagecraft::testing::load_blueprint;

namespace {

bool has_violation(const std::vector<Violation>& vs, const std::string& path) {
    for (const auto& v : vs)
        if (v.path == path) return true;
    return false;
}

std::string schema_path(const nlohmann::json& doc) {
    try {
        parse_blueprint(doc);
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::schema_violation);
        return e.what();
    }
    ADD_FAILURE() << "expected schema_violation";
    return {};
}

}  // namespace

TEST(Blueprint, FixturesAreValid) {
    for (const auto* name : {"hamlet_closet", "murder_study"}) EXPECT_TRUE(validate(load_blueprint(name)).empty()) << name;
}

TEST(Blueprint, DocumentRoundTripIsExact) {
    for (const auto* name : {"hamlet_closet", "murder_study"}) {
        const auto bp = load_blueprint(name);
        const auto text = serialize(bp);
        const auto again = parse_blueprint(std::string_view(text));
        EXPECT_EQ(again, bp);
        EXPECT_EQ(serialize(again), text);
    }
}

TEST(Blueprint, UnknownFieldsAreCarried) {
    auto doc = to_document(load_blueprint("hamlet_closet"));
    doc["director_notes"] = "keep it tense";
    doc["actors"][0]["voice"] = "baritone";
    doc["scenes"][0]["props"][0]["weight"] = 2;
    const auto bp = parse_blueprint(doc);
    const auto out = to_document(bp);
    EXPECT_EQ(out["director_notes"], "keep it tense");
    EXPECT_EQ(out["actors"][0]["voice"], "baritone");
    EXPECT_EQ(out["scenes"][0]["props"][0]["weight"], 2);
}

TEST(Blueprint, RelationshipShorthandAndExternalMarker) {
    const auto bp = load_blueprint("hamlet_closet");
    const auto* hamlet = bp.find_actor("Hamlet");
    ASSERT_NE(hamlet, nullptr);
    EXPECT_TRUE(hamlet->relationships.at("Claudius").external);
    EXPECT_FALSE(hamlet->relationships.at("Gertrude").external);
}

TEST(Blueprint, SchemaErrorsNameThePath) {
    auto doc = to_document(load_blueprint("hamlet_closet"));
    auto bad = doc;
    bad["actors"][1]["name"] = 7;
    EXPECT_NE(schema_path(bad).find("$.actors[1]"), std::string::npos);

    bad = doc;
    bad["schema_version"] = 2;
    EXPECT_NE(schema_path(bad).find("schema_version"), std::string::npos);

    bad = doc;
    bad["acts"] = nlohmann::json::array();
    EXPECT_NE(schema_path(bad).find("$.acts"), std::string::npos);

    bad = doc;
    bad["scenes"][0]["props"][0]["placement"] = {{"somewhere", "x"}};
    EXPECT_NE(schema_path(bad).find("placement"), std::string::npos);

    EXPECT_THROW(parse_blueprint(std::string_view("{oops")), Error);
}

TEST(Validate, ReportsEveryStructuralProblem) {
    auto bp = load_blueprint("hamlet_closet");
    bp.actors[0].relationships["Ophelia"] = {"his love", false};
    bp.acts[0].points[0].entry_list.push_back("Laertes");
    bp.acts[0].points[1].flag.description = "  ";
    bp.acts[0].end_point_id = "p1";
    bp.scenes[0].props[2].placement.relative_to = "lamp";
    const auto vs = validate(bp);
    EXPECT_TRUE(has_violation(vs, "actors[0].relationships.Ophelia"));
    EXPECT_TRUE(has_violation(vs, "acts[0].points[0].entry_list[3]"));
    EXPECT_TRUE(has_violation(vs, "acts[0].points[1].flag.description"));
    EXPECT_TRUE(has_violation(vs, "acts[0].end_point_id"));
    EXPECT_TRUE(has_violation(vs, "scenes[0].props[2].placement.relative_to"));
    EXPECT_EQ(vs.size(), 5u);
}

TEST(Validate, DetectsPlacementCycles) {
    auto bp = load_blueprint("hamlet_closet");
    bp.scenes[0].props[1].placement = {std::string("candle"), "behind the candle"};
    const auto vs = validate(bp);
    EXPECT_TRUE(has_violation(vs, "scenes[0].props[1].placement.relative_to"));
    EXPECT_TRUE(has_violation(vs, "scenes[0].props[2].placement.relative_to"));
}

TEST(Validate, DuplicatesAndUnknownScenes) {
    auto bp = load_blueprint("murder_study");
    bp.actors.push_back(bp.actors[0]);
    bp.scenes[0].props.push_back(bp.scenes[0].props[0]);
    bp.acts[0].scene_ids.push_back("garden");
    const auto vs = validate(bp);
    EXPECT_TRUE(has_violation(vs, "actors[4].name"));
    EXPECT_TRUE(has_violation(vs, "scenes[0].props[4].id"));
    EXPECT_TRUE(has_violation(vs, "acts[0].scene_ids[1]"));
}

TEST(Validate, IsTotalOnEmptyBlueprint) {
    const auto vs = validate(NarrativeBlueprint{});
    EXPECT_TRUE(has_violation(vs, "actors"));
    EXPECT_TRUE(has_violation(vs, "acts"));
}
