#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "cases.hpp"
#include "stagecraft/config.hpp"
#include "stagecraft/error.hpp"

using namespace stagecraft;

TEST(Config, DefaultsAndJudgeFallback) {
    const auto c = AppConfig::from_json({{"backend", {{"kind", "scripted"}, {"script", "x.jsonl"}}},
                                         {"stage", {{"stall_threshold", 4}}},
                                         {"server", {{"port", 9000}}}});
    EXPECT_EQ(c.backend.kind, "scripted");
    EXPECT_EQ(c.judge.script, "x.jsonl");
    EXPECT_EQ(c.stage.stall_threshold, 4);
    EXPECT_EQ(c.stage.turn_budget, 200);
    EXPECT_EQ(c.server.port, 9000);
    EXPECT_EQ(c.search.kind, "none");
    EXPECT_EQ(AppConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, WrongTypesAreSchemaViolations) {
    try {
        AppConfig::from_json({{"server", {{"port", "eighty"}}}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::schema_violation);
    }
}

TEST(Config, Factories) {
    EXPECT_THROW(make_backend(BackendSettings::from_json({{"kind", "scripted"}})), Error);
    EXPECT_THROW(make_backend(BackendSettings::from_json({{"kind", "carrier-pigeon"}})), Error);
    BackendSettings s;
    s.kind = "scripted";
    s.script = stagecraft::testing::fixture("scripts/case1.jsonl").string();
    EXPECT_NE(make_backend(s), nullptr);

    EXPECT_EQ(make_search({}), nullptr);
    SearchSettings fs{"fixture", stagecraft::testing::fixture("search_fixture.json").string(), ""};
    auto search = make_search(fs);
    ASSERT_NE(search, nullptr);
    EXPECT_EQ(search->search("Mara").size(), 1u);
    EXPECT_TRUE(search->search("Nobody").empty());
    EXPECT_THROW(make_search({"bing", "", ""}), Error);
}

TEST(Search, MissingFixtureIsUnavailable) {
    try {
        FixtureSearch::from_file("/nonexistent.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::search_unavailable);
    }
}

TEST(Search, WikipediaResponseParsing) {
    const auto hits = WikipediaSearch::parse_response(
        {{"query", {{"search", {{{"title", "Hamlet"}, {"snippet", "a <span class=\"x\">tragedy</span>"}},
                                {{"title", "Hamlet (film)"}, {"snippet", "film"}}}}}}},
        1);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].snippet, "a tragedy");
    EXPECT_TRUE(WikipediaSearch::parse_response(nlohmann::json::object(), 3).empty());
}

TEST(Search, WikipediaClientAgainstLocalServer) {
    httplib::Server server;
    server.Get("/w/api.php", [](const httplib::Request& req, httplib::Response& res) {
        const nlohmann::json body = {{"query", {{"search", {{{"title", req.get_param_value("srsearch")}, {"snippet", "s"}}}}}}};
        res.set_content(body.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    WikipediaSearch wiki("http://127.0.0.1:" + std::to_string(port));
    const auto hits = wiki.search("Polonius");
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].title, "Polonius");
    server.stop();
    t.join();

    try {
        wiki.search("again");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::search_unavailable);
    }
}
