#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "stagecraft/error.hpp"
#include "stagecraft/gateway.hpp"

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

class FlakyBackend : public Backend {
public:
    explicit FlakyBackend(int failures) : failures_(failures) {}
    std::string generate(const ChatRequest&) override {
        ++calls;
        if (failures_-- > 0) throw Error(Errc::backend_timeout, "slow");
        return "ok";
    }
    int calls = 0;

private:
    int failures_;
};

}  // namespace

TEST(ChatRequest, ValidateRejectsBadShapes) {
    auto r = make_request("a", "s", "sys", "hi");
    EXPECT_NO_THROW(r.validate());

    auto empty = r;
    empty.messages.clear();
    EXPECT_EQ(code_of([&] { empty.validate(); }), Errc::precondition);

    auto twice = r;
    twice.messages.push_back({Role::assistant, "a"});
    twice.messages.push_back({Role::assistant, "b"});
    EXPECT_EQ(code_of([&] { twice.validate(); }), Errc::precondition);

    auto dup = r;
    dup.tool_specs = {{"t", "", {}}, {"t", "", {}}};
    EXPECT_EQ(code_of([&] { dup.validate(); }), Errc::precondition);

    auto hot = r;
    hot.sampling.greedy = false;
    hot.sampling.temperature = -1;
    EXPECT_EQ(code_of([&] { hot.validate(); }), Errc::precondition);
}

TEST(Scripted, RepliesArePureInRoleSessionAndIndex) {
    auto backend = ScriptedBackend::from_jsonl_text(
        R"({"role": "a", "text": "one", "times": 2})"
        "\n"
        R"({"role": "a", "text": "two"})"
        "\n"
        R"({"role": "a", "session": "s2", "text": "special", "repeat": true})"
        "\n"
        R"({"role": "b", "text": "always", "repeat": true})"
        "\n");
    auto req = make_request("a", "s1", "", "x");
    EXPECT_EQ(backend->generate(req), "one");
    EXPECT_EQ(backend->generate(req), "one");
    EXPECT_EQ(backend->generate(req), "two");
    EXPECT_EQ(code_of([&] { backend->generate(req); }), Errc::script_exhausted);

    auto req2 = make_request("a", "s2", "", "x");
    for (int i = 0; i < 5; ++i) EXPECT_EQ(backend->generate(req2), "special");
    auto b = make_request("b", "zzz", "", "x");
    for (int i = 0; i < 5; ++i) EXPECT_EQ(backend->generate(b), "always");
    EXPECT_EQ(backend->calls_for("a"), 9);
    EXPECT_EQ(backend->requests().size(), 14u);
}

TEST(Scripted, BadFixtureLinesAreSchemaViolations) {
    EXPECT_EQ(code_of([] { ScriptedBackend::from_jsonl_text("{not json}\n"); }), Errc::schema_violation);
    EXPECT_EQ(code_of([] { ScriptedBackend::from_jsonl_text(R"({"role":"a","text":"x","times":0})"); }),
              Errc::schema_violation);
    EXPECT_EQ(code_of([] { ScriptedBackend::from_jsonl("/nonexistent/file.jsonl"); }), Errc::backend_unavailable);
}

TEST(Gateway, ParsesThinkingAndCalls) {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->add({"r", std::nullopt,
                  R"(<think>hmm</think>Fine. <tool_call>{"name": "respond_fast", "arguments": {}}</tool_call>)", 1,
                  false});
    Gateway gw(backend);
    const auto reply = gw.complete(make_request("r", "s", "", "x"));
    EXPECT_EQ(reply.thinking.value_or(""), "hmm");
    EXPECT_EQ(reply.visible, "Fine.");
    ASSERT_EQ(reply.tool_calls.size(), 1u);
    EXPECT_EQ(reply.tool_calls[0].name, "respond_fast");
}

TEST(Gateway, RetriesOnceOnTimeout) {
    auto once = std::make_shared<FlakyBackend>(1);
    EXPECT_EQ(Gateway(once).complete(make_request("r", "s", "", "x")).visible, "ok");
    EXPECT_EQ(once->calls, 2);

    auto twice = std::make_shared<FlakyBackend>(2);
    EXPECT_EQ(code_of([&] { Gateway(twice).complete(make_request("r", "s", "", "x")); }), Errc::backend_timeout);
    EXPECT_EQ(twice->calls, 2);
}

TEST(ToolSpec, SchemaListsRequiredParametersAndChoices) {
    ToolSpec spec{"take_action", "act", {{"verb", "string", true, {}}, {"object", "string", true, {"dagger"}}}};
    const auto s = spec.schema();
    EXPECT_EQ(s["name"], "take_action");
    EXPECT_EQ(s["parameters"]["required"].size(), 2u);
    EXPECT_EQ(s["parameters"]["properties"]["object"]["enum"][0], "dagger");
    EXPECT_NE(render_tools_block({spec}).find("<tools>"), std::string::npos);
}

TEST(HttpBackend, TalksChatCompletions) {
    httplib::Server server;
    nlohmann::json seen;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen = nlohmann::json::parse(req.body);
        seen["auth"] = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"Hello"}}]})", "application/json");
    });
    server.Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    HttpBackend backend({base + "/v1", "secret", "m"});
    auto req = make_request("r", "s", "system text", "hi");
    req.tool_specs = {{"respond_fast", "", {}}};
    EXPECT_EQ(backend.generate(req), "Hello");
    EXPECT_EQ(seen["model"], "m");
    EXPECT_EQ(seen["auth"], "Bearer secret");
    EXPECT_EQ(seen["messages"][0]["role"], "system");
    EXPECT_NE(seen["messages"][0]["content"].get<std::string>().find("<tools>"), std::string::npos);
    EXPECT_EQ(seen["messages"][1]["content"], "hi");

    HttpBackend bad({base + "/bad", "", "m"});
    EXPECT_EQ(code_of([&] { bad.generate(req); }), Errc::backend_unavailable);

    server.stop();
    t.join();
}
