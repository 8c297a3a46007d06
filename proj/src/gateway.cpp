#include "stagecraft/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(Role role) noexcept {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
        case Role::tool: return "tool";
    }
    return "user";
}

json ToolSpec::schema() const {
    json props = json::object();
    json required = json::array();
    for (const auto& p : parameters) {
        json prop = {{"type", p.type}};
        if (!p.choices.empty()) prop["enum"] = p.choices;
        props[p.name] = prop;
        if (p.required) required.push_back(p.name);
    }
    return {{"name", name},
            {"description", description},
            {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}};
}

void ChatRequest::validate() const {
    if (messages.empty()) throw Error(Errc::precondition, "request has no messages");
    for (std::size_t i = 1; i < messages.size(); ++i) {
        if (messages[i].role == Role::assistant && messages[i - 1].role == Role::assistant)
            throw Error(Errc::precondition, "consecutive assistant messages");
    }
    std::set<std::string> names;
    for (const auto& t : tool_specs) {
        if (!names.insert(t.name).second) throw Error(Errc::precondition, "duplicate tool name " + t.name);
    }
    if (!sampling.greedy && sampling.temperature < 0.0)
        throw Error(Errc::precondition, "negative sampling temperature");
    if (timeout.count() <= 0.0) throw Error(Errc::precondition, "timeout must be positive");
}

ModelReply parse_reply(std::string raw, Seconds latency) {
    ModelReply reply;
    auto think = extract_think(raw);
    auto calls = parse_tool_calls(raw);
    reply.thinking = std::move(think.thinking);
    reply.warnings = std::move(think.warnings);
    reply.tool_calls = std::move(calls.calls);
    reply.malformed_calls = std::move(calls.malformed);
    reply.visible = visible_text(raw);
    reply.raw_text = std::move(raw);
    reply.latency = latency < Seconds{0} ? Seconds{0} : latency;
    return reply;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::vector<Entry> entries) : entries_(std::move(entries)) {}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_jsonl_text(std::string_view text) {
    auto backend = std::make_shared<ScriptedBackend>();
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty() || trim(line).starts_with("//")) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("role") || !j.contains("text"))
            throw Error(Errc::schema_violation, "fixture line " + std::to_string(lineno) +
                                                    ": expected object with role and text");
        Entry e;
        e.role = j["role"].get<std::string>();
        if (j.contains("session")) e.session = j["session"].get<std::string>();
        e.text = j["text"].get<std::string>();
        e.times = j.value("times", 1);
        e.repeat = j.value("repeat", false);
        if (e.times < 1) throw Error(Errc::schema_violation, "fixture line " + std::to_string(lineno) + ": times < 1");
        backend->add(std::move(e));
    }
    return backend;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::backend_unavailable, "cannot open fixture file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return from_jsonl_text(buf.str());
}

void ScriptedBackend::add(Entry entry) {
    std::lock_guard lock(mutex_);
    entries_.push_back(std::move(entry));
}

const ScriptedBackend::Entry* ScriptedBackend::lookup(const std::string& role,
                                                      const std::optional<std::string>& session,
                                                      int index) const {
    int cursor = 0;
    for (const auto& e : entries_) {
        if (e.role != role || e.session != session) continue;
        if (e.repeat) return &e;
        if (index < cursor + e.times) return &e;
        cursor += e.times;
    }
    return nullptr;
}

std::string ScriptedBackend::generate(const ChatRequest& request) {
    std::lock_guard lock(mutex_);
    log_.push_back(request);
    const auto key = std::make_pair(request.agent_role, request.session_id);
    const int index = counters_[key]++;

    bool has_specific = false;
    for (const auto& e : entries_) {
        if (e.role == request.agent_role && e.session == request.session_id) {
            has_specific = true;
            break;
        }
    }
    const Entry* hit = has_specific ? lookup(request.agent_role, request.session_id, index)
                                    : lookup(request.agent_role, std::nullopt, index);
    if (hit == nullptr)
        throw Error(Errc::script_exhausted, "no scripted reply for " + request.agent_role + " (session " +
                                                request.session_id + ", call " + std::to_string(index) + ")");
    return hit->text;
}

int ScriptedBackend::calls_for(const std::string& role) const {
    std::lock_guard lock(mutex_);
    int n = 0;
    for (const auto& [key, count] : counters_)
        if (key.first == role) n += count;
    return n;
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mutex_);
    return log_;
}

// ---------------------------------------------------------------------------
// HttpBackend

std::string render_tools_block(const std::vector<ToolSpec>& specs) {
    std::string out = "<tools>";
    for (const auto& s : specs) {
        out += '\n';
        out += json({{"type", "function"}, {"function", s.schema()}}).dump();
    }
    out += "\n</tools>";
    return out;
}

HttpBackend::HttpBackend(Config config) : config_(std::move(config)) {}

std::optional<HttpBackend::Config> HttpBackend::config_from_env() {
    const char* url = std::getenv("STAGECRAFT_LLM_URL");
    if (url == nullptr || *url == '\0') return std::nullopt;
    Config c;
    c.endpoint = url;
    if (const char* key = std::getenv("STAGECRAFT_LLM_API_KEY")) c.api_key = key;
    if (const char* model = std::getenv("STAGECRAFT_LLM_MODEL")) c.model = model;
    return c;
}

std::string HttpBackend::generate(const ChatRequest& request) {
    // Split "scheme://host[:port]/prefix" into the client base and the path prefix.
    const auto scheme_end = config_.endpoint.find("://");
    const auto path_start =
        config_.endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    const std::string base = config_.endpoint.substr(0, path_start);
    std::string prefix = path_start == std::string::npos ? "" : config_.endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    json messages = json::array();
    std::string system = request.system_text;
    if (!request.tool_specs.empty()) system += "\n" + render_tools_block(request.tool_specs);
    if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
    for (const auto& m : request.messages)
        messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.text}});

    json body = {{"model", config_.model}, {"messages", messages}};
    body["temperature"] = request.sampling.greedy ? 0.0 : request.sampling.temperature;

    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout).count();
    client.set_read_timeout(std::max<long long>(1, secs), 0);
    client.set_connection_timeout(10, 0);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout)
            throw Error(Errc::backend_timeout, "chat completion timed out");
        throw Error(Errc::backend_unavailable, "chat completion failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200)
        throw Error(Errc::backend_unavailable, "chat completion returned HTTP " + std::to_string(res->status));
    auto reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded()) throw Error(Errc::backend_unavailable, "chat completion returned non-JSON body");
    try {
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw Error(Errc::backend_unavailable, "chat completion reply has no message content");
    }
}

// ---------------------------------------------------------------------------

ModelReply Gateway::complete(const ChatRequest& request) const {
    request.validate();
    for (int attempt = 0;; ++attempt) {
        const auto start = std::chrono::steady_clock::now();
        try {
            auto raw = backend_->generate(request);
            return parse_reply(std::move(raw), std::chrono::steady_clock::now() - start);
        } catch (const Error& e) {
            if (e.code() != Errc::backend_timeout || attempt >= 1) throw;
        }
    }
}

ChatRequest make_request(std::string agent_role, std::string session_id, std::string system_text,
                         std::string user_text) {
    ChatRequest r;
    r.agent_role = std::move(agent_role);
    r.session_id = std::move(session_id);
    r.system_text = std::move(system_text);
    r.messages.push_back({Role::user, std::move(user_text)});
    return r;
}

}  // namespace stagecraft
