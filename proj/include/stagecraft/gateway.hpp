#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagecraft/markup.hpp"

namespace stagecraft {

using Seconds = std::chrono::duration<double>;

enum class Role { system, user, assistant, tool };

std::string_view to_string(Role role) noexcept;

struct Message {
    Role role = Role::user;
    std::string text;
};

struct ToolParam {
    std::string name;
    std::string type = "string";
    bool required = true;
    std::vector<std::string> choices;  ///< optional enumeration of allowed values
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ToolParam> parameters;

    nlohmann::json schema() const;
};

struct SamplingPolicy {
    bool greedy = true;
    double temperature = 0.0;
};

struct ChatRequest {
    /// Agent role plus session form the routing key for scripted replay.
    std::string agent_role;
    std::string session_id;
    std::string system_text;
    std::vector<Message> messages;
    std::vector<ToolSpec> tool_specs;
    SamplingPolicy sampling;
    Seconds timeout{60.0};

    /// Throws Errc::precondition on empty messages, consecutive assistant turns,
    /// duplicate tool names or a negative temperature.
    void validate() const;
};

struct ModelReply {
    std::string raw_text;
    std::string visible;
    std::optional<std::string> thinking;
    std::vector<ToolCall> tool_calls;
    std::vector<MalformedCall> malformed_calls;
    std::vector<std::string> warnings;
    Seconds latency{0.0};
};

/// Builds a ModelReply (thinking, calls, visible text) from raw backend output.
ModelReply parse_reply(std::string raw, Seconds latency);

class Backend {
public:
    virtual ~Backend() = default;
    /// Returns raw reply text. Throws Error{backend_timeout|backend_unavailable|script_exhausted}.
    virtual std::string generate(const ChatRequest& request) = 0;
};

/// Deterministic backend replaying fixture replies.
///
/// Fixture file: JSONL, one object per reply with keys `role` (agent role), optional
/// `session` (omitted = any session), `text`, optional `times` (the entry answers that
/// many consecutive calls) and optional `repeat` (answers every remaining call). The
/// reply for a call is a pure function of (role, session, per-key call index).
class ScriptedBackend : public Backend {
public:
    struct Entry {
        std::string role;
        std::optional<std::string> session;
        std::string text;
        int times = 1;
        bool repeat = false;
    };

    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<Entry> entries);

    static std::shared_ptr<ScriptedBackend> from_jsonl(const std::filesystem::path& path);
    static std::shared_ptr<ScriptedBackend> from_jsonl_text(std::string_view text);

    void add(Entry entry);
    std::string generate(const ChatRequest& request) override;

    /// Number of calls served so far for a role (all sessions).
    int calls_for(const std::string& role) const;
    /// Requests received, in arrival order.
    std::vector<ChatRequest> requests() const;

private:
    const Entry* lookup(const std::string& role, const std::optional<std::string>& session,
                        int index) const;

    std::vector<Entry> entries_;
    std::map<std::pair<std::string, std::string>, int> counters_;
    std::vector<ChatRequest> log_;
    mutable std::mutex mutex_;
};

/// OpenAI-style chat-completions client. Tools are embedded in the system text with the
/// `<tools>` convention and calls are parsed back out of the reply text.
class HttpBackend : public Backend {
public:
    struct Config {
        std::string endpoint;  ///< e.g. https://api.example.com/v1
        std::string api_key;
        std::string model = "gpt-4o";
    };

    explicit HttpBackend(Config config);
    /// Reads STAGECRAFT_LLM_URL, STAGECRAFT_LLM_API_KEY and STAGECRAFT_LLM_MODEL.
    static std::optional<Config> config_from_env();

    std::string generate(const ChatRequest& request) override;

private:
    Config config_;
};

/// Renders the `<tools>` block advertising tool signatures.
std::string render_tools_block(const std::vector<ToolSpec>& specs);

class Gateway {
public:
    explicit Gateway(std::shared_ptr<Backend> backend) : backend_(std::move(backend)) {}

    /// Validates, dispatches and parses. One retry on backend-timeout, then rethrows.
    ModelReply complete(const ChatRequest& request) const;

    Backend& backend() const { return *backend_; }

private:
    std::shared_ptr<Backend> backend_;
};

/// Convenience: a single-user-message request.
ChatRequest make_request(std::string agent_role, std::string session_id, std::string system_text,
                         std::string user_text);

}  // namespace stagecraft
