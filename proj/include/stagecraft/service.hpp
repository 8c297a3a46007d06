#pragma once

// Live sessions behind an HTTP API with a server-sent event stream.
//
// Files per session in the data directory:
//   <id>.session.json   descriptor, blueprint, roster and stage config
//   <id>.jsonl          transcript, one event per line, appended as events happen

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/error.hpp"
#include "stagecraft/gateway.hpp"
#include "stagecraft/stage.hpp"
#include "stagecraft/transcript.hpp"

namespace httplib {
class Server;
}

namespace stagecraft {

enum class DescriptorStatus { planning, performing, completed, aborted };
std::string_view to_string(DescriptorStatus s) noexcept;

struct SessionDescriptor {
    std::string session_id;
    std::string blueprint_path;  ///< where the blueprint came from, if a file
    std::string blueprint_hash;
    Roster roster;
    DescriptorStatus status = DescriptorStatus::planning;
    std::string created_at;  ///< UTC, ISO 8601
    int turn_budget = 0;
    bool incomplete = false;  ///< ended on the turn budget rather than the final point

    nlohmann::json to_json() const;
};

struct PlayerInput {
    std::string session_id;
    std::string actor;
    std::string raw_text;
    std::int64_t client_seq = 0;
};

/// Result of an input submission. `first_seq`/`last_seq` cover the events the turn
/// produced; they are absent while the turn is still queued.
struct InputAck {
    bool duplicate = false;
    bool executed = false;
    std::optional<std::int64_t> first_seq;
    std::optional<std::int64_t> last_seq;

    nlohmann::json to_json() const;
};

/// Human turns queued per actor with an idempotency key; one pending turn per actor.
class TrackedInput : public InputSource {
public:
    using ConsumeHook = std::function<void(const std::string& actor, std::int64_t client_seq)>;

    explicit TrackedInput(std::size_t capacity = 1) : capacity_(capacity) {}
    void set_hook(ConsumeHook hook);

    /// False when the actor already has `capacity` turns pending.
    bool push(const std::string& actor, std::string raw_text, std::int64_t client_seq);
    /// Blocks until some actor has a pending turn or the timeout elapses.
    bool wait_any(std::chrono::milliseconds timeout);
    void interrupt();

    std::optional<std::string> peek(const std::string& actor, std::chrono::milliseconds wait) override;
    void consume(const std::string& actor) override;

private:
    struct Pending {
        std::string text;
        std::int64_t client_seq;
    };
    std::size_t capacity_;
    std::map<std::string, std::deque<Pending>> queues_;
    ConsumeHook hook_;
    bool interrupted_ = false;
    std::uint64_t generation_ = 0;
    std::mutex mutex_;
    std::condition_variable cv_;
};

struct ManagerOptions {
    std::filesystem::path data_dir = "sessions";
    StageConfig default_config;
    /// How long a runner idles after a round with no turn before stepping again.
    std::chrono::milliseconds idle_wait{2000};
    /// How long submit_input waits for its turn to execute before acknowledging as queued.
    std::chrono::milliseconds ack_wait{10000};
    /// Start a background runner on start(); off means callers drive step() themselves.
    bool run_async = true;
};

class SessionManager {
public:
    SessionManager(std::shared_ptr<const Gateway> gateway, ManagerOptions options);
    ~SessionManager();
    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    /// Throws validation_failure or roster_mismatch. An empty roster follows the
    /// blueprint's controller markers.
    SessionDescriptor create(const NarrativeBlueprint& blueprint, Roster roster = {},
                             std::optional<StageConfig> config = std::nullopt, std::string blueprint_path = {});
    /// planning -> performing. Throws session_not_performing from any other status.
    SessionDescriptor start(const std::string& id);
    /// Throws unknown_session, actor_not_human, session_not_performing, not_your_turn.
    InputAck submit_input(const PlayerInput& input);
    void abort(const std::string& id, const std::string& reason);

    SessionDescriptor descriptor(const std::string& id) const;
    std::vector<SessionDescriptor> list() const;
    std::shared_ptr<EventLog> events(const std::string& id) const;
    std::shared_ptr<Session> session(const std::string& id) const;
    std::filesystem::path transcript_path(const std::string& id) const;
    StageConfig config(const std::string& id) const;
    const StageConfig& default_config() const { return options_.default_config; }

    /// Reloads every persisted session. Performing sessions are restored from their
    /// transcripts and, with `resume`, their runners restart.
    std::size_t recover(bool resume = true);

    /// Blocks until the session's runner exits or the timeout elapses.
    bool wait(const std::string& id, std::chrono::milliseconds timeout);
    /// One round for a session without a background runner.
    bool step(const std::string& id);

private:
    struct Entry;
    std::shared_ptr<Entry> find(const std::string& id) const;
    void persist(const Entry& e) const;
    void launch(const std::shared_ptr<Entry>& e);
    void runner(std::shared_ptr<Entry> e);
    void after_round(Entry& e);
    void sync_status(Entry& e);
    std::string fresh_id();

    std::shared_ptr<const Gateway> gateway_;
    ManagerOptions options_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    mutable std::mutex mutex_;
};

/// HTTP status for an error code.
int http_status(Errc code);

/// One server-sent event frame: `id`, `event` and `data` lines then a blank line.
std::string sse_frame(const TranscriptEvent& event);

/// Parses frames produced by sse_frame back into events.
std::vector<TranscriptEvent> parse_sse(std::string_view body);

/// Registers the endpoints on `server`:
///   POST /sessions                     {"blueprint": {...} | "blueprint_path": "...", "roster": {...}, "config": {...}}
///   POST /sessions/{id}/start
///   POST /sessions/{id}/input          {"actor": ..., "text": ..., "client_seq": n}
///   GET  /sessions/{id}/events?since=<seq>&viewer=<actor|spectator>&follow=<0|1>
///   GET  /sessions/{id}
///   GET  /sessions/{id}/transcript
void register_routes(httplib::Server& server, SessionManager& manager);

}  // namespace stagecraft
