#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagecraft/pad.hpp"

namespace stagecraft {

enum class EventKind { speech, action_attempt, action_result, broadcast, thinking, instruction, system };

std::string_view to_string(EventKind k) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view s) noexcept;

inline constexpr std::string_view kNarrator = "Narrator";
inline constexpr std::string_view kAdvancer = "Advancer";
inline constexpr std::string_view kEnvironment = "Environment";
inline constexpr std::string_view kSystem = "System";
inline constexpr std::string_view kTransfer = "Transfer";
inline constexpr std::string_view kPlanner = "Planner";

/// Who may see an event. `control` marks control-agent chatter (flag checks, trajectory
/// reviews) which is shown to spectators and withheld from actors unless flags are revealed.
struct Visibility {
    enum class Scope { all, private_to, control } scope = Scope::all;
    std::string actor;

    static Visibility all() { return {}; }
    static Visibility private_to(std::string a) { return {Scope::private_to, std::move(a)}; }
    static Visibility control() { return {Scope::control, {}}; }
    friend bool operator==(const Visibility&, const Visibility&) = default;
};

struct TranscriptEvent {
    std::int64_t seq = 0;
    double timestamp = 0.0;
    EventKind kind = EventKind::system;
    std::string speaker;
    std::optional<std::string> speech;
    std::optional<std::string> action;
    std::optional<std::string> thinking;
    std::string text;  ///< rendered line for non-actor events
    Visibility visibility;
    nlohmann::json data = nlohmann::json::object();

    /// The line a viewer reads: text for narrator/system events, otherwise the parts.
    std::string display_text() const;
};

nlohmann::json to_json(const TranscriptEvent& e);
/// Throws Error{corrupt_transcript} on malformed input.
TranscriptEvent event_from_json(const nlohmann::json& j);

/// A viewer is either a named actor or a spectator (nullopt).
struct Viewer {
    std::optional<std::string> actor;
    bool reveal_control = false;

    static Viewer spectator() { return {}; }
    static Viewer of(std::string a, bool reveal = false) { return {std::move(a), reveal}; }
};

bool visible_to(const TranscriptEvent& e, const Viewer& viewer);
std::vector<TranscriptEvent> filter_for(const std::vector<TranscriptEvent>& events, const Viewer& viewer);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view bytes);
/// Hash over the JSONL rendering of a transcript.
std::string transcript_hash(const std::vector<TranscriptEvent>& events);

/// Append-only, thread-safe event store with blocking reads for streaming.
class EventLog {
public:
    using Listener = std::function<void(const TranscriptEvent&)>;

    /// Assigns seq (dense, starting at 1) and returns the stored event.
    TranscriptEvent append(TranscriptEvent e);
    std::vector<TranscriptEvent> snapshot() const;
    std::vector<TranscriptEvent> since(std::int64_t seq) const;
    std::int64_t last_seq() const;
    std::size_t size() const;

    /// Waits until an event with seq > `seq` exists, the log is closed, or the timeout
    /// elapses. Returns true when new events are available.
    bool wait_beyond(std::int64_t seq, std::chrono::milliseconds timeout) const;
    void close();
    bool closed() const;

    void add_listener(Listener l);

private:
    std::vector<TranscriptEvent> events_;
    std::vector<Listener> listeners_;
    bool closed_ = false;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
};

/// Writes one event per line, flushed per event.
class TranscriptWriter {
public:
    explicit TranscriptWriter(const std::filesystem::path& path, bool append = false);
    void write(const TranscriptEvent& e);

private:
    std::ofstream out_;
    std::mutex mutex_;
};

std::vector<TranscriptEvent> read_transcript(const std::filesystem::path& path);
std::vector<TranscriptEvent> read_transcript_text(std::string_view text);
std::string to_jsonl(const std::vector<TranscriptEvent>& events);

}  // namespace stagecraft
