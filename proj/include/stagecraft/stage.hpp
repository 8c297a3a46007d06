#pragma once

// Online performance: session lifecycle, act/point progression, turn scheduling across
// AI actors and human players, and transcript replay.

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/control.hpp"
#include "stagecraft/gateway.hpp"
#include "stagecraft/narrator.hpp"
#include "stagecraft/pad.hpp"
#include "stagecraft/transcript.hpp"

namespace stagecraft {

enum class ClockMode { turns, wall };
enum class ReviewMode { human_only, always, never };
enum class SessionStatus { performing, completed, budget_exhausted, aborted };

std::string_view to_string(ClockMode m) noexcept;
std::string_view to_string(ReviewMode m) noexcept;
std::string_view to_string(SessionStatus s) noexcept;

struct StageConfig {
    int stall_threshold = 6;      ///< ineffective rounds, turn-count mode
    double stall_seconds = 60.0;  ///< wall-clock mode
    ClockMode clock = ClockMode::turns;
    int turn_budget = 200;  ///< rounds per act
    std::size_t history_window = 30;
    ReviewMode review_mode = ReviewMode::human_only;
    std::chrono::milliseconds human_wait{0};
    bool reveal_flags_to_humans = false;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults.
    static StageConfig from_json(const nlohmann::json& j);
};

using Roster = std::map<std::string, Controller>;

/// Roster that follows each actor's `controller` marker in the blueprint.
Roster default_roster(const NarrativeBlueprint& blueprint);

/// Where human turns come from. `peek` leaves the turn pending until `consume`.
class InputSource {
public:
    virtual ~InputSource() = default;
    virtual std::optional<std::string> peek(const std::string& actor, std::chrono::milliseconds wait) = 0;
    virtual void consume(const std::string& actor) = 0;
};

/// Thread-safe per-actor FIFO of pending turns.
class QueuedInput : public InputSource {
public:
    /// `capacity` 0 = unbounded. Returns false when the actor's queue is full.
    bool push(const std::string& actor, std::string raw_text, std::size_t capacity = 0);
    std::size_t pending(const std::string& actor) const;

    std::optional<std::string> peek(const std::string& actor, std::chrono::milliseconds wait) override;
    void consume(const std::string& actor) override;

private:
    std::map<std::string, std::deque<std::string>> queues_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
};

struct StageState {
    std::size_t act_index = 0;
    std::size_t point_index = 0;
    std::vector<std::string> on_stage;  ///< blueprint order
    std::string active_scene;
    std::map<std::string, PropStates> prop_states;  ///< scene id -> prop id -> state
    std::map<std::string, std::string> private_goals;
    int stall_counter = 0;
    int rounds_in_act = 0;
    SessionStatus status = SessionStatus::performing;
};

/// Hash of the canonical rendering of all prop states.
std::string state_checksum(const std::map<std::string, PropStates>& prop_states);

/// Initial prop states of every scene.
std::map<std::string, PropStates> initial_prop_states(const NarrativeBlueprint& blueprint);

struct PointTransition {
    std::size_t from_act = 0;
    std::string from_point;
    std::size_t to_act = 0;
    std::string to_point;  ///< empty when the performance completed
    std::vector<std::string> entered;
    std::vector<std::string> left;
    bool completed = false;
};

class Session {
public:
    /// Throws Errc::roster_mismatch unless the roster names exactly the blueprint actors,
    /// and Errc::validation_failure for an invalid blueprint.
    Session(NarrativeBlueprint blueprint, Roster roster, std::shared_ptr<const Gateway> gateway, StageConfig config,
            std::string session_id, std::shared_ptr<InputSource> input = nullptr,
            std::shared_ptr<EventLog> log = nullptr);

    /// Records the session header, refreshes goals and enters act 0 / point 0.
    void start();

    /// Rebuilds state from a persisted transcript (which must start with a session
    /// header for this blueprint) and continues from there.
    void restore(const std::vector<TranscriptEvent>& events);

    /// Appends one turn: thinking, speech, then the action attempt and its adjudication.
    /// Throws actor_off_stage, empty_turn or session_not_performing.
    std::vector<TranscriptEvent> submit_turn(const std::string& actor, const std::string& raw_text);

    /// An environmental cue visible to all; the transfer is polled afterwards.
    TranscriptEvent broadcast_environment(const std::string& text);

    /// Moves to the next point (or act, or completion). Throws already_at_final_point once completed.
    PointTransition advance_point();

    std::map<std::string, std::string> refresh_private_goals();

    /// One scheduling round. Returns false once the session is no longer performing.
    bool step();
    /// Steps until the session stops performing or `max_rounds` rounds ran.
    SessionStatus run(std::optional<int> max_rounds = std::nullopt);

    /// Marks the session aborted.
    void abort(const std::string& reason);

    StageState state() const;
    SessionStatus status() const;
    const NarrativeBlueprint& blueprint() const { return blueprint_; }
    const Roster& roster() const { return roster_; }
    const StageConfig& config() const { return config_; }
    const std::string& id() const { return session_id_; }
    std::shared_ptr<EventLog> log() const { return log_; }
    std::vector<std::string> warnings() const;

private:
    TranscriptEvent emit(TranscriptEvent e);
    TranscriptEvent emit_system(std::string text, nlohmann::json data, Visibility vis = Visibility::all(),
                                std::string speaker = std::string(kSystem));

    std::vector<TranscriptEvent> submit_turn_locked(const std::string& actor, const std::string& raw_text);
    std::map<std::string, std::string> refresh_goals_locked();
    void enter_act(std::size_t act_index);
    void enter_point(std::size_t act_index, std::size_t point_index, PointTransition* transition);
    PointTransition advance_locked();
    bool poll_transfer_locked(bool* effective);
    void run_advancer_locked();
    bool stalled() const;
    void note_progress();

    std::vector<TranscriptEvent> point_window() const;
    std::vector<HistoryLine> history_for(const std::string& actor) const;
    PadContext pad_context(const std::string& actor) const;
    std::optional<std::string> compose_ai_turn(const std::string& actor, const PadDecision& decision);
    const Act& act() const { return blueprint_.acts[state_.act_index]; }
    const Point& point() const { return act().points[state_.point_index]; }
    const Scene& scene() const;
    bool human(const std::string& actor) const;

    NarrativeBlueprint blueprint_;
    Roster roster_;
    std::shared_ptr<const Gateway> gateway_;
    StageConfig config_;
    std::string session_id_;
    std::shared_ptr<InputSource> input_;
    std::shared_ptr<EventLog> log_;

    StageState state_;
    std::map<std::string, ActorProfile> profiles_;
    std::optional<TrajectoryPlan> plan_;
    std::int64_t point_started_seq_ = 0;
    std::optional<std::size_t> last_speaker_;
    std::map<std::string, bool> waiting_noted_;
    std::chrono::steady_clock::time_point last_progress_;
    double last_timestamp_ = 0.0;
    bool started_ = false;
    std::vector<std::string> warnings_;
    mutable std::recursive_mutex mutex_;
};

/// Result of reconstructing a session from its transcript alone.
struct ReplayResult {
    bool started = false;  ///< false for a transcript without a session header
    std::string session_id;
    NarrativeBlueprint blueprint;
    Roster roster;
    StageConfig config;
    StageState state;
    std::int64_t last_seq = 0;
};

/// Recomputes prop states, the point cursor and goals from the events. A checksum
/// mismatch or an inconsistent diff throws Error{corrupt_transcript} naming the line.
ReplayResult replay(const std::vector<TranscriptEvent>& events);
ReplayResult replay_file(const std::filesystem::path& path);

}  // namespace stagecraft
