#pragma once

// Control agents: planner (trajectory plans and flag-hacking review), transfer (flag
// checks) and advancer (stall recovery).
//
// Reply grammars:
//   transfer  ... free text ...
//             FLAG_MET: true|false
//             CITED: <seq>[,<seq>...]          (optional)
//   review    TRAJECTORY: pass|reject
//             <reason line>
//   advancer  Instruction to <Actor>: <text>   (one or more)
//             Instruction to all: <text>
//   plan      {"trajectories": [[{"actor": ..., "beat": ...}, ...], ...]}

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/gateway.hpp"
#include "stagecraft/transcript.hpp"

namespace stagecraft {

struct PlannedBeat {
    std::string actor;
    std::string beat;

    friend bool operator==(const PlannedBeat&, const PlannedBeat&) = default;
};

struct TrajectoryPlan {
    std::string from_point;
    std::string to_point;
    std::vector<std::vector<PlannedBeat>> candidates;
};

/// Throws Error{parse_failure} when the reply holds no non-empty candidate.
TrajectoryPlan parse_trajectory_plan(const ModelReply& reply, std::string from_point, std::string to_point);

/// Plans the path between two consecutive points of `act` (role "planner/plan").
/// Throws Errc::precondition when the points are not consecutive in that act.
TrajectoryPlan plan_trajectories(const NarrativeBlueprint& blueprint, const Act& act, const std::string& from_point,
                                 const std::string& to_point, const Gateway& gateway, const std::string& session_id);

/// One realized beat as seen by the reviewer.
struct RealizedBeat {
    std::int64_t seq = 0;
    std::string actor;
    std::string text;
};

struct TrajectoryReview {
    bool passed = true;
    std::string reason;
    std::string reasoning;
    std::vector<std::string> warnings;
};

/// Fails open: an unparseable reply passes with a warning.
TrajectoryReview parse_trajectory_review(const ModelReply& reply);

/// Rejects an empty beat list without consulting the model (role "planner/review").
TrajectoryReview review_trajectory(const std::vector<RealizedBeat>& beats, const TrajectoryPlan* plan,
                                   const FlagSpec& flag, const Gateway& gateway, const std::string& session_id);

struct FlagCheck {
    std::string point_id;
    bool met = false;
    std::string reasoning;
    std::string conclusion;  ///< visible text without the grammar lines
    std::vector<std::int64_t> cited_events;
    std::vector<std::string> warnings;
};

/// Conservative: anything but a well-formed `FLAG_MET: true` is "not met". Citations
/// outside `window_seqs` are dropped; a met check without usable citations cites the
/// newest window event.
FlagCheck parse_flag_check(const ModelReply& reply, const std::string& point_id,
                           const std::vector<std::int64_t>& window_seqs);

/// Role "transfer". Throws Errc::precondition on an empty window.
FlagCheck check_flag(const std::vector<TranscriptEvent>& window, const Point& point, const Gateway& gateway,
                     const std::string& session_id);

struct Instruction {
    std::string target;  ///< actor name; empty when addressed to all
    std::string text;

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct AdvancerDirective {
    std::vector<Instruction> instructions;
    std::string reasoning;
    bool fallback = false;
    std::vector<std::string> warnings;

    /// Named targets in order of first mention; empty for a broadcast-only directive.
    std::vector<std::string> targets() const;
    bool broadcast() const;
};

struct StallView {
    std::vector<std::string> on_stage;
    Point point;
    std::vector<TranscriptEvent> history;
};

/// The instruction restating the current flag to everyone on stage.
AdvancerDirective fallback_directive(const StallView& view);

/// Off-stage targets are dropped; when nothing usable remains the fallback is returned.
AdvancerDirective parse_advancer(const ModelReply& reply, const StallView& view);

/// Role "advancer".
AdvancerDirective stall_recover(const StallView& view, const TrajectoryPlan* plan, const Gateway& gateway,
                                const std::string& session_id);

}  // namespace stagecraft
