#pragma once

// Adjudication of physical actions against the active scene.
//
// Reply grammar (after an optional <think> span), one block per detected action:
//
//   VERDICT: success|failure
//   <objective description line>
//   PROP: <prop-id>                      (optional, the object the action resolved to)
//   SET <prop-id>.<key>=<value>          (zero or more)

#include <optional>
#include <string>
#include <vector>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/gateway.hpp"

namespace stagecraft {

inline constexpr std::string_view kFailureLine = "Action failure, nothing happened.";

struct ActionAttempt {
    std::string actor;
    std::string raw_action;
    std::vector<Prop> scene_snapshot;  ///< props with live state
    std::string environment_description;
    std::int64_t originating_event = 0;
};

struct StateUpdate {
    std::string prop_id;
    std::string key;
    std::string value;

    friend bool operator==(const StateUpdate&, const StateUpdate&) = default;
};

enum class Verdict { success, failure };

struct AdjudicationResult {
    Verdict verdict = Verdict::failure;
    std::string reasoning;
    std::string objective_description;
    std::vector<StateUpdate> state_updates;
    std::optional<std::string> resolved_prop;
    std::vector<std::string> warnings;
};

/// One prop-state change with its previous value (absent when the key was new).
struct StateDiff {
    std::string prop_id;
    std::string key;
    std::optional<std::string> old_value;
    std::string new_value;
};

using PropStates = std::map<std::string, PropState>;

/// Parses a narrator reply into one result per verdict block. Never throws: a reply
/// without any verdict block yields a single failure carrying a diagnostic.
std::vector<AdjudicationResult> parse_adjudication(const ModelReply& reply);

std::string narrator_prompt(const ActionAttempt& attempt);

/// Precondition: raw_action non-empty (Errc::precondition).
std::vector<AdjudicationResult> adjudicate(const ActionAttempt& attempt, const Gateway& gateway,
                                           const std::string& session_id);

/// Applies a success result's updates all-or-nothing. An unknown prop id (or unknown
/// resolved prop) rejects the whole update and downgrades `result` to failure.
std::vector<StateDiff> apply_updates(PropStates& states, AdjudicationResult& result);

std::string_view to_string(Verdict v) noexcept;

}  // namespace stagecraft
