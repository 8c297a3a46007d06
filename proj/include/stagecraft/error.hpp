#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stagecraft {

/// Failure categories raised across the engine.
enum class Errc {
    precondition,
    backend_timeout,
    backend_unavailable,
    script_exhausted,
    malformed_call,
    schema_violation,
    validation_failure,
    parse_failure,
    search_unavailable,
    dangling_relative_parent,
    roster_mismatch,
    actor_off_stage,
    empty_turn,
    already_at_final_point,
    turn_budget_exhausted,
    unknown_prop_id,
    contract_violation,
    unparseable_verdict,
    empty_input,
    missing_dimension,
    degenerate_variance,
    negative_latency,
    length_mismatch,
    not_your_turn,
    actor_not_human,
    session_not_performing,
    unknown_session,
    corrupt_transcript,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace stagecraft
