#include "stagecraft/error.hpp"

namespace stagecraft {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::precondition: return "precondition";
        case Errc::backend_timeout: return "backend-timeout";
        case Errc::backend_unavailable: return "backend-unavailable";
        case Errc::script_exhausted: return "script-exhausted";
        case Errc::malformed_call: return "malformed-call";
        case Errc::schema_violation: return "schema-violation";
        case Errc::validation_failure: return "validation-failure";
        case Errc::parse_failure: return "parse-failure";
        case Errc::search_unavailable: return "search-unavailable";
        case Errc::dangling_relative_parent: return "dangling-relative-parent";
        case Errc::roster_mismatch: return "roster-mismatch";
        case Errc::actor_off_stage: return "actor-off-stage";
        case Errc::empty_turn: return "empty-turn";
        case Errc::already_at_final_point: return "already-at-final-point";
        case Errc::turn_budget_exhausted: return "turn-budget-exhausted";
        case Errc::unknown_prop_id: return "unknown-prop-id";
        case Errc::contract_violation: return "contract-violation";
        case Errc::unparseable_verdict: return "unparseable-verdict";
        case Errc::empty_input: return "empty-input";
        case Errc::missing_dimension: return "missing-dimension";
        case Errc::degenerate_variance: return "degenerate-variance";
        case Errc::negative_latency: return "negative-latency";
        case Errc::length_mismatch: return "length-mismatch";
        case Errc::not_your_turn: return "not-your-turn";
        case Errc::actor_not_human: return "actor-not-human";
        case Errc::session_not_performing: return "session-not-performing";
        case Errc::unknown_session: return "unknown-session";
        case Errc::corrupt_transcript: return "corrupt-transcript";
    }
    return "unknown";
}

}  // namespace stagecraft
