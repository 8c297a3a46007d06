#pragma once

// Perceive-and-decide: per-actor response strategy selection via tool calls, the turn
// markup grammar `(action) [thinking] speech`, and subject-verb-object action gating.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/gateway.hpp"

namespace stagecraft {

enum class Strategy { fast, slow, silence };

std::string_view to_string(Strategy s) noexcept;          ///< "FAST" / "SLOW" / "SILENCE"
std::optional<Strategy> parse_strategy(std::string_view s) noexcept;

/// Separator used when several spans of one kind appear in a turn.
inline constexpr std::string_view kSpanSeparator = " | ";

struct ResponseParts {
    std::optional<std::string> speech;
    std::optional<std::string> action;
    std::optional<std::string> thinking;
    std::vector<std::string> warnings;

    bool empty() const { return !speech && !action && !thinking; }
};

/// Greedy left-to-right segmentation. Delimiters inside an open span are literal; an
/// unbalanced opener turns the rest of the text into speech with a warning.
ResponseParts parse_response(std::string_view raw);

struct SvoAction {
    std::string subject;
    std::string verb;
    std::string object;  ///< prop id

    friend bool operator==(const SvoAction&, const SvoAction&) = default;
};

struct PadDecision {
    Strategy strategy = Strategy::fast;
    std::optional<std::string> thinking;
    std::optional<SvoAction> action;
    std::vector<std::string> warnings;
};

/// An interactable object as offered to the actor.
struct ObjectRef {
    std::string id;
    std::string name;
};

/// Free-text form: first token is the verb, the remainder (articles dropped) must name
/// an object by exact id, then exact name. Returns nullopt when either part is missing
/// or the object is not offered.
std::optional<SvoAction> parse_action(std::string_view raw_action, const std::string& actor,
                                      const std::vector<ObjectRef>& objects);
/// Tool-argument form: {"verb": ..., "object": ...}.
std::optional<SvoAction> parse_action(const nlohmann::json& arguments, const std::string& actor,
                                      const std::vector<ObjectRef>& objects);
inline std::optional<SvoAction> parse_action(const char* raw_action, const std::string& actor,
                                             const std::vector<ObjectRef>& objects) {
    return parse_action(std::string_view(raw_action), actor, objects);
}
inline std::optional<SvoAction> parse_action(const std::string& raw_action, const std::string& actor,
                                             const std::vector<ObjectRef>& objects) {
    return parse_action(std::string_view(raw_action), actor, objects);
}

/// Assembles turn text from a decision per the six strategy/action combinations.
/// `action_text` may be given with or without surrounding parentheses. Throws
/// Errc::contract_violation for speech under SILENCE, missing speech under FAST/SLOW,
/// or missing thinking under SLOW.
std::string format_response(const PadDecision& decision, std::string_view speech, std::string_view action_text);

struct HistoryLine {
    std::string speaker;
    std::string text;
};

struct PadContext {
    ActorProfile profile;  ///< live profile: persona, relationships, memory, private goal
    std::string environment_description;
    std::vector<std::string> actor_list;
    std::vector<HistoryLine> dialogue_history;
    std::vector<ObjectRef> interactable_objects;
    std::string current_flag;
    std::optional<HistoryLine> last_stimulus;
};

/// The four strategy/action tools; take_action enumerates the offered object ids.
std::vector<ToolSpec> pad_tools(const std::vector<ObjectRef>& objects);

/// Deterministic prompt assembly. Throws Errc::precondition when the profile has no
/// persona or goal.
std::string encode_strategy(const PadContext& context);

/// Strategy from the first strategy tool call; take_action gated through parse_action.
/// Falls back to FAST when the reply has visible text and SILENCE otherwise.
PadDecision decide_from_reply(const ModelReply& reply, const PadContext& context);

PadDecision decide(const PadContext& context, const Gateway& gateway, const std::string& session_id);

}  // namespace stagecraft
