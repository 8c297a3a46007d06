#include "stagecraft/pad.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::fast: return "FAST";
        case Strategy::slow: return "SLOW";
        case Strategy::silence: return "SILENCE";
    }
    return "FAST";
}

std::optional<Strategy> parse_strategy(std::string_view s) noexcept {
    if (s == "FAST") return Strategy::fast;
    if (s == "SLOW") return Strategy::slow;
    if (s == "SILENCE") return Strategy::silence;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// markup

ResponseParts parse_response(std::string_view raw) {
    ResponseParts parts;
    std::vector<std::string> speech, actions, thoughts;
    std::string pending;

    auto flush_speech = [&] {
        auto t = trim(pending);
        if (!t.empty()) speech.push_back(std::move(t));
        pending.clear();
    };

    std::size_t i = 0;
    while (i < raw.size()) {
        const char c = raw[i];
        if (c == '(' || c == '[') {
            const char close = c == '(' ? ')' : ']';
            const auto end = raw.find(close, i + 1);
            if (end == std::string_view::npos) {
                parts.warnings.emplace_back(std::string("unbalanced '") + c + "'; remainder treated as speech");
                pending.append(raw.substr(i));
                break;
            }
            flush_speech();
            auto inner = trim(raw.substr(i + 1, end - i - 1));
            if (!inner.empty()) (c == '(' ? actions : thoughts).push_back(std::move(inner));
            i = end + 1;
            continue;
        }
        pending.push_back(c);
        ++i;
    }
    flush_speech();

    auto join = [](const std::vector<std::string>& v, std::string_view sep) -> std::optional<std::string> {
        if (v.empty()) return std::nullopt;
        std::string out = v.front();
        for (std::size_t k = 1; k < v.size(); ++k) {
            out += sep;
            out += v[k];
        }
        return out;
    };
    parts.speech = join(speech, " ");
    parts.action = join(actions, kSpanSeparator);
    parts.thinking = join(thoughts, kSpanSeparator);
    return parts;
}

std::string format_response(const PadDecision& decision, std::string_view speech_in, std::string_view action_in) {
    auto speech = trim(speech_in);
    auto action = trim(action_in);
    if (action.size() >= 2 && action.front() == '(' && action.back() == ')') action = trim(action.substr(1, action.size() - 2));
    if (action.empty() && decision.action) action = decision.action->verb + " " + decision.action->object;

    std::string out;
    if (!action.empty()) out = "(" + action + ")";
    auto append = [&out](const std::string& piece) {
        if (!out.empty()) out += ' ';
        out += piece;
    };

    switch (decision.strategy) {
        case Strategy::fast:
            if (speech.empty()) throw Error(Errc::contract_violation, "FAST response requires speech");
            append(speech);
            break;
        case Strategy::slow: {
            if (speech.empty()) throw Error(Errc::contract_violation, "SLOW response requires speech");
            const auto thinking = decision.thinking ? trim(*decision.thinking) : std::string();
            if (thinking.empty()) throw Error(Errc::contract_violation, "SLOW response requires thinking");
            append("[" + thinking + "]");
            append(speech);
            break;
        }
        case Strategy::silence:
            if (!speech.empty()) throw Error(Errc::contract_violation, "SILENCE response cannot carry speech");
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// action parsing

namespace {

std::optional<std::string> match_object(const std::string& phrase, const std::vector<ObjectRef>& objects) {
    if (phrase.empty()) return std::nullopt;
    for (const auto& o : objects)
        if (o.id == phrase) return o.id;
    for (const auto& o : objects)
        if (o.name == phrase) return o.id;
    return std::nullopt;
}

std::string strip_punct(std::string s) {
    while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back())) && s.back() != ')') s.pop_back();
    return s;
}

bool is_article(const std::string& w) {
    std::string lower;
    std::transform(w.begin(), w.end(), std::back_inserter(lower), [](unsigned char c) { return std::tolower(c); });
    return lower == "the" || lower == "a" || lower == "an";
}

}  // namespace

std::optional<SvoAction> parse_action(std::string_view raw_action, const std::string& actor,
                                      const std::vector<ObjectRef>& objects) {
    std::istringstream in{trim(raw_action)};
    std::vector<std::string> words;
    for (std::string w; in >> w;) {
        w = strip_punct(std::move(w));
        if (!w.empty()) words.push_back(std::move(w));
    }
    if (words.empty()) return std::nullopt;
    const std::string verb = words.front();
    std::size_t k = 1;
    while (k < words.size() && is_article(words[k])) ++k;
    std::string phrase;
    for (; k < words.size(); ++k) {
        if (!phrase.empty()) phrase += ' ';
        phrase += words[k];
    }
    auto object = match_object(phrase, objects);
    if (!object) return std::nullopt;
    return SvoAction{actor, verb, *object};
}

std::optional<SvoAction> parse_action(const json& arguments, const std::string& actor,
                                      const std::vector<ObjectRef>& objects) {
    if (!arguments.is_object()) return std::nullopt;
    const auto verb_it = arguments.find("verb");
    const auto object_it = arguments.find("object");
    if (verb_it == arguments.end() || object_it == arguments.end()) return std::nullopt;
    if (!verb_it->is_string() || !object_it->is_string()) return std::nullopt;
    const auto verb = trim(verb_it->get<std::string>());
    if (verb.empty()) return std::nullopt;
    auto object = match_object(trim(object_it->get<std::string>()), objects);
    if (!object) return std::nullopt;
    return SvoAction{actor, verb, *object};
}

// ---------------------------------------------------------------------------
// decision

std::vector<ToolSpec> pad_tools(const std::vector<ObjectRef>& objects) {
    std::vector<std::string> ids;
    for (const auto& o : objects) ids.push_back(o.id);
    return {
        {"respond_fast", "Answer at once, on instinct and emotion, without deliberation.", {}},
        {"respond_slow", "Pause to reason before answering; the reasoning becomes an internal monologue.", {}},
        {"keep_silence", "Deliberately say nothing.", {}},
        {"take_action",
         "Physically act on one interactable object. Combine with one of the response tools.",
         {{"verb", "string", true, {}}, {"object", "string", true, ids}}},
    };
}

std::string encode_strategy(const PadContext& ctx) {
    const auto& p = ctx.profile;
    if (trim(p.persona).empty()) throw Error(Errc::precondition, "actor " + p.name + " has no persona");
    if (trim(p.private_goal).empty() && trim(p.initial_goal).empty())
        throw Error(Errc::precondition, "actor " + p.name + " has no goal");

    std::ostringstream out;
    out << "You play " << p.name << " in a live stage drama. Before anyone speaks you sense the scene "
        << "and choose how to react to the latest event: answer quickly, answer after thinking, or stay silent, "
        << "optionally acting on an object in the scene. Use one response tool, plus take_action if you act.\n\n";
    out << "Tool signatures are listed inside <tools></tools>:\n" << render_tools_block(pad_tools(ctx.interactable_objects))
        << "\n\n";
    out << "Emit each call as <tool_call>{\"name\": <tool-name>, \"arguments\": <args-object>}</tool_call>.\n\n";

    out << "## Environment\n" << ctx.environment_description << "\n\n";
    out << "## Actors present\n";
    for (const auto& a : ctx.actor_list) out << "- " << a << "\n";
    out << "\n## Dialogue history\n";
    if (ctx.dialogue_history.empty()) out << "(nothing yet)\n";
    for (const auto& h : ctx.dialogue_history) out << h.speaker << ": " << h.text << "\n";
    out << "\n## Interactable objects\n";
    if (ctx.interactable_objects.empty()) out << "(none)\n";
    for (const auto& o : ctx.interactable_objects) out << "- " << o.id << ": " << o.name << "\n";
    out << "\n## Profile\n";
    out << "Persona: " << p.persona << "\n";
    if (!p.background.empty()) out << "Background: " << p.background << "\n";
    for (const auto& [target, rel] : p.relationships) out << "Relationship with " << target << ": " << rel.description << "\n";
    for (const auto& m : p.memory) out << "Memory: " << m << "\n";
    out << "Goal: " << (trim(p.private_goal).empty() ? p.initial_goal : p.private_goal) << "\n";
    if (!ctx.current_flag.empty()) out << "\n## Scene objective\n" << ctx.current_flag << "\n";
    return out.str();
}

PadDecision decide_from_reply(const ModelReply& reply, const PadContext& context) {
    PadDecision d;
    d.thinking = reply.thinking;
    std::optional<Strategy> strategy;
    for (const auto& call : reply.tool_calls) {
        std::optional<Strategy> s;
        if (call.name == "respond_fast") s = Strategy::fast;
        else if (call.name == "respond_slow") s = Strategy::slow;
        else if (call.name == "keep_silence" || call.name == "respond_silence") s = Strategy::silence;

        if (s) {
            if (strategy) d.warnings.push_back("extra strategy call '" + call.name + "' ignored");
            else strategy = s;
        } else if (call.name == "take_action") {
            if (d.action) {
                d.warnings.emplace_back("extra take_action ignored");
                continue;
            }
            d.action = parse_action(call.arguments, context.profile.name, context.interactable_objects);
            if (!d.action) d.warnings.push_back("take_action dropped: " + call.arguments.dump());
        } else {
            d.warnings.push_back("unknown tool '" + call.name + "' ignored");
        }
    }
    for (const auto& m : reply.malformed_calls) d.warnings.push_back("malformed tool call: " + m.message);
    if (strategy) {
        d.strategy = *strategy;
    } else {
        d.strategy = reply.visible.empty() ? Strategy::silence : Strategy::fast;
        d.warnings.emplace_back("no strategy tool call; fallback applied");
    }
    return d;
}

PadDecision decide(const PadContext& context, const Gateway& gateway, const std::string& session_id) {
    auto request = make_request("pad/" + context.profile.name, session_id, encode_strategy(context),
                                context.last_stimulus
                                    ? "Current speaker " + context.last_stimulus->speaker + " says: " +
                                          context.last_stimulus->text + "\nDecide how to respond."
                                    : std::string("The scene opens. Decide how to respond."));
    request.tool_specs = pad_tools(context.interactable_objects);
    try {
        return decide_from_reply(gateway.complete(request), context);
    } catch (const Error& e) {
        if (e.code() != Errc::backend_timeout && e.code() != Errc::backend_unavailable) throw;
        PadDecision d;
        d.strategy = Strategy::silence;
        d.warnings.push_back(std::string("backend failure, staying silent: ") + e.what());
        return d;
    }
}

}  // namespace stagecraft
