#include "stagecraft/narrator.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

std::string_view to_string(Verdict v) noexcept { return v == Verdict::success ? "success" : "failure"; }

namespace {

bool starts_with_ci(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i)
        if (std::toupper(static_cast<unsigned char>(s[i])) != std::toupper(static_cast<unsigned char>(prefix[i])))
            return false;
    return true;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

void finish(AdjudicationResult& r) {
    if (r.verdict == Verdict::failure) {
        if (!r.state_updates.empty()) r.warnings.emplace_back("state updates on a failed action ignored");
        r.state_updates.clear();
        r.resolved_prop.reset();
        r.objective_description = std::string(kFailureLine);
    } else if (r.objective_description.empty()) {
        r.warnings.emplace_back("success without description downgraded to failure");
        r.verdict = Verdict::failure;
        finish(r);
    }
}

}  // namespace

std::vector<AdjudicationResult> parse_adjudication(const ModelReply& reply) {
    const std::string reasoning = reply.thinking.value_or("");
    std::vector<AdjudicationResult> out;
    std::istringstream in(reply.visible);
    std::string line;
    std::vector<std::string> stray;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        if (starts_with_ci(line, "VERDICT:")) {
            if (!out.empty()) finish(out.back());
            AdjudicationResult r;
            r.reasoning = reasoning;
            const auto value = lower(trim(std::string_view(line).substr(8)));
            if (value == "success") r.verdict = Verdict::success;
            else if (value == "failure") r.verdict = Verdict::failure;
            else {
                r.verdict = Verdict::failure;
                r.warnings.push_back("unrecognized verdict '" + value + "'");
            }
            out.push_back(std::move(r));
            continue;
        }
        if (out.empty()) {
            stray.push_back(line);
            continue;
        }
        auto& cur = out.back();
        if (starts_with_ci(line, "SET ")) {
            const auto body = trim(std::string_view(line).substr(4));
            const auto dot = body.find('.');
            const auto eq = body.find('=');
            if (dot == std::string::npos || eq == std::string::npos || eq < dot || dot == 0 || eq == dot + 1) {
                cur.warnings.push_back("malformed SET line: " + line);
                continue;
            }
            cur.state_updates.push_back({trim(body.substr(0, dot)), trim(body.substr(dot + 1, eq - dot - 1)),
                                         trim(body.substr(eq + 1))});
        } else if (starts_with_ci(line, "PROP:")) {
            cur.resolved_prop = trim(std::string_view(line).substr(5));
        } else if (cur.objective_description.empty()) {
            cur.objective_description = line;
        } else {
            cur.objective_description += " " + line;
        }
    }
    if (out.empty()) {
        AdjudicationResult r;
        r.verdict = Verdict::failure;
        r.reasoning = reasoning.empty() ? "reply-unparseable: no VERDICT line" : reasoning + " (reply-unparseable: no VERDICT line)";
        r.warnings.emplace_back("reply-unparseable");
        out.push_back(std::move(r));
    }
    finish(out.back());
    return out;
}

std::string narrator_prompt(const ActionAttempt& a) {
    std::ostringstream out;
    out << "You are the Narrator of a live stage drama. You rule on physical actions. An action succeeds only "
           "if it is physically possible for the actor, consistent with the realistic setting, and every object "
           "it needs exists in the scene (a loose word such as 'knife' may refer to an existing prop such as a "
           "dagger). On success describe the visible outcome objectively in one line and record state changes. "
           "On failure the description is ignored.\n\n"
        << "Reason inside <think></think> first, then for each distinct action in the attempt emit a block:\n"
        << "VERDICT: success|failure\n<one-line objective description>\nPROP: <prop-id>   (optional)\n"
        << "SET <prop-id>.<key>=<value>   (zero or more)\n\n";
    out << "## Environment\n" << a.environment_description << "\n\n## Props\n";
    if (a.scene_snapshot.empty()) out << "(none)\n";
    for (const auto& p : a.scene_snapshot) {
        out << "- " << p.id << " (" << p.name << ")";
        if (!p.description.empty()) out << ": " << p.description;
        out << " [" << (p.placement.is_absolute() ? p.placement.text : *p.placement.relative_to + ", " + p.placement.text)
            << "]";
        for (const auto& [k, v] : p.state) out << " " << k << "=" << v;
        out << "\n";
    }
    return out.str();
}

std::vector<AdjudicationResult> adjudicate(const ActionAttempt& attempt, const Gateway& gateway,
                                           const std::string& session_id) {
    if (trim(attempt.raw_action).empty()) throw Error(Errc::precondition, "empty action");
    auto request = make_request("narrator", session_id, narrator_prompt(attempt),
                                attempt.actor + " attempts: (" + attempt.raw_action + ")");
    return parse_adjudication(gateway.complete(request));
}

std::vector<StateDiff> apply_updates(PropStates& states, AdjudicationResult& result) {
    if (result.verdict != Verdict::success) return {};
    auto downgrade = [&](const std::string& why) {
        result.verdict = Verdict::failure;
        result.reasoning += (result.reasoning.empty() ? "" : " ") + std::string("[unknown-prop-id: ") + why + "]";
        result.warnings.push_back("unknown-prop-id: " + why);
        result.state_updates.clear();
        result.resolved_prop.reset();
        result.objective_description = std::string(kFailureLine);
    };
    if (result.resolved_prop && !states.contains(*result.resolved_prop)) {
        downgrade(*result.resolved_prop);
        return {};
    }
    for (const auto& u : result.state_updates) {
        if (!states.contains(u.prop_id)) {
            downgrade(u.prop_id);
            return {};
        }
    }
    std::vector<StateDiff> diffs;
    for (const auto& u : result.state_updates) {
        auto& st = states[u.prop_id];
        std::optional<std::string> old;
        if (auto it = st.find(u.key); it != st.end()) old = it->second;
        st[u.key] = u.value;
        diffs.push_back({u.prop_id, u.key, old, u.value});
    }
    return diffs;
}

}  // namespace stagecraft
