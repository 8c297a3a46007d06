#include "stagecraft/control.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <sstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) out.push_back(trim(line));
    return out;
}

/// Matches `KEY:` at the start of a line, case-insensitively; returns the trimmed value.
std::optional<std::string> keyed(const std::string& line, std::string_view key) {
    if (line.size() < key.size() + 1) return std::nullopt;
    if (lower(line.substr(0, key.size())) != lower(std::string(key))) return std::nullopt;
    if (line[key.size()] != ':') return std::nullopt;
    return trim(std::string_view(line).substr(key.size() + 1));
}

void render_history(std::ostringstream& out, const std::vector<TranscriptEvent>& events) {
    for (const auto& e : events) {
        out << "[" << e.seq << "] " << e.speaker;
        if (e.kind == EventKind::action_result) out << " (result)";
        out << ": " << e.display_text() << "\n";
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// planner

TrajectoryPlan parse_trajectory_plan(const ModelReply& reply, std::string from_point, std::string to_point) {
    TrajectoryPlan plan{std::move(from_point), std::move(to_point), {}};
    const auto& text = reply.visible;
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open)
        throw Error(Errc::parse_failure, "planner reply holds no JSON object");
    auto doc = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (doc.is_discarded() || !doc.contains("trajectories") || !doc["trajectories"].is_array())
        throw Error(Errc::parse_failure, "planner reply lacks a trajectories array");
    for (const auto& candidate : doc["trajectories"]) {
        if (!candidate.is_array()) continue;
        std::vector<PlannedBeat> beats;
        for (const auto& b : candidate) {
            if (b.is_object() && b.contains("beat") && b["beat"].is_string())
                beats.push_back({b.value("actor", ""), b["beat"].get<std::string>()});
            else if (b.is_string())
                beats.push_back({"", b.get<std::string>()});
        }
        if (!beats.empty()) plan.candidates.push_back(std::move(beats));
    }
    if (plan.candidates.empty()) throw Error(Errc::parse_failure, "planner reply has no non-empty trajectory");
    return plan;
}

TrajectoryPlan plan_trajectories(const NarrativeBlueprint& blueprint, const Act& act, const std::string& from_point,
                                 const std::string& to_point, const Gateway& gateway, const std::string& session_id) {
    auto idx = [&](const std::string& id) -> std::ptrdiff_t {
        for (std::size_t i = 0; i < act.points.size(); ++i)
            if (act.points[i].id == id) return static_cast<std::ptrdiff_t>(i);
        return -1;
    };
    const auto from = idx(from_point);
    const auto to = idx(to_point);
    if (from < 0 || to != from + 1)
        throw Error(Errc::precondition, "points " + from_point + " and " + to_point + " are not consecutive in act " + act.id);
    const auto& a = act.points[static_cast<std::size_t>(from)];
    const auto& b = act.points[static_cast<std::size_t>(to)];

    std::ostringstream sys;
    sys << "You are the Planner of a live stage drama. Break the current point's flag into a few alternative "
           "sequences of concrete beats, each beat being one actor's action or line, that would make the flag "
           "come true in a believable way. Reply with JSON only:\n"
           "{\"trajectories\": [[{\"actor\": <name>, \"beat\": <gist>}, ...], ...]}\n\n";
    sys << "## Actors\n";
    for (const auto& actor : blueprint.actors) sys << "- " << actor.name << ": " << actor.persona << "\n";
    std::ostringstream user;
    user << "Current point: " << a.description << "\nFlag: " << a.flag.description << "\nExpected result: " << a.flag.result
         << "\nNext point: " << b.description << "\n";
    return parse_trajectory_plan(gateway.complete(make_request("planner/plan", session_id, sys.str(), user.str())),
                                 from_point, to_point);
}

TrajectoryReview parse_trajectory_review(const ModelReply& reply) {
    TrajectoryReview r;
    r.reasoning = reply.thinking.value_or("");
    const auto lines = lines_of(reply.visible);
    std::optional<bool> verdict;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (auto v = keyed(lines[i], "TRAJECTORY")) {
            const auto value = lower(*v);
            if (value == "pass") verdict = true;
            else if (value == "reject") verdict = false;
            else break;
            for (std::size_t k = i + 1; k < lines.size(); ++k)
                if (!lines[k].empty()) {
                    r.reason = lines[k];
                    break;
                }
            break;
        }
    }
    if (!verdict) {
        r.passed = true;
        r.warnings.emplace_back("unparseable trajectory review; passing");
        if (r.reason.empty()) r.reason = "Trajectory check passed.";
        return r;
    }
    r.passed = *verdict;
    if (r.reason.empty()) r.reason = r.passed ? "Trajectory check passed." : "Trajectory check rejected.";
    return r;
}

TrajectoryReview review_trajectory(const std::vector<RealizedBeat>& beats, const TrajectoryPlan* plan,
                                   const FlagSpec& flag, const Gateway& gateway, const std::string& session_id) {
    if (beats.empty()) {
        TrajectoryReview r;
        r.passed = false;
        r.reason = "No beats lead to the flag.";
        return r;
    }
    std::ostringstream sys;
    sys << "You are the Planner of a live stage drama reviewing how a flag was reached. Participants may know "
           "the flag in advance and try to trigger its result directly. Accept the trajectory only if each beat "
           "follows from the previous ones and the flag is reached through a causally coherent build-up; the "
           "route may differ from any planned one. Reason inside <think></think>, then reply with\n"
           "TRAJECTORY: pass|reject\n<one-line reason>\n";
    std::ostringstream user;
    user << "Flag: " << flag.description << "\nExpected result: " << flag.result << "\n\n## Realized beats\n";
    for (const auto& b : beats) user << "[" << b.seq << "] " << b.actor << ": " << b.text << "\n";
    if (plan) {
        user << "\n## Planned trajectories\n";
        for (std::size_t i = 0; i < plan->candidates.size(); ++i) {
            user << "Trajectory " << i + 1 << ":";
            for (const auto& b : plan->candidates[i]) user << " [" << b.actor << "] " << b.beat << ";";
            user << "\n";
        }
    }
    return parse_trajectory_review(gateway.complete(make_request("planner/review", session_id, sys.str(), user.str())));
}

// ---------------------------------------------------------------------------
// transfer

FlagCheck parse_flag_check(const ModelReply& reply, const std::string& point_id,
                           const std::vector<std::int64_t>& window_seqs) {
    FlagCheck c;
    c.point_id = point_id;
    c.reasoning = reply.thinking.value_or("");
    if (c.reasoning.empty()) c.warnings.emplace_back("transfer reply has no reasoning");

    std::optional<bool> met;
    std::vector<std::int64_t> cited;
    std::string conclusion;
    for (const auto& line : lines_of(reply.visible)) {
        if (auto v = keyed(line, "FLAG_MET")) {
            const auto value = lower(*v);
            if (value == "true") met = true;
            else if (value == "false") met = false;
            else c.warnings.push_back("bad FLAG_MET value '" + *v + "'");
        } else if (auto v = keyed(line, "CITED")) {
            std::istringstream in(*v);
            for (std::string tok; std::getline(in, tok, ',');) {
                tok = trim(tok);
                if (tok.empty()) continue;
                try {
                    std::size_t used = 0;
                    const auto seq = std::stoll(tok, &used);
                    if (used != tok.size()) throw std::invalid_argument(tok);
                    if (std::find(window_seqs.begin(), window_seqs.end(), seq) != window_seqs.end())
                        cited.push_back(seq);
                    else
                        c.warnings.push_back("citation " + tok + " outside the window dropped");
                } catch (const std::exception&) {
                    c.warnings.push_back("bad citation '" + tok + "'");
                }
            }
        } else if (!line.empty()) {
            if (!conclusion.empty()) conclusion += ' ';
            conclusion += line;
        }
    }
    if (!met) {
        c.warnings.emplace_back("reply-unparseable: no FLAG_MET line; treated as not met");
        met = false;
    }
    c.met = *met;
    if (c.met) {
        if (cited.empty() && !window_seqs.empty()) {
            cited.push_back(window_seqs.back());
            c.warnings.emplace_back("met without citation; citing the newest event");
        }
        if (cited.empty()) {
            c.met = false;
            c.warnings.emplace_back("met without any event to cite; treated as not met");
        }
        c.cited_events = std::move(cited);
    }
    c.conclusion = conclusion.empty() ? (c.met ? "The flag is satisfied." : "The flag is not satisfied.") : conclusion;
    return c;
}

FlagCheck check_flag(const std::vector<TranscriptEvent>& window, const Point& point, const Gateway& gateway,
                     const std::string& session_id) {
    if (window.empty()) throw Error(Errc::precondition, "empty history window");
    std::ostringstream sys;
    sys << "You are the Transfer of a live stage drama. Decide whether the flag below has been fulfilled by "
           "the events so far. Judge only what actually happened on stage; intentions and plans do not count. "
           "Reason inside <think></think>, write one short conclusion line, then\n"
           "FLAG_MET: true|false\nCITED: <event numbers that fulfil the flag, comma separated>   (only when true)\n\n";
    sys << "Point: " << point.description << "\nFlag: " << point.flag.description << "\n";
    std::ostringstream user;
    user << "## Events since the point began\n";
    render_history(user, window);
    std::vector<std::int64_t> seqs;
    for (const auto& e : window) seqs.push_back(e.seq);
    return parse_flag_check(gateway.complete(make_request("transfer", session_id, sys.str(), user.str())), point.id,
                            seqs);
}

// ---------------------------------------------------------------------------
// advancer

std::vector<std::string> AdvancerDirective::targets() const {
    std::vector<std::string> out;
    for (const auto& i : instructions)
        if (!i.target.empty() && std::find(out.begin(), out.end(), i.target) == out.end()) out.push_back(i.target);
    return out;
}

bool AdvancerDirective::broadcast() const {
    return std::any_of(instructions.begin(), instructions.end(), [](const Instruction& i) { return i.target.empty(); });
}

AdvancerDirective fallback_directive(const StallView& view) {
    AdvancerDirective d;
    d.fallback = true;
    d.instructions.push_back({"", "Move the scene toward this: " + view.point.flag.description});
    return d;
}

AdvancerDirective parse_advancer(const ModelReply& reply, const StallView& view) {
    static const std::regex pattern(R"(^\s*instruction\s+to\s+([^:]+?)\s*:\s*(.+?)\s*$)", std::regex::icase);
    AdvancerDirective d;
    d.reasoning = reply.thinking.value_or("");
    bool any = false;
    for (const auto& line : lines_of(reply.visible)) {
        std::smatch m;
        if (!std::regex_match(line, m, pattern)) continue;
        any = true;
        const auto target = trim(m[1].str());
        const auto text = trim(m[2].str());
        const auto lt = lower(target);
        if (lt == "all" || lt == "everyone") {
            d.instructions.push_back({"", text});
        } else if (std::find(view.on_stage.begin(), view.on_stage.end(), target) != view.on_stage.end()) {
            d.instructions.push_back({target, text});
        } else {
            d.warnings.push_back("instruction to off-stage '" + target + "' dropped");
        }
    }
    if (d.instructions.empty()) {
        auto fb = fallback_directive(view);
        fb.reasoning = d.reasoning;
        fb.warnings = std::move(d.warnings);
        fb.warnings.emplace_back(any ? "every instruction target dropped; fallback applied"
                                     : "no instruction line; fallback applied");
        return fb;
    }
    return d;
}

AdvancerDirective stall_recover(const StallView& view, const TrajectoryPlan* plan, const Gateway& gateway,
                                const std::string& session_id) {
    std::ostringstream sys;
    sys << "You are the Advancer of a live stage drama. The plot has stalled at the current point. Give short, "
           "concrete instructions to the on-stage actors who can move the scene toward its flag. Reason inside "
           "<think></think>, then write one line per instruction:\n"
           "Instruction to <actor name>: <instruction>\nor\nInstruction to all: <instruction>\n\n";
    sys << "Point: " << view.point.description << "\nFlag: " << view.point.flag.description << "\n";
    sys << "On stage:";
    for (const auto& a : view.on_stage) sys << " " << a << ";";
    sys << "\n";
    if (plan) {
        sys << "\n## Reference beats\n";
        for (std::size_t i = 0; i < plan->candidates.size(); ++i) {
            sys << "Trajectory " << i + 1 << ":";
            for (const auto& b : plan->candidates[i]) sys << " [" << b.actor << "] " << b.beat << ";";
            sys << "\n";
        }
    }
    std::ostringstream user;
    user << "## Recent events\n";
    render_history(user, view.history);
    try {
        return parse_advancer(gateway.complete(make_request("advancer", session_id, sys.str(), user.str())), view);
    } catch (const Error& e) {
        if (e.code() != Errc::backend_timeout && e.code() != Errc::backend_unavailable) throw;
        auto fb = fallback_directive(view);
        fb.warnings.push_back(std::string("advancer backend failure: ") + e.what());
        return fb;
    }
}

}  // namespace stagecraft
