#include "stagecraft/planning.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "stagecraft/error.hpp"
#include "stagecraft/markup.hpp"

namespace stagecraft {

using nlohmann::json;

void AuditTrail::record(std::string stage, json detail) {
    std::lock_guard lock(mutex_);
    json entry = {{"index", entries_.size()}, {"stage", std::move(stage)}, {"detail", std::move(detail)}};
    entries_.push_back(std::move(entry));
}

std::vector<json> AuditTrail::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<std::string> AuditTrail::stages() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e["stage"].get<std::string>());
    return out;
}

void AuditTrail::write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error(Errc::precondition, "cannot write audit trail " + path.string());
    for (const auto& e : entries()) out << e.dump() << '\n';
}

std::string_view to_string(ReviewKind k) noexcept { return k == ReviewKind::actors ? "actors" : "plot"; }

namespace {

void audit(const PlanningContext& ctx, std::string stage, json detail = json::object()) {
    if (ctx.audit) ctx.audit->record(std::move(stage), std::move(detail));
}

const Gateway& gw(const PlanningContext& ctx) {
    if (!ctx.gateway) throw Error(Errc::precondition, "planning context has no gateway");
    return *ctx.gateway;
}

/// The first JSON value in a reply, tolerating code fences and surrounding prose.
json extract_json(const std::string& text) {
    const auto open = text.find_first_of("[{");
    if (open == std::string::npos) throw Error(Errc::parse_failure, "reply holds no JSON value");
    const char closer = text[open] == '[' ? ']' : '}';
    const auto close = text.rfind(closer);
    if (close == std::string::npos || close < open) throw Error(Errc::parse_failure, "reply holds an unterminated JSON value");
    auto j = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded()) throw Error(Errc::parse_failure, "reply JSON does not parse");
    return j;
}

/// Asks once, and once more with the expected shape appended when the reply is unusable.
template <class Parse>
auto ask_structured(const PlanningContext& ctx, const std::string& role, const std::string& system,
                    const std::string& user, std::string_view shape, Parse parse) -> decltype(parse(json())) {
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string prompt = user;
        if (attempt == 1)
            prompt += "\n\nThe previous reply could not be used (" + problem + "). Reply again with JSON only, in "
                      "exactly this shape:\n" + std::string(shape);
        const auto reply = gw(ctx).complete(make_request(role, ctx.session_id, system, prompt));
        try {
            return parse(extract_json(reply.visible));
        } catch (const Error& e) {
            if (e.code() != Errc::parse_failure && e.code() != Errc::schema_violation) throw;
            problem = e.what();
            audit(ctx, "repair", {{"role", role}, {"attempt", attempt + 1}, {"problem", problem}});
        }
    }
    throw Error(Errc::parse_failure, role + ": " + problem);
}

std::vector<std::string> string_list(const json& j, const std::string& what) {
    if (!j.is_array()) throw Error(Errc::parse_failure, what + " must be a JSON array");
    std::vector<std::string> out;
    for (const auto& v : j) {
        if (!v.is_string()) throw Error(Errc::parse_failure, what + " must hold strings");
        out.push_back(trim(v.get<std::string>()));
    }
    return out;
}

std::string render_profiles(const std::vector<ActorProfile>& profiles) {
    json arr = json::array();
    for (const auto& p : profiles) arr.push_back(to_json_value(p));
    return arr.dump(2);
}

std::string render_points(const std::vector<Point>& points) {
    json arr = json::array();
    for (const auto& p : points) arr.push_back(to_json_value(p));
    return arr.dump(2);
}

std::string feedback_text(const ReviewResult* feedback) {
    if (!feedback) return {};
    std::string out = "\n\nThe reviewer asked for changes.\nIssues:\n";
    for (const auto& i : feedback->issues) out += "- " + i + "\n";
    out += "Suggestions:\n";
    for (const auto& s : feedback->suggestions) out += "- " + s + "\n";
    return out;
}

constexpr std::string_view kPointShape =
    R"({"description": "...", "entry_name_list": ["..."], "leave_name_list": ["..."], "flag": {"description": "...", "result": "..."}})";

Point checked_point(const json& j, const std::string& path) {
    auto p = parse_point(j, path);
    if (trim(p.flag.description).empty()) throw Error(Errc::parse_failure, path + ".flag.description: empty flag");
    return p;
}

void check_relative_parents(const Scene& scene) {
    for (const auto& p : scene.props) {
        if (p.placement.is_absolute()) continue;
        if (!scene.find_prop(*p.placement.relative_to))
            throw Error(Errc::dangling_relative_parent, "scene " + scene.id + ": prop " + p.id + " is placed relative to missing '" +
                                                            *p.placement.relative_to + "'");
    }
}

void number_points(std::vector<Point>& points, const std::string& prefix) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].id.empty() || seen.contains(points[i].id)) points[i].id = prefix + std::to_string(i + 1);
        seen.insert(points[i].id);
    }
}

std::string director_synopsis(const std::string& topic, const std::vector<ActorProfile>& profiles,
                              const std::vector<Point>& points, const PlanningContext& ctx) {
    std::ostringstream sys;
    sys << "You are the Director. Check that the cast and the plot points fit the theme and each other, then "
           "summarise the structure and progression of the drama in a short paragraph.";
    std::ostringstream user;
    user << "Theme: " << topic << "\n\nCast:\n" << render_profiles(profiles) << "\n\nPoints:\n" << render_points(points);
    const auto reply = gw(ctx).complete(make_request("director", ctx.session_id, sys.str(), user.str()));
    return trim(reply.visible);
}

void throw_if_invalid(const NarrativeBlueprint& bp) {
    const auto violations = validate(bp);
    if (violations.empty()) return;
    std::string msg;
    for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.path + ": " + v.message;
    throw Error(Errc::validation_failure, msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// reviewer

ReviewResult parse_review(const ModelReply& reply, int round) {
    const auto j = extract_json(reply.visible);
    if (!j.is_object() || !j.contains("approved") || !j["approved"].is_boolean())
        throw Error(Errc::parse_failure, "review must be an object with a boolean 'approved'");
    ReviewResult r;
    r.round = round;
    r.approved = j["approved"].get<bool>();
    if (j.contains("issues")) r.issues = string_list(j["issues"], "issues");
    if (j.contains("suggestions")) r.suggestions = string_list(j["suggestions"], "suggestions");
    if (!r.approved && (r.suggestions.empty() || r.suggestions.size() > 3))
        throw Error(Errc::parse_failure, "a rejection must carry 1 to 3 suggestions, found " +
                                             std::to_string(r.suggestions.size()));
    return r;
}

ReviewResult review_once(const json& artifact, ReviewKind kind, const std::string& topic, int round,
                         const PlanningContext& ctx) {
    std::ostringstream sys;
    sys << "You review a drama script in preparation. Judge whether the " << to_string(kind)
        << " below fit the theme and are reasonable, vivid and consistent. When something is wrong, list the "
           "problems and give one to three concrete suggestions. This is review round "
        << round << " of at most " << kMaxReviewRounds - 1
        << ". Reply with JSON only: {\"approved\": true|false, \"issues\": [...], \"suggestions\": [...]}";
    std::ostringstream user;
    user << "Theme: " << topic << "\n\n" << artifact.dump(2);
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto prompt = user.str();
        if (attempt == 1)
            prompt += "\n\nThe previous reply could not be used (" + problem +
                      "). Reply again with JSON only: {\"approved\": bool, \"issues\": [...], \"suggestions\": [1 to 3 items]}";
        const auto reply = gw(ctx).complete(
            make_request("reviewer/" + std::string(to_string(kind)), ctx.session_id, sys.str(), prompt));
        try {
            return parse_review(reply, round);
        } catch (const Error& e) {
            if (e.code() != Errc::parse_failure) throw;
            problem = e.what();
            audit(ctx, "repair", {{"role", "reviewer/" + std::string(to_string(kind))}, {"problem", problem}});
        }
    }
    throw Error(Errc::parse_failure, "reviewer: " + problem);
}

// ---------------------------------------------------------------------------
// actor designer

std::vector<std::string> generate_actor_list(const std::string& topic, const PlanningContext& ctx) {
    if (trim(topic).empty()) throw Error(Errc::precondition, "empty topic");
    const std::string sys =
        "You design the cast of a drama. List the characters the theme needs, without duplicates and without "
        "anyone unrelated to it. Reply with a JSON array of character names only.";
    std::vector<std::string> dropped;
    auto names = ask_structured(ctx, "actor_designer/list", sys, "Theme: " + topic, R"(["Name", "Name"])",
                                [&](const json& j) {
                                    auto raw = string_list(j.is_object() && j.contains("actors") ? j["actors"] : j,
                                                           "actor list");
                                    std::vector<std::string> out;
                                    dropped.clear();
                                    for (auto& n : raw) {
                                        if (n.empty()) continue;
                                        if (std::find(out.begin(), out.end(), n) != out.end()) dropped.push_back(n);
                                        else out.push_back(std::move(n));
                                    }
                                    if (out.empty()) throw Error(Errc::parse_failure, "actor list is empty");
                                    return out;
                                });
    audit(ctx, "actor_list", {{"names", names}, {"duplicates_dropped", dropped}});
    return names;
}

std::vector<ActorProfile> generate_actor_profiles(const std::string& topic, const std::vector<std::string>& names,
                                                  const PlanningContext& ctx, const ReviewResult* feedback,
                                                  const std::vector<ActorProfile>* previous) {
    if (names.empty()) throw Error(Errc::precondition, "no actor names");
    std::ostringstream references;
    json searches = json::array();
    bool degraded = ctx.search == nullptr;
    if (ctx.search) {
        for (const auto& n : names) {
            try {
                const auto hits = ctx.search->search(n);
                json h = json::array();
                for (const auto& hit : hits) {
                    references << "- " << n << " / " << hit.title << ": " << hit.snippet << "\n";
                    h.push_back(hit.title);
                }
                searches.push_back({{"query", n}, {"provider", ctx.search->name()}, {"hits", h}});
            } catch (const Error& e) {
                if (e.code() != Errc::search_unavailable) throw;
                degraded = true;
                searches.push_back({{"query", n}, {"provider", ctx.search->name()}, {"error", e.what()}});
            }
        }
    }
    audit(ctx, "search", {{"queries", searches}, {"degraded", degraded}});

    std::ostringstream sys;
    sys << "You write detailed character profiles for a drama. For every character give a persona, a background, "
           "relationships to other characters, an initial goal and a few memories. Reply with a JSON array of "
           "objects, one per character, with the keys name, persona, background, relationships (object from "
           "character name to description), initial_goal and memory (array of strings).";
    std::ostringstream user;
    user << "Theme: " << topic << "\nCharacters:";
    for (const auto& n : names) user << " " << n << ";";
    user << "\n";
    if (!references.str().empty()) user << "\nReference material:\n" << references.str();
    if (previous) user << "\nPrevious version:\n" << render_profiles(*previous) << "\n";
    user << feedback_text(feedback);

    auto profiles = ask_structured(
        ctx, "actor_designer/profiles", sys.str(), user.str(),
        R"([{"name": "...", "persona": "...", "background": "...", "relationships": {"Other": "..."}, "initial_goal": "...", "memory": ["..."]}])",
        [&](const json& j) {
            const auto& arr = j.is_object() && j.contains("actors") ? j["actors"] : j;
            if (!arr.is_array()) throw Error(Errc::parse_failure, "profiles must be a JSON array");
            std::map<std::string, ActorProfile> by_name;
            for (std::size_t i = 0; i < arr.size(); ++i) {
                auto p = parse_actor(arr[i], "$[" + std::to_string(i) + "]");
                if (trim(p.persona).empty())
                    throw Error(Errc::parse_failure, "$[" + std::to_string(i) + "].persona: empty persona");
                by_name[p.name] = std::move(p);
            }
            std::vector<ActorProfile> out;
            for (const auto& n : names) {
                auto it = by_name.find(n);
                if (it == by_name.end()) throw Error(Errc::parse_failure, "no profile for '" + n + "'");
                out.push_back(it->second);
            }
            return out;
        });
    std::set<std::string> cast(names.begin(), names.end());
    json external = json::array();
    for (auto& p : profiles) {
        for (auto& [target, rel] : p.relationships) {
            if (!cast.contains(target) && !rel.external) {
                rel.external = true;
                external.push_back(p.name + " -> " + target);
            }
        }
    }
    audit(ctx, "actor_profiles", {{"names", names}, {"marked_external", external}, {"revision", previous != nullptr}});
    return profiles;
}

// ---------------------------------------------------------------------------
// plot designer

PlotDraft generate_plot(const std::string& topic, const std::vector<ActorProfile>& profiles,
                        const PlanningContext& ctx, const ReviewResult* feedback, const PlotDraft* previous) {
    if (profiles.empty()) throw Error(Errc::precondition, "no profiles");
    const std::string cast = render_profiles(profiles);
    const std::string revision =
        (previous ? "\nPrevious plot:\n" + render_points(previous->points) + "\n" : std::string()) + feedback_text(feedback);

    const std::string end_sys =
        "You design the plot of a drama, working backwards from its ending. Describe only the final point: what "
        "happens, who enters and who leaves, and the flag, a concrete event that closes the point. Reply with one "
        "JSON object.";
    auto end_point = ask_structured(ctx, "plot_designer/end", end_sys,
                                    "Theme: " + topic + "\nCharacters:\n" + cast + revision, kPointShape,
                                    [](const json& j) { return checked_point(j, "$"); });
    audit(ctx, "plot/end", {{"point", to_json_value(end_point)}});

    const std::string points_sys =
        "You design the plot of a drama, working backwards from its ending. Given the final point, write the "
        "points that lead up to it, in story order, excluding the final point itself. Each point needs a "
        "description, who enters and who leaves, and a concrete flag. Reply with a JSON array of point objects "
        "(it may be empty).";
    auto preceding = ask_structured(
        ctx, "plot_designer/points", points_sys,
        "Theme: " + topic + "\nCharacters:\n" + cast + "\nFinal point:\n" + to_json_value(end_point).dump(2) + revision,
        "[" + std::string(kPointShape) + "]", [](const json& j) {
            const auto& arr = j.is_object() && j.contains("points") ? j["points"] : j;
            if (!arr.is_array()) throw Error(Errc::parse_failure, "points must be a JSON array");
            std::vector<Point> out;
            for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(checked_point(arr[i], "$[" + std::to_string(i) + "]"));
            return out;
        });
    audit(ctx, "plot/points", {{"count", preceding.size()}});

    PlotDraft draft;
    draft.points = std::move(preceding);
    draft.points.push_back(end_point);
    number_points(draft.points, "p");
    draft.end_point = draft.points.back();
    for (const auto& p : draft.points) draft.narrative_text += (draft.narrative_text.empty() ? "" : "\n") + p.description;
    return draft;
}

std::vector<Scene> generate_scene_props(const std::string& topic, const PlotDraft& draft, const PlanningContext& ctx) {
    const std::string sys =
        "You design the stage for a drama: the environment and the objects actors can interact with. Large, "
        "obvious objects get an absolute position; small or hidden objects are placed relative to another object "
        "in the same scene. Reply with a JSON array of scenes: "
        R"([{"id": "...", "environment_description": "...", "props": [{"id": "...", "name": "...", "description": "...", "placement": {"absolute": "..."} or {"relative_to": "<prop id>", "text": "..."}, "state": {"key": "value"}}]}])";
    auto scenes = ask_structured(ctx, "scene_designer", sys, "Theme: " + topic + "\nPlot:\n" + render_points(draft.points),
                                 R"([{"id": "...", "environment_description": "...", "props": []}])", [](const json& j) {
                                     const auto& arr = j.is_object() && j.contains("scenes") ? j["scenes"] : j;
                                     if (!arr.is_array() || arr.empty())
                                         throw Error(Errc::parse_failure, "expected a non-empty scene array");
                                     std::vector<Scene> out;
                                     for (std::size_t i = 0; i < arr.size(); ++i)
                                         out.push_back(parse_scene(arr[i], "$[" + std::to_string(i) + "]"));
                                     return out;
                                 });
    for (const auto& s : scenes) check_relative_parents(s);
    json ids = json::array();
    for (const auto& s : scenes) ids.push_back(s.id);
    audit(ctx, "scenes", {{"scene_ids", ids}});
    return scenes;
}

// ---------------------------------------------------------------------------
// director

NarrativeBlueprint assemble_blueprint(const std::string& topic, const std::vector<ActorProfile>& profiles,
                                      const PlotDraft& draft, const std::vector<Scene>& scenes,
                                      const PlanningContext& ctx) {
    NarrativeBlueprint bp;
    bp.topic = topic;
    bp.actors = profiles;
    bp.scenes = scenes;
    Act act;
    act.id = "act1";
    for (const auto& s : scenes) act.scene_ids.push_back(s.id);
    act.points = draft.points;
    act.end_point_id = draft.points.empty() ? std::string() : draft.points.back().id;
    bp.acts.push_back(std::move(act));
    bp.source.kind = Source::Kind::topic;
    const auto synopsis = director_synopsis(topic, profiles, draft.points, ctx);
    if (!synopsis.empty()) bp.extra["synopsis"] = synopsis;
    throw_if_invalid(bp);
    audit(ctx, "blueprint", {{"acts", bp.acts.size()}, {"points", bp.acts[0].points.size()}});
    return bp;
}

// ---------------------------------------------------------------------------
// literary works

std::vector<std::string> segment_literary_work(const std::string& full_text, const PlanningContext& ctx) {
    if (trim(full_text).empty()) throw Error(Errc::precondition, "empty text");
    static const std::regex heading(
        R"(^\s*(chapter|act|book|part)\s+([0-9]+|[ivxlcdm]+|one|two|three|four|five|six|seven|eight|nine|ten|eleven|twelve)\b.*$)",
        std::regex::icase);
    std::vector<std::string> segments;
    std::istringstream in(full_text);
    std::string line;
    bool in_segment = false;
    while (std::getline(in, line)) {
        if (std::regex_match(line, heading)) {
            segments.emplace_back();
            in_segment = true;
        }
        if (in_segment) segments.back() += line + "\n";
    }
    if (!segments.empty()) {
        for (auto& s : segments) s = trim(s);
        audit(ctx, "segment", {{"method", "headings"}, {"count", segments.size()}});
        return segments;
    }
    const std::string sys =
        "Split the literary text below into a sequence of acts following its chapters and content structure. "
        "For each act write a short topic describing what happens in it. Reply with a JSON array of strings.";
    segments = ask_structured(ctx, "segmenter", sys, full_text, R"(["act topic", "act topic"])", [](const json& j) {
        auto out = string_list(j, "segments");
        out.erase(std::remove_if(out.begin(), out.end(), [](const std::string& s) { return s.empty(); }), out.end());
        if (out.empty()) throw Error(Errc::parse_failure, "segmentation is empty");
        return out;
    });
    audit(ctx, "segment", {{"method", "model"}, {"count", segments.size()}});
    return segments;
}

// ---------------------------------------------------------------------------
// pipelines

namespace {

std::vector<ActorProfile> reviewed_profiles(const std::string& topic, const PlanningContext& ctx) {
    const auto names = generate_actor_list(topic, ctx);
    auto reviewed = review_loop<std::vector<ActorProfile>>(
        generate_actor_profiles(topic, names, ctx), ReviewKind::actors, topic, ctx,
        [](const std::vector<ActorProfile>& p) { return json::parse(render_profiles(p)); },
        [&](const std::vector<ActorProfile>& prev, const ReviewResult& r) {
            return generate_actor_profiles(topic, names, ctx, &r, &prev);
        });
    return reviewed.artifact;
}

PlotDraft reviewed_plot(const std::string& topic, const std::vector<ActorProfile>& profiles, const PlanningContext& ctx) {
    auto reviewed = review_loop<PlotDraft>(
        generate_plot(topic, profiles, ctx), ReviewKind::plot, topic, ctx,
        [](const PlotDraft& d) { return json::parse(render_points(d.points)); },
        [&](const PlotDraft& prev, const ReviewResult& r) { return generate_plot(topic, profiles, ctx, &r, &prev); });
    return reviewed.artifact;
}

}  // namespace

NarrativeBlueprint plan_topic(const std::string& topic, const PlanningContext& ctx) {
    audit(ctx, "start", {{"topic", topic}});
    const auto profiles = reviewed_profiles(topic, ctx);
    const auto draft = reviewed_plot(topic, profiles, ctx);
    const auto scenes = generate_scene_props(topic, draft, ctx);
    return assemble_blueprint(topic, profiles, draft, scenes, ctx);
}

NarrativeBlueprint plan_literary_work(const std::string& title, const std::string& full_text,
                                      const PlanningContext& ctx) {
    audit(ctx, "start", {{"work", title}});
    const auto segments = segment_literary_work(full_text, ctx);
    const std::string topic = title;
    const auto profiles = reviewed_profiles(topic, ctx);

    NarrativeBlueprint bp;
    bp.topic = topic;
    bp.actors = profiles;
    bp.source = {Source::Kind::literary_work, title};
    std::vector<Point> all_points;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto act_topic = title + ", act " + std::to_string(i + 1) + ": " + segments[i].substr(0, 4000);
        auto draft = reviewed_plot(act_topic, profiles, ctx);
        auto scenes = generate_scene_props(act_topic, draft, ctx);
        Act act;
        act.id = "act" + std::to_string(i + 1);
        for (auto& s : scenes) {
            s.id = act.id + "-" + s.id;
            act.scene_ids.push_back(s.id);
            bp.scenes.push_back(s);
        }
        act.points = draft.points;
        for (auto& p : act.points)
            if (p.scene_id) p.scene_id = act.id + "-" + *p.scene_id;
        act.end_point_id = act.points.back().id;
        all_points.insert(all_points.end(), act.points.begin(), act.points.end());
        bp.acts.push_back(std::move(act));
    }
    const auto synopsis = director_synopsis(topic, profiles, all_points, ctx);
    if (!synopsis.empty()) bp.extra["synopsis"] = synopsis;
    throw_if_invalid(bp);
    audit(ctx, "blueprint", {{"acts", bp.acts.size()}});
    return bp;
}

}  // namespace stagecraft
