#include "stagecraft/blueprint.hpp"

#include <algorithm>
#include <functional>
#include <set>

#include "stagecraft/error.hpp"
#include "stagecraft/markup.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(Controller c) noexcept { return c == Controller::human ? "human" : "ai"; }

const Prop* Scene::find_prop(const std::string& prop_id) const {
    auto it = std::find_if(props.begin(), props.end(), [&](const Prop& p) { return p.id == prop_id; });
    return it == props.end() ? nullptr : &*it;
}

const ActorProfile* NarrativeBlueprint::find_actor(const std::string& name) const {
    auto it = std::find_if(actors.begin(), actors.end(), [&](const ActorProfile& a) { return a.name == name; });
    return it == actors.end() ? nullptr : &*it;
}

const Scene* NarrativeBlueprint::find_scene(const std::string& id) const {
    auto it = std::find_if(scenes.begin(), scenes.end(), [&](const Scene& s) { return s.id == id; });
    return it == scenes.end() ? nullptr : &*it;
}

// ---------------------------------------------------------------------------
// validate

namespace {

std::string idx(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

void validate_scene(const Scene& scene, const std::string& path, std::vector<Violation>& out) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < scene.props.size(); ++i) {
        const auto& p = scene.props[i];
        const auto ppath = idx(path + ".props", i);
        if (p.id.empty()) out.push_back({ppath + ".id", "prop id is empty"});
        if (!ids.insert(p.id).second) out.push_back({ppath + ".id", "duplicate prop id '" + p.id + "'"});
    }
    for (std::size_t i = 0; i < scene.props.size(); ++i) {
        const auto& p = scene.props[i];
        if (p.placement.is_absolute()) continue;
        const auto ppath = idx(path + ".props", i) + ".placement.relative_to";
        if (scene.find_prop(*p.placement.relative_to) == nullptr) {
            out.push_back({ppath, "relative parent '" + *p.placement.relative_to + "' not in scene"});
            continue;
        }
        // Walk the parent chain; revisiting the start prop means a cycle.
        std::set<std::string> seen{p.id};
        const Prop* cur = scene.find_prop(*p.placement.relative_to);
        while (cur != nullptr) {
            if (!seen.insert(cur->id).second) {
                if (cur->id == p.id) out.push_back({ppath, "placement cycle through '" + p.id + "'"});
                break;
            }
            cur = cur->placement.is_absolute() ? nullptr : scene.find_prop(*cur->placement.relative_to);
        }
    }
}

}  // namespace

std::vector<Violation> validate(const NarrativeBlueprint& bp) {
    std::vector<Violation> out;
    std::set<std::string> names;
    if (bp.actors.empty()) out.push_back({"actors", "at least one actor required"});
    for (std::size_t i = 0; i < bp.actors.size(); ++i) {
        const auto& a = bp.actors[i];
        if (a.name.empty()) out.push_back({idx("actors", i) + ".name", "actor name is empty"});
        else if (!names.insert(a.name).second)
            out.push_back({idx("actors", i) + ".name", "duplicate actor name '" + a.name + "'"});
    }
    for (std::size_t i = 0; i < bp.actors.size(); ++i) {
        for (const auto& [target, rel] : bp.actors[i].relationships) {
            if (!rel.external && !names.contains(target))
                out.push_back({idx("actors", i) + ".relationships." + target,
                               "relationship names unknown actor '" + target + "' not marked external"});
        }
    }

    std::set<std::string> scene_ids;
    for (std::size_t i = 0; i < bp.scenes.size(); ++i) {
        const auto& s = bp.scenes[i];
        if (!scene_ids.insert(s.id).second)
            out.push_back({idx("scenes", i) + ".id", "duplicate scene id '" + s.id + "'"});
        validate_scene(s, idx("scenes", i), out);
    }

    if (bp.acts.empty()) out.push_back({"acts", "at least one act required"});
    std::set<std::string> act_ids;
    for (std::size_t ai = 0; ai < bp.acts.size(); ++ai) {
        const auto& act = bp.acts[ai];
        const auto apath = idx("acts", ai);
        if (!act_ids.insert(act.id).second) out.push_back({apath + ".id", "duplicate act id '" + act.id + "'"});
        if (act.scene_ids.empty()) out.push_back({apath + ".scene_ids", "act has no scenes"});
        for (std::size_t si = 0; si < act.scene_ids.size(); ++si) {
            if (!scene_ids.contains(act.scene_ids[si]))
                out.push_back({idx(apath + ".scene_ids", si), "unknown scene '" + act.scene_ids[si] + "'"});
        }
        if (act.points.empty()) {
            out.push_back({apath + ".points", "act has no points"});
            continue;
        }
        std::set<std::string> point_ids;
        for (std::size_t pi = 0; pi < act.points.size(); ++pi) {
            const auto& pt = act.points[pi];
            const auto ppath = idx(apath + ".points", pi);
            if (pt.id.empty()) out.push_back({ppath + ".id", "point id is empty"});
            else if (!point_ids.insert(pt.id).second)
                out.push_back({ppath + ".id", "duplicate point id '" + pt.id + "'"});
            if (trim(pt.flag.description).empty()) out.push_back({ppath + ".flag.description", "flag description is empty"});
            for (std::size_t k = 0; k < pt.entry_list.size(); ++k)
                if (!names.contains(pt.entry_list[k]))
                    out.push_back({idx(ppath + ".entry_list", k), "unknown actor '" + pt.entry_list[k] + "'"});
            for (std::size_t k = 0; k < pt.leave_list.size(); ++k)
                if (!names.contains(pt.leave_list[k]))
                    out.push_back({idx(ppath + ".leave_list", k), "unknown actor '" + pt.leave_list[k] + "'"});
            if (pt.scene_id && std::find(act.scene_ids.begin(), act.scene_ids.end(), *pt.scene_id) == act.scene_ids.end())
                out.push_back({ppath + ".scene_id", "scene '" + *pt.scene_id + "' is not part of the act"});
        }
        if (act.end_point_id != act.points.back().id)
            out.push_back({apath + ".end_point_id", "end point must be the last point ('" + act.points.back().id + "')"});
    }
    return out;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

void merge_extra(json& j, const json& extra) {
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
}

json collect_extra(const json& j, std::initializer_list<std::string_view> known) {
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(known.begin(), known.end(), it.key()) == known.end()) extra[it.key()] = it.value();
    }
    return extra;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& expected, const json& found) {
    throw Error(Errc::schema_violation, path + ": expected " + expected + ", found " +
                                            (found.is_null() ? std::string("nothing") : std::string(found.type_name())));
}

const json& require_object(const json& j, const std::string& path) {
    if (!j.is_object()) schema_error(path, "object", j);
    return j;
}

std::string get_string(const json& j, const std::string& key, const std::string& path, bool required,
                       std::string fallback = {}) {
    if (!j.contains(key)) {
        if (required) schema_error(path + "." + key, "string", json());
        return fallback;
    }
    const auto& v = j.at(key);
    if (!v.is_string()) schema_error(path + "." + key, "string", v);
    return v.get<std::string>();
}

std::vector<std::string> get_strings(const json& j, const std::string& key, const std::string& path, bool required) {
    std::vector<std::string> out;
    if (!j.contains(key)) {
        if (required) schema_error(path + "." + key, "array of strings", json());
        return out;
    }
    const auto& v = j.at(key);
    if (!v.is_array()) schema_error(path + "." + key, "array of strings", v);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) schema_error(idx(path + "." + key, i), "string", v[i]);
        out.push_back(v[i].get<std::string>());
    }
    return out;
}

const json& get_array(const json& j, const std::string& key, const std::string& path, bool non_empty) {
    static const json empty = json::array();
    if (!j.contains(key)) {
        if (non_empty) schema_error(path + "." + key, "non-empty array", json());
        return empty;
    }
    const auto& v = j.at(key);
    if (!v.is_array()) schema_error(path + "." + key, "array", v);
    if (non_empty && v.empty()) throw Error(Errc::schema_violation, path + "." + key + ": expected non-empty array, found empty array");
    return v;
}

json placement_json(const Placement& p) {
    if (p.is_absolute()) return {{"absolute", p.text}};
    return {{"relative_to", *p.relative_to}, {"text", p.text}};
}

Placement parse_placement(const json& j, const std::string& path) {
    require_object(j, path);
    Placement p;
    if (j.contains("relative_to")) {
        p.relative_to = get_string(j, "relative_to", path, true);
        p.text = get_string(j, "text", path, false);
    } else if (j.contains("absolute")) {
        p.text = get_string(j, "absolute", path, true);
    } else {
        schema_error(path, "object with 'absolute' or 'relative_to'", j);
    }
    return p;
}

json prop_json(const Prop& p) {
    json j = {{"id", p.id},
              {"name", p.name},
              {"description", p.description},
              {"placement", placement_json(p.placement)},
              {"state", p.state},
              {"interactable", p.interactable}};
    merge_extra(j, p.extra);
    return j;
}

Prop parse_prop(const json& j, const std::string& path) {
    require_object(j, path);
    Prop p;
    p.id = get_string(j, "id", path, true);
    p.name = get_string(j, "name", path, false, p.id);
    p.description = get_string(j, "description", path, false);
    if (j.contains("placement")) p.placement = parse_placement(j["placement"], path + ".placement");
    if (j.contains("state")) {
        const auto& st = require_object(j["state"], path + ".state");
        for (auto it = st.begin(); it != st.end(); ++it) {
            if (!it.value().is_string()) schema_error(path + ".state." + it.key(), "string", it.value());
            p.state[it.key()] = it.value().get<std::string>();
        }
    }
    if (j.contains("interactable")) {
        if (!j["interactable"].is_boolean()) schema_error(path + ".interactable", "boolean", j["interactable"]);
        p.interactable = j["interactable"].get<bool>();
    }
    p.extra = collect_extra(j, {"id", "name", "description", "placement", "state", "interactable"});
    return p;
}

json act_json(const Act& a) {
    json points = json::array();
    for (const auto& p : a.points) points.push_back(to_json_value(p));
    json j = {{"id", a.id}, {"scene_ids", a.scene_ids}, {"points", points}, {"end_point_id", a.end_point_id}};
    merge_extra(j, a.extra);
    return j;
}

Act parse_act(const json& j, const std::string& path) {
    require_object(j, path);
    Act a;
    a.id = get_string(j, "id", path, true);
    a.scene_ids = get_strings(j, "scene_ids", path, true);
    if (a.scene_ids.empty()) throw Error(Errc::schema_violation, path + ".scene_ids: expected non-empty array, found empty array");
    const auto& pts = get_array(j, "points", path, true);
    for (std::size_t i = 0; i < pts.size(); ++i) a.points.push_back(parse_point(pts[i], idx(path + ".points", i)));
    a.end_point_id = get_string(j, "end_point_id", path, false, a.points.back().id);
    a.extra = collect_extra(j, {"id", "scene_ids", "points", "end_point_id"});
    return a;
}

}  // namespace

json to_json_value(const ActorProfile& a) {
    json rel = json::object();
    for (const auto& [target, r] : a.relationships) {
        if (r.external) rel[target] = {{"description", r.description}, {"external", true}};
        else rel[target] = r.description;
    }
    json j = {{"name", a.name},
              {"persona", a.persona},
              {"background", a.background},
              {"relationships", rel},
              {"initial_goal", a.initial_goal},
              {"private_goal", a.private_goal},
              {"memory", a.memory},
              {"controller", std::string(to_string(a.controller))}};
    merge_extra(j, a.extra);
    return j;
}

ActorProfile parse_actor(const json& j, const std::string& path) {
    require_object(j, path);
    ActorProfile a;
    a.name = get_string(j, "name", path, true);
    a.persona = get_string(j, "persona", path, true);
    a.background = get_string(j, "background", path, false);
    if (j.contains("relationships")) {
        const auto& rel = require_object(j["relationships"], path + ".relationships");
        for (auto it = rel.begin(); it != rel.end(); ++it) {
            const auto rpath = path + ".relationships." + it.key();
            Relationship r;
            if (it.value().is_string()) {
                r.description = it.value().get<std::string>();
            } else if (it.value().is_object()) {
                r.description = get_string(it.value(), "description", rpath, true);
                r.external = it.value().value("external", false);
            } else {
                schema_error(rpath, "string or object", it.value());
            }
            a.relationships[it.key()] = r;
        }
    }
    a.initial_goal = get_string(j, "initial_goal", path, false);
    a.private_goal = get_string(j, "private_goal", path, false, a.initial_goal);
    a.memory = get_strings(j, "memory", path, false);
    const auto controller = get_string(j, "controller", path, false, "ai");
    if (controller == "human") a.controller = Controller::human;
    else if (controller == "ai") a.controller = Controller::ai;
    else schema_error(path + ".controller", "\"ai\" or \"human\"", j["controller"]);
    a.extra = collect_extra(j, {"name", "persona", "background", "relationships", "initial_goal", "private_goal",
                                "memory", "controller"});
    return a;
}

json to_json_value(const Point& p) {
    json j = {{"id", p.id},
              {"description", p.description},
              {"entry_list", p.entry_list},
              {"leave_list", p.leave_list},
              {"flag", {{"description", p.flag.description}, {"result", p.flag.result}}}};
    if (p.scene_id) j["scene_id"] = *p.scene_id;
    merge_extra(j, p.extra);
    return j;
}

Point parse_point(const json& j, const std::string& path) {
    require_object(j, path);
    Point p;
    p.id = get_string(j, "id", path, false);
    p.description = get_string(j, "description", path, false);
    // Planner output uses entry_name_list / leave_name_list; both spellings are accepted.
    p.entry_list = j.contains("entry_list") ? get_strings(j, "entry_list", path, false)
                                            : get_strings(j, "entry_name_list", path, false);
    p.leave_list = j.contains("leave_list") ? get_strings(j, "leave_list", path, false)
                                            : get_strings(j, "leave_name_list", path, false);
    if (!j.contains("flag")) schema_error(path + ".flag", "object", json());
    const auto& flag = j["flag"];
    if (flag.is_string()) {
        p.flag.description = flag.get<std::string>();
    } else {
        require_object(flag, path + ".flag");
        p.flag.description = get_string(flag, "description", path + ".flag", true);
        p.flag.result = get_string(flag, "result", path + ".flag", false);
    }
    if (j.contains("scene_id")) p.scene_id = get_string(j, "scene_id", path, true);
    p.extra = collect_extra(j, {"id", "description", "entry_list", "leave_list", "entry_name_list", "leave_name_list",
                                "flag", "scene_id"});
    return p;
}

json to_json_value(const Scene& s) {
    json props = json::array();
    for (const auto& p : s.props) props.push_back(prop_json(p));
    json j = {{"id", s.id}, {"environment_description", s.environment_description}, {"props", props}};
    merge_extra(j, s.extra);
    return j;
}

Scene parse_scene(const json& j, const std::string& path) {
    require_object(j, path);
    Scene s;
    s.id = get_string(j, "id", path, true);
    s.environment_description = get_string(j, "environment_description", path, false);
    const auto& props = get_array(j, "props", path, false);
    for (std::size_t i = 0; i < props.size(); ++i) s.props.push_back(parse_prop(props[i], idx(path + ".props", i)));
    s.extra = collect_extra(j, {"id", "environment_description", "props"});
    return s;
}

json to_document(const NarrativeBlueprint& bp) {
    json actors = json::array();
    for (const auto& a : bp.actors) actors.push_back(to_json_value(a));
    json acts = json::array();
    for (const auto& a : bp.acts) acts.push_back(act_json(a));
    json scenes = json::array();
    for (const auto& s : bp.scenes) scenes.push_back(to_json_value(s));
    json source = {{"kind", bp.source.kind == Source::Kind::topic ? "topic" : "literary_work"}};
    if (bp.source.kind == Source::Kind::literary_work) source["title"] = bp.source.title;
    json j = {{"schema_version", kBlueprintSchemaVersion},
              {"topic", bp.topic},
              {"actors", actors},
              {"acts", acts},
              {"scenes", scenes},
              {"source", source}};
    merge_extra(j, bp.extra);
    return j;
}

std::string serialize(const NarrativeBlueprint& bp) { return to_document(bp).dump(2) + "\n"; }

NarrativeBlueprint parse_blueprint(const json& doc) {
    require_object(doc, "$");
    if (doc.contains("schema_version")) {
        const auto& v = doc["schema_version"];
        if (!v.is_number_integer() || v.get<int>() != kBlueprintSchemaVersion)
            throw Error(Errc::schema_violation, "$.schema_version: expected " + std::to_string(kBlueprintSchemaVersion) +
                                                    ", found " + v.dump());
    }
    NarrativeBlueprint bp;
    bp.topic = get_string(doc, "topic", "$", false);
    const auto& actors = get_array(doc, "actors", "$", true);
    for (std::size_t i = 0; i < actors.size(); ++i) bp.actors.push_back(parse_actor(actors[i], idx("$.actors", i)));
    const auto& acts = get_array(doc, "acts", "$", true);
    for (std::size_t i = 0; i < acts.size(); ++i) bp.acts.push_back(parse_act(acts[i], idx("$.acts", i)));
    const auto& scenes = get_array(doc, "scenes", "$", false);
    for (std::size_t i = 0; i < scenes.size(); ++i) bp.scenes.push_back(parse_scene(scenes[i], idx("$.scenes", i)));
    if (doc.contains("source")) {
        const auto& src = require_object(doc["source"], "$.source");
        const auto kind = get_string(src, "kind", "$.source", true);
        if (kind == "topic") bp.source.kind = Source::Kind::topic;
        else if (kind == "literary_work") bp.source.kind = Source::Kind::literary_work;
        else schema_error("$.source.kind", "\"topic\" or \"literary_work\"", src["kind"]);
        bp.source.title = get_string(src, "title", "$.source", false);
    }
    bp.extra = collect_extra(doc, {"schema_version", "topic", "actors", "acts", "scenes", "source"});
    return bp;
}

NarrativeBlueprint parse_blueprint(std::string_view text) {
    auto doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw Error(Errc::schema_violation, "$: document is not valid JSON");
    return parse_blueprint(doc);
}

}  // namespace stagecraft
