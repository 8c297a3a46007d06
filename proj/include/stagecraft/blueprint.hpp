#pragma once

// Narrative blueprint: actors, acts, scenes, points and props, plus the canonical JSON
// document form and structural validation.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stagecraft {

inline constexpr int kBlueprintSchemaVersion = 1;

enum class Controller { ai, human };

struct Relationship {
    std::string description;
    bool external = false;  ///< target is not a cast member

    friend bool operator==(const Relationship&, const Relationship&) = default;
};

struct ActorProfile {
    std::string name;
    std::string persona;
    std::string background;
    std::map<std::string, Relationship> relationships;
    std::string initial_goal;
    std::string private_goal;
    std::vector<std::string> memory;
    Controller controller = Controller::ai;
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const ActorProfile&, const ActorProfile&) = default;
};

struct Placement {
    std::optional<std::string> relative_to;  ///< parent prop id; absent = absolute
    std::string text;

    bool is_absolute() const { return !relative_to.has_value(); }
    friend bool operator==(const Placement&, const Placement&) = default;
};

using PropState = std::map<std::string, std::string>;

struct Prop {
    std::string id;
    std::string name;
    std::string description;
    Placement placement;
    PropState state;
    bool interactable = true;
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const Prop&, const Prop&) = default;
};

struct FlagSpec {
    std::string description;
    std::string result;

    friend bool operator==(const FlagSpec&, const FlagSpec&) = default;
};

struct Point {
    std::string id;
    std::string description;
    std::vector<std::string> entry_list;
    std::vector<std::string> leave_list;
    FlagSpec flag;
    /// Scene that becomes active when this point is entered; absent keeps the current one.
    std::optional<std::string> scene_id;
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const Point&, const Point&) = default;
};

struct Scene {
    std::string id;
    std::string environment_description;
    std::vector<Prop> props;
    nlohmann::json extra = nlohmann::json::object();

    const Prop* find_prop(const std::string& prop_id) const;
    friend bool operator==(const Scene&, const Scene&) = default;
};

struct Act {
    std::string id;
    std::vector<std::string> scene_ids;
    std::vector<Point> points;
    std::string end_point_id;
    nlohmann::json extra = nlohmann::json::object();

    friend bool operator==(const Act&, const Act&) = default;
};

struct Source {
    enum class Kind { topic, literary_work } kind = Kind::topic;
    std::string title;

    friend bool operator==(const Source&, const Source&) = default;
};

struct NarrativeBlueprint {
    std::string topic;
    std::vector<ActorProfile> actors;
    std::vector<Act> acts;
    std::vector<Scene> scenes;
    Source source;
    nlohmann::json extra = nlohmann::json::object();

    const ActorProfile* find_actor(const std::string& name) const;
    const Scene* find_scene(const std::string& id) const;
    friend bool operator==(const NarrativeBlueprint&, const NarrativeBlueprint&) = default;
};

struct Violation {
    std::string path;
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

/// Checks every structural invariant. Pure and total: never throws.
std::vector<Violation> validate(const NarrativeBlueprint& blueprint);

/// Canonical document: lexicographic key order, list order preserved, unknown fields
/// carried through.
nlohmann::json to_document(const NarrativeBlueprint& blueprint);
std::string serialize(const NarrativeBlueprint& blueprint);

/// Throws Error{schema_violation} with the offending path on malformed documents.
NarrativeBlueprint parse_blueprint(const nlohmann::json& document);
NarrativeBlueprint parse_blueprint(std::string_view text);

// Element-level conversions, reused by the planning agents' reply parsers.
nlohmann::json to_json_value(const ActorProfile& actor);
nlohmann::json to_json_value(const Point& point);
nlohmann::json to_json_value(const Scene& scene);
ActorProfile parse_actor(const nlohmann::json& j, const std::string& path);
Point parse_point(const nlohmann::json& j, const std::string& path);
Scene parse_scene(const nlohmann::json& j, const std::string& path);

std::string_view to_string(Controller c) noexcept;

}  // namespace stagecraft
