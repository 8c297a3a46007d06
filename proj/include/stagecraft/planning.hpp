#pragma once

// Offline planning: topic (or literary work) to a validated blueprint through the actor
// designer, plot designer, scene designer, reviewer and director agents.
//
// Agent roles: actor_designer/list, actor_designer/profiles, reviewer/actors,
// plot_designer/end, plot_designer/points, reviewer/plot, scene_designer, director,
// segmenter. Structured replies are JSON; a reply that fails to parse is re-prompted
// once with the expected shape appended.

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/gateway.hpp"
#include "stagecraft/search.hpp"

namespace stagecraft {

inline constexpr int kMaxReviewRounds = 6;

/// Append-only record of pipeline steps.
class AuditTrail {
public:
    void record(std::string stage, nlohmann::json detail = nlohmann::json::object());
    std::vector<nlohmann::json> entries() const;
    /// Stage names in recorded order.
    std::vector<std::string> stages() const;
    void write_jsonl(const std::filesystem::path& path) const;

private:
    std::vector<nlohmann::json> entries_;
    mutable std::mutex mutex_;
};

struct PlanningContext {
    const Gateway* gateway = nullptr;
    SearchProvider* search = nullptr;  ///< optional
    AuditTrail* audit = nullptr;       ///< optional
    std::string session_id = "planning";
};

enum class ReviewKind { actors, plot };
std::string_view to_string(ReviewKind k) noexcept;

struct ReviewResult {
    bool approved = false;
    bool forced = false;
    std::vector<std::string> issues;
    std::vector<std::string> suggestions;
    int round = 1;
};

/// Reviewer reply: {"approved": bool, "issues": [...], "suggestions": [...]}. A rejection
/// must carry 1 to 3 suggestions; anything else is Errc::parse_failure.
ReviewResult parse_review(const ModelReply& reply, int round);

/// One reviewer call over a rendered artifact.
ReviewResult review_once(const nlohmann::json& artifact, ReviewKind kind, const std::string& topic, int round,
                         const PlanningContext& ctx);

template <class T>
struct Reviewed {
    T artifact;
    int rounds = 0;
    std::vector<ReviewResult> reviews;
};

/// Reviews and revises until approved. Round 6 is approved without a reviewer call.
template <class T>
Reviewed<T> review_loop(T artifact, ReviewKind kind, const std::string& topic, const PlanningContext& ctx,
                        const std::function<nlohmann::json(const T&)>& render,
                        const std::function<T(const T&, const ReviewResult&)>& reviser) {
    Reviewed<T> out;
    for (int round = 1; round <= kMaxReviewRounds; ++round) {
        ReviewResult r;
        if (round == kMaxReviewRounds) {
            r.approved = true;
            r.forced = true;
            r.round = round;
        } else {
            r = review_once(render(artifact), kind, topic, round, ctx);
        }
        if (ctx.audit)
            ctx.audit->record("review/" + std::string(to_string(kind)),
                              {{"round", round}, {"approved", r.approved}, {"forced", r.forced},
                               {"issues", r.issues}, {"suggestions", r.suggestions}});
        out.reviews.push_back(r);
        out.rounds = round;
        if (r.approved) break;
        artifact = reviser(artifact, r);
    }
    out.artifact = std::move(artifact);
    return out;
}

/// Throws precondition on an empty topic and parse_failure when no usable name array
/// arrives after the repair prompt. Duplicates are dropped.
std::vector<std::string> generate_actor_list(const std::string& topic, const PlanningContext& ctx);

/// One profile per name, in `names` order. `feedback` carries reviewer suggestions on
/// revision rounds.
std::vector<ActorProfile> generate_actor_profiles(const std::string& topic, const std::vector<std::string>& names,
                                                  const PlanningContext& ctx,
                                                  const ReviewResult* feedback = nullptr,
                                                  const std::vector<ActorProfile>* previous = nullptr);

struct PlotDraft {
    Point end_point;
    std::vector<Point> points;  ///< end point last
    std::string narrative_text;
};

/// Backward planning: the end point is generated first, then the points leading to it.
PlotDraft generate_plot(const std::string& topic, const std::vector<ActorProfile>& profiles,
                        const PlanningContext& ctx, const ReviewResult* feedback = nullptr,
                        const PlotDraft* previous = nullptr);

/// Throws dangling_relative_parent when a prop is placed relative to a missing prop.
std::vector<Scene> generate_scene_props(const std::string& topic, const PlotDraft& draft, const PlanningContext& ctx);

/// Single act for topic input. Throws Errc::validation_failure listing the violations.
NarrativeBlueprint assemble_blueprint(const std::string& topic, const std::vector<ActorProfile>& profiles,
                                      const PlotDraft& draft, const std::vector<Scene>& scenes,
                                      const PlanningContext& ctx);

/// Heading-driven split when chapter/act headings exist, model segmentation otherwise.
std::vector<std::string> segment_literary_work(const std::string& full_text, const PlanningContext& ctx);

/// Full pipeline for a topic.
NarrativeBlueprint plan_topic(const std::string& topic, const PlanningContext& ctx);

/// Full pipeline for a literary work: one act per segment.
NarrativeBlueprint plan_literary_work(const std::string& title, const std::string& full_text,
                                      const PlanningContext& ctx);

}  // namespace stagecraft
