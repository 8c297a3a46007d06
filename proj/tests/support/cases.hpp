#pragma once

// Scripted runs of the case fixtures, shared by the unit and acceptance suites.

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stagecraft/blueprint.hpp"
#include "stagecraft/gateway.hpp"
#include "stagecraft/stage.hpp"
#include "stagecraft/transcript.hpp"

namespace stagecraft::testing {

inline std::filesystem::path fixture(const std::string& rel) {
    return std::filesystem::path(STAGECRAFT_FIXTURE_DIR) / rel;
}

inline std::string read_fixture(const std::string& rel) {
    std::ifstream in(fixture(rel));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline NarrativeBlueprint load_blueprint(const std::string& name) {
    return parse_blueprint(std::string_view(read_fixture("blueprints/" + name + ".json")));
}

struct CaseRun {
    int number = 0;
    NarrativeBlueprint blueprint;
    Roster roster;
    StageConfig config;
    std::shared_ptr<ScriptedBackend> backend;
    std::vector<TranscriptEvent> events;
    StageState state;
    std::vector<std::string> warnings;
    /// Checksum of the prop states right after start.
    std::string initial_checksum;
};

inline constexpr int kCaseCount = 6;

/// Human turns used by the human-player cases.
inline const char* kCase2Input = "(Take out a rifle, aim at Claudius and pull the trigger) Give my father my regards, Claudius!";
inline const char* kCase3Input = "(Leap into the air and fly out through the palace window) Ha! Nothing can hold me now!";
inline const std::vector<std::string> kCase4Inputs = {
    "(Take out the dagger and stab Claudius)",
    "(Drive the dagger into Claudius)",
    "(Stab at Claudius again)",
    "(Stab the curtain)",
};
inline const char* kCase4Noise = "Something rustles behind the curtain.";

inline CaseRun run_case(int n) {
    CaseRun run;
    run.number = n;
    const bool hamlet = n <= 4;
    run.blueprint = load_blueprint(hamlet ? "hamlet_closet" : "murder_study");
    run.roster = default_roster(run.blueprint);
    run.backend = ScriptedBackend::from_jsonl(fixture("scripts/case" + std::to_string(n) + ".jsonl"));
    auto gateway = std::make_shared<const Gateway>(run.backend);
    auto input = std::make_shared<QueuedInput>();
    if (n >= 2 && n <= 4) run.roster["Hamlet"] = Controller::human;
    if (n == 2) input->push("Hamlet", kCase2Input);
    if (n == 3) input->push("Hamlet", kCase3Input);
    if (n == 4)
        for (const auto& t : kCase4Inputs) input->push("Hamlet", t);
    if (n == 4) run.config.stall_threshold = 3;
    if (n >= 5) {
        run.config.review_mode = ReviewMode::always;
        run.config.stall_threshold = 10;
    }
    auto log = std::make_shared<EventLog>();
    Session session(run.blueprint, run.roster, gateway, run.config, "case" + std::to_string(n), input, log);
    session.start();
    run.initial_checksum = state_checksum(session.state().prop_states);
    if (n <= 3) {
        session.step();
    } else if (n == 4) {
        session.step();
        session.broadcast_environment(kCase4Noise);
        session.step();
        session.step();
        session.step();
    } else {
        for (int i = 0; i < 12 && session.state().point_index == 0; ++i) session.step();
    }
    run.events = log->snapshot();
    run.state = session.state();
    run.warnings = session.warnings();
    return run;
}

inline std::vector<TranscriptEvent> of_type(const std::vector<TranscriptEvent>& events, const std::string& type) {
    std::vector<TranscriptEvent> out;
    for (const auto& e : events)
        if (e.data.is_object() && e.data.value("type", "") == type) out.push_back(e);
    return out;
}

inline std::vector<TranscriptEvent> of_kind(const std::vector<TranscriptEvent>& events, EventKind kind) {
    std::vector<TranscriptEvent> out;
    for (const auto& e : events)
        if (e.kind == kind) out.push_back(e);
    return out;
}

}  // namespace stagecraft::testing
