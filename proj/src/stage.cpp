#include "stagecraft/stage.hpp"

#include <algorithm>
#include <future>
#include <set>
#include <sstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(ClockMode m) noexcept { return m == ClockMode::turns ? "turns" : "wall"; }

std::string_view to_string(ReviewMode m) noexcept {
    switch (m) {
        case ReviewMode::human_only: return "human_only";
        case ReviewMode::always: return "always";
        case ReviewMode::never: return "never";
    }
    return "human_only";
}

std::string_view to_string(SessionStatus s) noexcept {
    switch (s) {
        case SessionStatus::performing: return "performing";
        case SessionStatus::completed: return "completed";
        case SessionStatus::budget_exhausted: return "budget_exhausted";
        case SessionStatus::aborted: return "aborted";
    }
    return "performing";
}

json StageConfig::to_json() const {
    return {{"stall_threshold", stall_threshold},
            {"stall_seconds", stall_seconds},
            {"clock", std::string(to_string(clock))},
            {"turn_budget", turn_budget},
            {"history_window", history_window},
            {"review_mode", std::string(to_string(review_mode))},
            {"human_wait_ms", human_wait.count()},
            {"reveal_flags_to_humans", reveal_flags_to_humans}};
}

StageConfig StageConfig::from_json(const json& j) {
    StageConfig c;
    if (!j.is_object()) return c;
    c.stall_threshold = j.value("stall_threshold", c.stall_threshold);
    c.stall_seconds = j.value("stall_seconds", c.stall_seconds);
    const auto clock = j.value("clock", std::string("turns"));
    if (clock == "wall") c.clock = ClockMode::wall;
    else if (clock != "turns") throw Error(Errc::precondition, "unknown clock mode '" + clock + "'");
    c.turn_budget = j.value("turn_budget", c.turn_budget);
    c.history_window = j.value("history_window", c.history_window);
    const auto review = j.value("review_mode", std::string("human_only"));
    if (review == "always") c.review_mode = ReviewMode::always;
    else if (review == "never") c.review_mode = ReviewMode::never;
    else if (review != "human_only") throw Error(Errc::precondition, "unknown review mode '" + review + "'");
    c.human_wait = std::chrono::milliseconds(j.value("human_wait_ms", 0));
    c.reveal_flags_to_humans = j.value("reveal_flags_to_humans", false);
    if (c.stall_threshold < 1 || c.turn_budget < 1 || c.stall_seconds <= 0)
        throw Error(Errc::precondition, "thresholds and budget must be positive");
    return c;
}

Roster default_roster(const NarrativeBlueprint& blueprint) {
    Roster r;
    for (const auto& a : blueprint.actors) r[a.name] = a.controller;
    return r;
}

// ---------------------------------------------------------------------------

bool QueuedInput::push(const std::string& actor, std::string raw_text, std::size_t capacity) {
    {
        std::lock_guard lock(mutex_);
        auto& q = queues_[actor];
        if (capacity != 0 && q.size() >= capacity) return false;
        q.push_back(std::move(raw_text));
    }
    cv_.notify_all();
    return true;
}

std::size_t QueuedInput::pending(const std::string& actor) const {
    std::lock_guard lock(mutex_);
    auto it = queues_.find(actor);
    return it == queues_.end() ? 0 : it->second.size();
}

std::optional<std::string> QueuedInput::peek(const std::string& actor, std::chrono::milliseconds wait) {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, wait, [&] { return !queues_[actor].empty(); });
    auto& q = queues_[actor];
    if (q.empty()) return std::nullopt;
    return q.front();
}

void QueuedInput::consume(const std::string& actor) {
    std::lock_guard lock(mutex_);
    auto& q = queues_[actor];
    if (!q.empty()) q.pop_front();
}

// ---------------------------------------------------------------------------

std::string state_checksum(const std::map<std::string, PropStates>& prop_states) {
    return fnv1a_hex(json(prop_states).dump());
}

std::map<std::string, PropStates> initial_prop_states(const NarrativeBlueprint& blueprint) {
    std::map<std::string, PropStates> out;
    for (const auto& s : blueprint.scenes) {
        auto& scene = out[s.id];
        for (const auto& p : s.props) scene[p.id] = p.state;
    }
    return out;
}

namespace {

json diff_json(const std::vector<StateDiff>& diffs) {
    json arr = json::array();
    for (const auto& d : diffs) {
        json j = {{"prop_id", d.prop_id}, {"key", d.key}, {"new_value", d.new_value}};
        j["old_value"] = d.old_value ? json(*d.old_value) : json(nullptr);
        arr.push_back(std::move(j));
    }
    return arr;
}

std::string type_of(const TranscriptEvent& e) { return e.data.is_object() ? e.data.value("type", "") : ""; }

/// Events that belong in an actor's picture of the scene.
bool is_dialogue(const TranscriptEvent& e) {
    switch (e.kind) {
        case EventKind::speech:
        case EventKind::action_attempt:
        case EventKind::action_result:
        case EventKind::broadcast:
        case EventKind::instruction:
        case EventKind::thinking: return true;
        case EventKind::system: {
            const auto t = type_of(e);
            return t == "enter_point" || t == "entrance" || t == "exit" || t == "scene" || t == "stall";
        }
    }
    return false;
}

std::vector<std::string> in_blueprint_order(const NarrativeBlueprint& bp, const std::set<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& a : bp.actors)
        if (names.contains(a.name)) out.push_back(a.name);
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

Session::Session(NarrativeBlueprint blueprint, Roster roster, std::shared_ptr<const Gateway> gateway,
                 StageConfig config, std::string session_id, std::shared_ptr<InputSource> input,
                 std::shared_ptr<EventLog> log)
    : blueprint_(std::move(blueprint)),
      roster_(std::move(roster)),
      gateway_(std::move(gateway)),
      config_(config),
      session_id_(std::move(session_id)),
      input_(std::move(input)),
      log_(log ? std::move(log) : std::make_shared<EventLog>()) {
    if (auto v = validate(blueprint_); !v.empty())
        throw Error(Errc::validation_failure, v.front().path + ": " + v.front().message);
    std::set<std::string> cast;
    for (const auto& a : blueprint_.actors) cast.insert(a.name);
    std::set<std::string> named;
    for (const auto& [name, _] : roster_) named.insert(name);
    if (cast != named) {
        std::string detail;
        for (const auto& n : cast)
            if (!named.contains(n)) detail += " missing '" + n + "'";
        for (const auto& n : named)
            if (!cast.contains(n)) detail += " unknown '" + n + "'";
        throw Error(Errc::roster_mismatch, "roster does not match the cast:" + detail);
    }
    if (!gateway_) throw Error(Errc::precondition, "session needs a gateway");
    for (const auto& a : blueprint_.actors) {
        profiles_[a.name] = a;
        profiles_[a.name].controller = roster_.at(a.name);
    }
    state_.prop_states = initial_prop_states(blueprint_);
}

const Scene& Session::scene() const {
    const auto* s = blueprint_.find_scene(state_.active_scene);
    if (!s) throw Error(Errc::precondition, "active scene '" + state_.active_scene + "' missing");
    return *s;
}

bool Session::human(const std::string& actor) const {
    auto it = roster_.find(actor);
    return it != roster_.end() && it->second == Controller::human;
}

TranscriptEvent Session::emit(TranscriptEvent e) {
    if (config_.clock == ClockMode::turns) {
        e.timestamp = static_cast<double>(log_->last_seq() + 1);
    } else {
        const auto now = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
        e.timestamp = std::max(now, last_timestamp_ + 1e-6);
    }
    last_timestamp_ = e.timestamp;
    return log_->append(std::move(e));
}

TranscriptEvent Session::emit_system(std::string text, json data, Visibility vis, std::string speaker) {
    TranscriptEvent e;
    e.kind = EventKind::system;
    e.speaker = std::move(speaker);
    e.text = std::move(text);
    e.visibility = std::move(vis);
    e.data = std::move(data);
    return emit(std::move(e));
}

void Session::start() {
    std::lock_guard lock(mutex_);
    if (started_) throw Error(Errc::precondition, "session already started");
    if (log_->size() != 0) throw Error(Errc::precondition, "event log is not empty");
    started_ = true;
    json roster = json::object();
    for (const auto& [name, c] : roster_) roster[name] = std::string(to_string(c));
    emit_system("Session " + session_id_ + " begins.",
                {{"type", "session_start"},
                 {"session_id", session_id_},
                 {"blueprint", to_document(blueprint_)},
                 {"roster", roster},
                 {"config", config_.to_json()},
                 {"state_checksum", state_checksum(state_.prop_states)}},
                Visibility::control());
    enter_act(0);
}

void Session::restore(const std::vector<TranscriptEvent>& events) {
    std::lock_guard lock(mutex_);
    if (started_ || log_->size() != 0) throw Error(Errc::precondition, "session already has events");
    auto r = replay(events);
    if (!r.started) throw Error(Errc::corrupt_transcript, "transcript has no session header");
    if (r.blueprint != blueprint_) throw Error(Errc::corrupt_transcript, "transcript belongs to another blueprint");
    for (const auto& e : events) log_->append(e);
    state_ = r.state;
    for (const auto& [actor, goal] : state_.private_goals) profiles_[actor].private_goal = goal;
    point_started_seq_ = 0;
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
        if (type_of(*it) == "enter_point") {
            point_started_seq_ = it->seq;
            break;
        }
    }
    for (auto it = events.rbegin(); it != events.rend(); ++it) {
        if (it->kind == EventKind::speech || it->kind == EventKind::action_attempt) {
            for (std::size_t i = 0; i < blueprint_.actors.size(); ++i)
                if (blueprint_.actors[i].name == it->speaker) last_speaker_ = i;
            break;
        }
    }
    last_timestamp_ = events.empty() ? 0.0 : events.back().timestamp;
    last_progress_ = std::chrono::steady_clock::now();
    started_ = true;
    if (state_.status != SessionStatus::performing) log_->close();
}

// ---------------------------------------------------------------------------
// acts and points

std::map<std::string, std::string> Session::refresh_private_goals() {
    std::lock_guard lock(mutex_);
    return refresh_goals_locked();
}

std::map<std::string, std::string> Session::refresh_goals_locked() {
    const auto& a = act();
    std::ostringstream outline;
    for (const auto& p : a.points) outline << "- " << p.description << "\n";
    std::map<std::string, std::string> goals;
    for (const auto& actor : blueprint_.actors) {
        auto& profile = profiles_[actor.name];
        const auto previous = trim(profile.private_goal).empty() ? profile.initial_goal : profile.private_goal;
        std::ostringstream sys;
        sys << "You are " << actor.name << " in a live stage drama. A new act is starting. State in one or two "
            << "sentences the private goal you will pursue during this act. Reply with the goal only.\n\n"
            << "Persona: " << profile.persona << "\n";
        if (!profile.background.empty()) sys << "Background: " << profile.background << "\n";
        if (!previous.empty()) sys << "Previous goal: " << previous << "\n";
        const auto reply = gateway_->complete(
            make_request("goal/" + actor.name, session_id_, sys.str(), "The act ahead:\n" + outline.str()));
        auto goal = trim(reply.visible);
        json data = {{"type", "goal"}, {"actor", actor.name}, {"act_index", state_.act_index}};
        if (goal.empty()) {
            goal = previous;
            const auto w = "empty goal for " + actor.name + "; previous goal kept";
            warnings_.push_back(w);
            data["warning"] = w;
        }
        data["goal"] = goal;
        profile.private_goal = goal;
        goals[actor.name] = goal;
        emit_system("Private goal: " + goal, data, Visibility::private_to(actor.name));
    }
    state_.private_goals = goals;
    return goals;
}

void Session::enter_act(std::size_t act_index) {
    state_.act_index = act_index;
    state_.point_index = 0;
    state_.rounds_in_act = 0;
    refresh_goals_locked();
    state_.on_stage.clear();
    state_.active_scene.clear();
    enter_point(act_index, 0, nullptr);
}

void Session::enter_point(std::size_t act_index, std::size_t point_index, PointTransition* transition) {
    state_.act_index = act_index;
    state_.point_index = point_index;
    const auto& a = act();
    const auto& p = point();

    std::string scene_id = state_.active_scene;
    if (p.scene_id) scene_id = *p.scene_id;
    else if (scene_id.empty() || std::find(a.scene_ids.begin(), a.scene_ids.end(), scene_id) == a.scene_ids.end())
        scene_id = a.scene_ids.front();
    const bool scene_changed = scene_id != state_.active_scene;
    state_.active_scene = scene_id;

    std::set<std::string> stage(state_.on_stage.begin(), state_.on_stage.end());
    std::vector<std::string> left, entered;
    json warnings = json::array();
    for (const auto& n : p.leave_list) {
        if (stage.erase(n)) left.push_back(n);
        else warnings.push_back(n + " is not on stage; leave ignored");
    }
    for (const auto& n : p.entry_list) {
        if (stage.insert(n).second) entered.push_back(n);
        else warnings.push_back(n + " is already on stage; entry ignored");
    }
    for (const auto& w : warnings) warnings_.push_back(w.get<std::string>());
    state_.on_stage = in_blueprint_order(blueprint_, stage);
    state_.stall_counter = 0;
    plan_.reset();
    note_progress();

    const auto marker = emit_system("Point " + p.id + " begins.",
                                    {{"type", "enter_point"},
                                     {"act_index", act_index},
                                     {"point_index", point_index},
                                     {"act_id", a.id},
                                     {"point_id", p.id},
                                     {"scene_id", scene_id},
                                     {"on_stage", state_.on_stage},
                                     {"entered", entered},
                                     {"left", left},
                                     {"warnings", warnings},
                                     {"state_checksum", state_checksum(state_.prop_states)}});
    point_started_seq_ = marker.seq;
    if (scene_changed) emit_system(scene().environment_description, {{"type", "scene"}, {"scene_id", scene_id}});
    for (const auto& n : left) emit_system(n + " leaves the stage.", {{"type", "exit"}, {"actor", n}});
    for (const auto& n : entered) emit_system(n + " enters the stage.", {{"type", "entrance"}, {"actor", n}});
    if (transition) {
        transition->to_act = act_index;
        transition->to_point = p.id;
        transition->entered = entered;
        transition->left = left;
    }
}

PointTransition Session::advance_point() {
    std::lock_guard lock(mutex_);
    if (!started_) throw Error(Errc::precondition, "session not started");
    if (state_.status == SessionStatus::completed) throw Error(Errc::already_at_final_point, "performance completed");
    if (state_.status != SessionStatus::performing) throw Error(Errc::session_not_performing, "session not performing");
    return advance_locked();
}

PointTransition Session::advance_locked() {
    PointTransition t;
    t.from_act = state_.act_index;
    t.from_point = point().id;
    if (state_.point_index + 1 < act().points.size()) {
        enter_point(state_.act_index, state_.point_index + 1, &t);
    } else if (state_.act_index + 1 < blueprint_.acts.size()) {
        enter_act(state_.act_index + 1);
        t.to_act = state_.act_index;
        t.to_point = point().id;
        t.entered = state_.on_stage;
    } else {
        state_.status = SessionStatus::completed;
        t.completed = true;
        t.to_act = state_.act_index;
        emit_system("The performance is complete.",
                    {{"type", "completed"}, {"state_checksum", state_checksum(state_.prop_states)}});
        log_->close();
    }
    return t;
}

// ---------------------------------------------------------------------------
// turns

std::vector<TranscriptEvent> Session::submit_turn(const std::string& actor, const std::string& raw_text) {
    std::lock_guard lock(mutex_);
    return submit_turn_locked(actor, raw_text);
}

std::vector<TranscriptEvent> Session::submit_turn_locked(const std::string& actor, const std::string& raw_text) {
    if (!started_ || state_.status != SessionStatus::performing)
        throw Error(Errc::session_not_performing, "session " + session_id_ + " is not performing");
    if (std::find(state_.on_stage.begin(), state_.on_stage.end(), actor) == state_.on_stage.end())
        throw Error(Errc::actor_off_stage, actor + " is not on stage");
    auto parts = parse_response(raw_text);
    if (parts.empty()) throw Error(Errc::empty_turn, "turn from " + actor + " has no speech, action or thinking");
    for (const auto& w : parts.warnings) warnings_.push_back(actor + ": " + w);

    std::vector<TranscriptEvent> out;
    if (parts.thinking) {
        TranscriptEvent e;
        e.kind = EventKind::thinking;
        e.speaker = actor;
        e.thinking = parts.thinking;
        e.text = *parts.thinking;
        e.visibility = Visibility::private_to(actor);
        out.push_back(emit(std::move(e)));
    }
    if (parts.speech) {
        TranscriptEvent e;
        e.kind = EventKind::speech;
        e.speaker = actor;
        e.speech = parts.speech;
        e.text = *parts.speech;
        out.push_back(emit(std::move(e)));
    }
    if (!parts.action) return out;

    TranscriptEvent attempt_event;
    attempt_event.kind = EventKind::action_attempt;
    attempt_event.speaker = actor;
    attempt_event.action = parts.action;
    attempt_event.text = "(" + *parts.action + ")";
    attempt_event = emit(std::move(attempt_event));
    out.push_back(attempt_event);

    const auto& sc = scene();
    ActionAttempt attempt;
    attempt.actor = actor;
    attempt.raw_action = *parts.action;
    attempt.environment_description = sc.environment_description;
    attempt.originating_event = attempt_event.seq;
    for (auto p : sc.props) {
        p.state = state_.prop_states[sc.id][p.id];
        attempt.scene_snapshot.push_back(std::move(p));
    }

    std::vector<AdjudicationResult> results;
    try {
        results = adjudicate(attempt, *gateway_, session_id_);
    } catch (const Error& e) {
        if (e.code() != Errc::backend_timeout && e.code() != Errc::backend_unavailable) throw;
        AdjudicationResult r;
        r.reasoning = std::string("narrator unavailable: ") + e.what();
        r.objective_description = std::string(kFailureLine);
        results.push_back(std::move(r));
    }
    for (auto& r : results) {
        auto diffs = apply_updates(state_.prop_states[sc.id], r);
        for (const auto& w : r.warnings) warnings_.push_back("narrator: " + w);
        TranscriptEvent e;
        e.kind = EventKind::action_result;
        e.speaker = std::string(kNarrator);
        e.text = r.objective_description;
        e.data = {{"verdict", std::string(to_string(r.verdict))},
                  {"actor", actor},
                  {"attempt_seq", attempt_event.seq},
                  {"reasoning", r.reasoning},
                  {"resolved_prop", r.resolved_prop ? json(*r.resolved_prop) : json(nullptr)},
                  {"state_diff", diff_json(diffs)},
                  {"scene_id", sc.id},
                  {"state_checksum", state_checksum(state_.prop_states)}};
        out.push_back(emit(std::move(e)));
    }
    return out;
}

TranscriptEvent Session::broadcast_environment(const std::string& text) {
    std::lock_guard lock(mutex_);
    if (!started_ || state_.status != SessionStatus::performing)
        throw Error(Errc::session_not_performing, "session " + session_id_ + " is not performing");
    if (trim(text).empty()) throw Error(Errc::precondition, "empty broadcast");
    TranscriptEvent e;
    e.kind = EventKind::broadcast;
    e.speaker = std::string(kEnvironment);
    e.text = trim(text);
    e = emit(std::move(e));
    bool effective = false;
    poll_transfer_locked(&effective);
    if (effective) note_progress();
    return e;
}

// ---------------------------------------------------------------------------
// context assembly

std::vector<TranscriptEvent> Session::point_window() const {
    std::vector<TranscriptEvent> out;
    for (const auto& e : log_->since(point_started_seq_ - 1)) {
        if (e.kind == EventKind::thinking || e.visibility.scope == Visibility::Scope::control) continue;
        if (e.kind == EventKind::system && type_of(e) != "enter_point" && type_of(e) != "entrance" &&
            type_of(e) != "exit" && type_of(e) != "scene" && type_of(e) != "stall")
            continue;
        out.push_back(e);
    }
    return out;
}

std::vector<HistoryLine> Session::history_for(const std::string& actor) const {
    const auto viewer = Viewer::of(actor, human(actor) && config_.reveal_flags_to_humans);
    std::vector<HistoryLine> lines;
    for (const auto& e : log_->snapshot())
        if (is_dialogue(e) && visible_to(e, viewer)) lines.push_back({e.speaker, e.display_text()});
    if (lines.size() > config_.history_window)
        lines.erase(lines.begin(), lines.end() - static_cast<std::ptrdiff_t>(config_.history_window));
    return lines;
}

PadContext Session::pad_context(const std::string& actor) const {
    PadContext ctx;
    ctx.profile = profiles_.at(actor);
    const auto& sc = scene();
    ctx.environment_description = sc.environment_description;
    ctx.actor_list = state_.on_stage;
    ctx.dialogue_history = history_for(actor);
    for (const auto& p : sc.props)
        if (p.interactable) ctx.interactable_objects.push_back({p.id, p.name});
    if (human(actor) ? config_.reveal_flags_to_humans : false) ctx.current_flag = point().flag.description;
    if (!ctx.dialogue_history.empty()) ctx.last_stimulus = ctx.dialogue_history.back();
    return ctx;
}

std::optional<std::string> Session::compose_ai_turn(const std::string& actor, const PadDecision& decision) {
    const auto ctx = pad_context(actor);
    const auto& profile = ctx.profile;
    std::ostringstream sys;
    sys << "You are " << actor << ", performing live on stage. Stay in character. Put physical actions in "
        << "parentheses and inner thoughts in square brackets; everything else is spoken aloud.\n\n"
        << "Persona: " << profile.persona << "\n";
    if (!profile.background.empty()) sys << "Background: " << profile.background << "\n";
    for (const auto& [target, rel] : profile.relationships) sys << "Relationship with " << target << ": " << rel.description << "\n";
    for (const auto& m : profile.memory) sys << "Memory: " << m << "\n";
    sys << "Goal: " << (trim(profile.private_goal).empty() ? profile.initial_goal : profile.private_goal) << "\n";
    sys << "Scene: " << ctx.environment_description << "\n";
    switch (decision.strategy) {
        case Strategy::fast: sys << "\nAnswer at once, briefly and on instinct.\n"; break;
        case Strategy::slow: sys << "\nThink first in [brackets], then speak.\n"; break;
        case Strategy::silence: sys << "\nSay nothing aloud.\n"; break;
    }
    if (decision.action) {
        std::string name = decision.action->object;
        for (const auto& o : ctx.interactable_objects)
            if (o.id == decision.action->object) name = o.name;
        sys << "Perform this action in parentheses: " << decision.action->verb << " " << name << "\n";
    }
    std::ostringstream user;
    user << "## Stage so far\n";
    for (const auto& h : ctx.dialogue_history) user << h.speaker << ": " << h.text << "\n";
    user << "\nYour turn.";
    const auto reply = gateway_->complete(make_request("actor/" + actor, session_id_, sys.str(), user.str()));
    auto parts = parse_response(reply.visible);

    PadDecision d = decision;
    std::string action_text;
    if (d.action) action_text = parts.action.value_or("");
    std::string speech = parts.speech.value_or("");
    if (d.strategy == Strategy::slow) {
        if (parts.thinking) d.thinking = parts.thinking;
        else if (reply.thinking && !trim(*reply.thinking).empty()) d.thinking = trim(*reply.thinking);
        if (!d.thinking || trim(*d.thinking).empty()) {
            warnings_.push_back(actor + ": SLOW turn without thinking degraded to FAST");
            d.strategy = Strategy::fast;
        }
    }
    if (d.strategy != Strategy::silence && trim(speech).empty()) {
        if (!d.action) {
            warnings_.push_back(actor + ": generated turn has no speech; turn skipped");
            return std::nullopt;
        }
        d.strategy = Strategy::silence;
    }
    if (d.strategy == Strategy::silence) {
        if (!d.action) return std::nullopt;
        speech.clear();
    }
    return format_response(d, speech, action_text);
}

// ---------------------------------------------------------------------------
// control

bool Session::poll_transfer_locked(bool* effective) {
    if (state_.status != SessionStatus::performing) return false;
    const auto window = point_window();
    bool has_stimulus = std::any_of(window.begin(), window.end(), [](const TranscriptEvent& e) {
        return e.kind == EventKind::speech || e.kind == EventKind::action_result || e.kind == EventKind::broadcast;
    });
    if (!has_stimulus) return false;
    const auto& p = point();
    const auto check = check_flag(window, p, *gateway_, session_id_);
    for (const auto& w : check.warnings) warnings_.push_back("transfer: " + w);
    emit_system(check.conclusion,
                {{"type", "flag_check"},
                 {"point_id", check.point_id},
                 {"met", check.met},
                 {"cited", check.cited_events},
                 {"reasoning", check.reasoning}},
                Visibility::control(), std::string(kTransfer));
    if (!check.met) return false;
    if (effective) *effective = true;

    bool review = config_.review_mode == ReviewMode::always;
    if (config_.review_mode == ReviewMode::human_only)
        review = std::any_of(window.begin(), window.end(), [&](const TranscriptEvent& e) {
            return (e.kind == EventKind::speech || e.kind == EventKind::action_attempt) && human(e.speaker);
        });
    if (review) {
        std::vector<RealizedBeat> beats;
        for (const auto& e : window)
            if (e.kind == EventKind::speech || e.kind == EventKind::action_attempt ||
                e.kind == EventKind::action_result || e.kind == EventKind::broadcast)
                beats.push_back({e.seq, e.speaker, e.display_text()});
        const auto verdict = review_trajectory(beats, plan_ ? &*plan_ : nullptr, p.flag, *gateway_, session_id_);
        for (const auto& w : verdict.warnings) warnings_.push_back("planner: " + w);
        emit_system(verdict.reason,
                    {{"type", "review"}, {"point_id", p.id}, {"passed", verdict.passed}, {"reasoning", verdict.reasoning}},
                    Visibility::control(), std::string(kPlanner));
        if (!verdict.passed) return false;
    }
    advance_locked();
    return true;
}

bool Session::stalled() const {
    if (config_.clock == ClockMode::turns) return state_.stall_counter >= config_.stall_threshold;
    const Seconds idle = std::chrono::steady_clock::now() - last_progress_;
    return idle.count() >= config_.stall_seconds;
}

void Session::note_progress() {
    state_.stall_counter = 0;
    last_progress_ = std::chrono::steady_clock::now();
}

void Session::run_advancer_locked() {
    emit_system("Time accumulation has surpassed the threshold, Advancer is activated.", {{"type", "stall"}});
    const auto& a = act();
    if (!plan_ && state_.point_index + 1 < a.points.size()) {
        try {
            plan_ = plan_trajectories(blueprint_, a, point().id, a.points[state_.point_index + 1].id, *gateway_,
                                      session_id_);
        } catch (const Error& e) {
            if (e.code() != Errc::parse_failure) throw;
            warnings_.push_back(std::string("planner: ") + e.what());
        }
    }
    StallView view{state_.on_stage, point(), point_window()};
    const auto directive = stall_recover(view, plan_ ? &*plan_ : nullptr, *gateway_, session_id_);
    for (const auto& w : directive.warnings) warnings_.push_back("advancer: " + w);
    if (!directive.reasoning.empty())
        emit_system(directive.reasoning, {{"type", "advancer_reasoning"}}, Visibility::control(), std::string(kAdvancer));
    for (const auto& ins : directive.instructions) {
        TranscriptEvent e;
        e.kind = EventKind::instruction;
        e.speaker = std::string(kAdvancer);
        e.text = "Instruction to " + (ins.target.empty() ? std::string("all") : ins.target) + ": " + ins.text;
        e.visibility = ins.target.empty() ? Visibility::all() : Visibility::private_to(ins.target);
        e.data = {{"type", "instruction"},
                  {"target", ins.target.empty() ? json(nullptr) : json(ins.target)},
                  {"fallback", directive.fallback}};
        emit(std::move(e));
    }
    note_progress();
}

// ---------------------------------------------------------------------------
// scheduling

bool Session::step() {
    std::lock_guard lock(mutex_);
    if (!started_) throw Error(Errc::precondition, "session not started");
    if (state_.status != SessionStatus::performing) return false;
    ++state_.rounds_in_act;

    std::optional<std::string> excluded;
    {
        const auto events = log_->snapshot();
        for (auto it = events.rbegin(); it != events.rend(); ++it) {
            if (it->visibility.scope != Visibility::Scope::all || !is_dialogue(*it)) continue;
            if (it->kind == EventKind::speech || it->kind == EventKind::action_attempt) excluded = it->speaker;
            break;
        }
    }
    std::vector<std::string> candidates;
    for (const auto& n : state_.on_stage)
        if (n != excluded) candidates.push_back(n);

    // PAD fan-out: model calls run concurrently, results are merged in blueprint order.
    std::map<std::string, std::future<PadDecision>> pending;
    for (const auto& n : candidates) {
        if (human(n)) continue;
        pending.emplace(n, std::async(std::launch::async, [this, ctx = pad_context(n)] {
                            return decide(ctx, *gateway_, session_id_);
                        }));
    }
    std::map<std::string, PadDecision> decisions;
    std::map<std::string, std::string> human_turns;
    std::vector<std::string> responders;
    for (const auto& n : candidates) {
        if (human(n)) {
            std::optional<std::string> text;
            if (input_) text = input_->peek(n, config_.human_wait);
            if (text) {
                human_turns[n] = *text;
                responders.push_back(n);
                waiting_noted_[n] = false;
            } else if (!waiting_noted_[n]) {
                waiting_noted_[n] = true;
                emit_system("Waiting for " + n + ".", {{"type", "waiting"}, {"actor", n}});
            }
            continue;
        }
        auto d = pending.at(n).get();
        for (const auto& w : d.warnings) warnings_.push_back("pad/" + n + ": " + w);
        json action = nullptr;
        if (d.action) action = {{"verb", d.action->verb}, {"object", d.action->object}};
        emit_system("Strategy: " + std::string(to_string(d.strategy)),
                    {{"type", "pad_decision"}, {"strategy", std::string(to_string(d.strategy))}, {"action", action}},
                    Visibility::private_to(n), n);
        if (d.strategy != Strategy::silence || d.action) responders.push_back(n);
        decisions[n] = std::move(d);
    }

    std::optional<std::string> speaker;
    if (!responders.empty()) {
        const auto n = blueprint_.actors.size();
        std::size_t best = n;
        for (const auto& r : responders) {
            std::size_t idx = 0;
            while (blueprint_.actors[idx].name != r) ++idx;
            const std::size_t start = last_speaker_ ? (*last_speaker_ + 1) % n : 0;
            const std::size_t dist = (idx + n - start) % n;
            if (dist < best) {
                best = dist;
                speaker = r;
            }
        }
    }

    bool effective = false;
    bool transitioned = false;
    if (speaker) {
        std::optional<std::string> raw;
        if (human(*speaker)) {
            raw = human_turns.at(*speaker);
            input_->consume(*speaker);
        } else {
            raw = compose_ai_turn(*speaker, decisions.at(*speaker));
        }
        if (raw) {
            std::vector<TranscriptEvent> produced;
            try {
                produced = submit_turn_locked(*speaker, *raw);
            } catch (const Error& e) {
                if (e.code() != Errc::empty_turn) throw;
                emit_system("A turn from " + *speaker + " could not be read.", {{"type", "rejected_turn"}, {"actor", *speaker}});
            }
            for (std::size_t i = 0; i < blueprint_.actors.size(); ++i)
                if (blueprint_.actors[i].name == *speaker) last_speaker_ = i;
            for (const auto& e : produced)
                if (e.kind == EventKind::action_result && e.data.value("verdict", "") == "success") effective = true;
            if (!produced.empty()) transitioned = poll_transfer_locked(&effective);
        }
    }

    if (state_.status != SessionStatus::performing) return false;
    if (effective || transitioned) note_progress();
    else ++state_.stall_counter;
    if (!transitioned && stalled()) run_advancer_locked();

    if (!transitioned && state_.rounds_in_act >= config_.turn_budget) {
        state_.status = SessionStatus::budget_exhausted;
        emit_system("Turn budget exhausted; the performance stops incomplete.",
                    {{"type", "budget_exhausted"}, {"incomplete", true}, {"rounds", state_.rounds_in_act}});
        log_->close();
        return false;
    }
    return true;
}

SessionStatus Session::run(std::optional<int> max_rounds) {
    for (int i = 0; !max_rounds || i < *max_rounds; ++i)
        if (!step()) break;
    return status();
}

void Session::abort(const std::string& reason) {
    std::lock_guard lock(mutex_);
    if (state_.status != SessionStatus::performing) return;
    state_.status = SessionStatus::aborted;
    if (started_) emit_system("Session aborted: " + reason, {{"type", "aborted"}});
    log_->close();
}

StageState Session::state() const {
    std::lock_guard lock(mutex_);
    return state_;
}

SessionStatus Session::status() const {
    std::lock_guard lock(mutex_);
    return state_.status;
}

std::vector<std::string> Session::warnings() const {
    std::lock_guard lock(mutex_);
    return warnings_;
}

// ---------------------------------------------------------------------------
// replay

ReplayResult replay(const std::vector<TranscriptEvent>& events) {
    ReplayResult r;
    auto corrupt = [](std::size_t line, const std::string& what) {
        return Error(Errc::corrupt_transcript, "line " + std::to_string(line) + ": " + what);
    };
    for (std::size_t i = 0; i < events.size(); ++i) {
        const auto& e = events[i];
        const auto line = i + 1;
        if (e.seq != static_cast<std::int64_t>(line)) throw corrupt(line, "seq " + std::to_string(e.seq) + " out of order");
        r.last_seq = e.seq;
        const auto type = type_of(e);
        if (type == "session_start") {
            if (r.started) throw corrupt(line, "second session header");
            try {
                r.blueprint = parse_blueprint(e.data.at("blueprint"));
                for (const auto& [name, c] : e.data.at("roster").items())
                    r.roster[name] = c.get<std::string>() == "human" ? Controller::human : Controller::ai;
                r.config = StageConfig::from_json(e.data.value("config", json::object()));
            } catch (const Error& err) {
                throw corrupt(line, err.what());
            } catch (const json::exception& err) {
                throw corrupt(line, err.what());
            }
            r.session_id = e.data.value("session_id", "");
            r.started = true;
            r.state.prop_states = initial_prop_states(r.blueprint);
            continue;
        }
        if (!r.started) throw corrupt(line, "event before the session header");
        auto check = [&](const TranscriptEvent& ev) {
            if (!ev.data.contains("state_checksum")) return;
            if (ev.data["state_checksum"] != state_checksum(r.state.prop_states))
                throw corrupt(line, "state checksum mismatch");
        };
        if (e.kind == EventKind::action_result) {
            const auto scene = e.data.value("scene_id", "");
            auto& props = r.state.prop_states[scene];
            for (const auto& d : e.data.value("state_diff", json::array())) {
                const auto prop = d.value("prop_id", "");
                if (!props.contains(prop)) throw corrupt(line, "diff names unknown prop '" + prop + "'");
                auto& st = props[prop];
                const auto key = d.value("key", "");
                const auto& old = d.at("old_value");
                auto it = st.find(key);
                const bool matches = old.is_null() ? it == st.end() : (it != st.end() && it->second == old.get<std::string>());
                if (!matches) throw corrupt(line, "diff does not match the recorded state of " + prop + "." + key);
                st[key] = d.value("new_value", "");
            }
            check(e);
        } else if (type == "enter_point") {
            const auto act_index = e.data.value("act_index", std::size_t{0});
            const auto point_index = e.data.value("point_index", std::size_t{0});
            if (act_index >= r.blueprint.acts.size() || point_index >= r.blueprint.acts[act_index].points.size())
                throw corrupt(line, "point cursor out of range");
            const bool forward = act_index > r.state.act_index ||
                                 (act_index == r.state.act_index && point_index >= r.state.point_index);
            if (!forward) throw corrupt(line, "point cursor moved backwards");
            if (act_index != r.state.act_index) r.state.rounds_in_act = 0;
            r.state.act_index = act_index;
            r.state.point_index = point_index;
            r.state.on_stage = e.data.value("on_stage", std::vector<std::string>{});
            r.state.active_scene = e.data.value("scene_id", "");
            r.state.stall_counter = 0;
            check(e);
        } else if (type == "goal") {
            r.state.private_goals[e.data.value("actor", "")] = e.data.value("goal", "");
        } else if (type == "completed") {
            r.state.status = SessionStatus::completed;
            check(e);
        } else if (type == "budget_exhausted") {
            r.state.status = SessionStatus::budget_exhausted;
        } else if (type == "aborted") {
            r.state.status = SessionStatus::aborted;
        }
    }
    return r;
}

ReplayResult replay_file(const std::filesystem::path& path) { return replay(read_transcript(path)); }

}  // namespace stagecraft
