#include "stagecraft/service.hpp"

#include <ctime>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <httplib.h>

#include "stagecraft/error.hpp"
#include "stagecraft/markup.hpp"

namespace stagecraft {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(DescriptorStatus s) noexcept {
    switch (s) {
        case DescriptorStatus::planning: return "planning";
        case DescriptorStatus::performing: return "performing";
        case DescriptorStatus::completed: return "completed";
        case DescriptorStatus::aborted: return "aborted";
    }
    return "?";
}

namespace {

DescriptorStatus parse_descriptor_status(const std::string& s) {
    if (s == "planning") return DescriptorStatus::planning;
    if (s == "performing") return DescriptorStatus::performing;
    if (s == "completed") return DescriptorStatus::completed;
    if (s == "aborted") return DescriptorStatus::aborted;
    throw Error(Errc::schema_violation, "unknown session status '" + s + "'");
}

json roster_json(const Roster& r) {
    json j = json::object();
    for (const auto& [name, c] : r) j[name] = to_string(c);
    return j;
}

Roster roster_from_json(const json& j) {
    if (!j.is_object()) throw Error(Errc::schema_violation, "roster must be an object of actor -> ai|human");
    Roster r;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const auto v = it.value().get<std::string>();
        if (v == "ai") r[it.key()] = Controller::ai;
        else if (v == "human") r[it.key()] = Controller::human;
        else throw Error(Errc::schema_violation, "roster." + it.key() + ": expected ai or human");
    }
    return r;
}

std::string utc_now() {
    const auto t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void check_roster(const NarrativeBlueprint& bp, const Roster& roster) {
    std::set<std::string> names;
    for (const auto& a : bp.actors) names.insert(a.name);
    std::set<std::string> keys;
    for (const auto& [k, _] : roster) keys.insert(k);
    if (names != keys) throw Error(Errc::roster_mismatch, "roster must name exactly the blueprint actors");
}

void write_atomic(const fs::path& path, const std::string& text) {
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw Error(Errc::precondition, "cannot write " + tmp.string());
        out << text;
    }
    fs::rename(tmp, path);
}

/// Reads a transcript, dropping a final line cut off by a crash mid-write.
std::vector<TranscriptEvent> read_recoverable(const fs::path& path) {
    std::ifstream in(path);
    if (!in) return {};
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    if (!text.empty() && text.back() != '\n') {
        const auto cut = text.rfind('\n');
        text = cut == std::string::npos ? std::string() : text.substr(0, cut + 1);
        write_atomic(path, text);
    }
    return read_transcript_text(text);
}

bool is_turn_event(const TranscriptEvent& e, const std::string& actor) {
    switch (e.kind) {
        case EventKind::thinking:
        case EventKind::speech:
        case EventKind::action_attempt: return e.speaker == actor;
        case EventKind::action_result: return e.data.value("actor", "") == actor;
        default: return false;
    }
}

}  // namespace

json SessionDescriptor::to_json() const {
    return {{"session_id", session_id},    {"blueprint_path", blueprint_path}, {"blueprint_hash", blueprint_hash},
            {"roster", roster_json(roster)}, {"status", to_string(status)},     {"created_at", created_at},
            {"turn_budget", turn_budget},    {"incomplete", incomplete}};
}

json InputAck::to_json() const {
    json j = {{"acknowledged", true}, {"duplicate", duplicate}, {"executed", executed}};
    j["first_seq"] = first_seq ? json(*first_seq) : json(nullptr);
    j["last_seq"] = last_seq ? json(*last_seq) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// TrackedInput

void TrackedInput::set_hook(ConsumeHook hook) {
    std::lock_guard lock(mutex_);
    hook_ = std::move(hook);
}

bool TrackedInput::push(const std::string& actor, std::string raw_text, std::int64_t client_seq) {
    {
        std::lock_guard lock(mutex_);
        auto& q = queues_[actor];
        if (capacity_ != 0 && q.size() >= capacity_) return false;
        q.push_back({std::move(raw_text), client_seq});
        ++generation_;
    }
    cv_.notify_all();
    return true;
}

bool TrackedInput::wait_any(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mutex_);
    const auto seen = generation_;
    return cv_.wait_for(lock, timeout, [&] { return interrupted_ || generation_ != seen; });
}

void TrackedInput::interrupt() {
    {
        std::lock_guard lock(mutex_);
        interrupted_ = true;
    }
    cv_.notify_all();
}

std::optional<std::string> TrackedInput::peek(const std::string& actor, std::chrono::milliseconds wait) {
    std::unique_lock lock(mutex_);
    auto ready = [&] { return interrupted_ || !queues_[actor].empty(); };
    if (wait.count() > 0) cv_.wait_for(lock, wait, ready);
    auto& q = queues_[actor];
    if (q.empty()) return std::nullopt;
    return q.front().text;
}

void TrackedInput::consume(const std::string& actor) {
    ConsumeHook hook;
    std::int64_t client_seq = 0;
    {
        std::lock_guard lock(mutex_);
        auto& q = queues_[actor];
        if (q.empty()) return;
        client_seq = q.front().client_seq;
        q.pop_front();
        hook = hook_;
    }
    if (hook) hook(actor, client_seq);
}

// ---------------------------------------------------------------------------
// SessionManager

struct SessionManager::Entry {
    SessionDescriptor desc;
    NarrativeBlueprint blueprint;
    StageConfig config;
    std::shared_ptr<TrackedInput> input;
    std::shared_ptr<EventLog> log;
    std::shared_ptr<Session> session;
    std::shared_ptr<TranscriptWriter> writer;

    std::thread thread;
    std::atomic<bool> stop{false};
    bool running = false;

    struct Inflight {
        std::string actor;
        std::int64_t client_seq;
        std::int64_t start_seq;
    };
    std::vector<Inflight> inflight;
    std::map<std::pair<std::string, std::int64_t>, InputAck> acks;
    std::mutex m;
    std::condition_variable cv;
};

SessionManager::SessionManager(std::shared_ptr<const Gateway> gateway, ManagerOptions options)
    : gateway_(std::move(gateway)), options_(std::move(options)) {
    fs::create_directories(options_.data_dir);
}

SessionManager::~SessionManager() {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lock(mutex_);
        for (auto& [_, e] : sessions_) entries.push_back(e);
    }
    for (auto& e : entries) {
        e->stop = true;
        if (e->input) e->input->interrupt();
    }
    for (auto& e : entries)
        if (e->thread.joinable()) e->thread.join();
}

std::string SessionManager::fresh_id() {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        std::ostringstream id;
        id << "s-" << std::hex << (rng() & 0xffffffffffffULL);
        if (!sessions_.contains(id.str()) && !fs::exists(options_.data_dir / (id.str() + ".session.json")))
            return id.str();
    }
}

std::shared_ptr<SessionManager::Entry> SessionManager::find(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(Errc::unknown_session, "no session '" + id + "'");
    return it->second;
}

void SessionManager::persist(const Entry& e) const {
    json doc = {{"descriptor", e.desc.to_json()}, {"blueprint", to_document(e.blueprint)}, {"config", e.config.to_json()}};
    write_atomic(options_.data_dir / (e.desc.session_id + ".session.json"), doc.dump(2) + "\n");
}

SessionDescriptor SessionManager::create(const NarrativeBlueprint& blueprint, Roster roster,
                                         std::optional<StageConfig> config, std::string blueprint_path) {
    const auto violations = validate(blueprint);
    if (!violations.empty()) {
        std::string msg;
        for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v.path + ": " + v.message;
        throw Error(Errc::validation_failure, msg);
    }
    if (roster.empty()) roster = default_roster(blueprint);
    check_roster(blueprint, roster);

    auto e = std::make_shared<Entry>();
    e->blueprint = blueprint;
    e->config = config.value_or(options_.default_config);
    e->desc.blueprint_path = std::move(blueprint_path);
    e->desc.blueprint_hash = fnv1a_hex(serialize(blueprint));
    e->desc.roster = std::move(roster);
    e->desc.created_at = utc_now();
    e->desc.turn_budget = e->config.turn_budget;
    {
        std::lock_guard lock(mutex_);
        e->desc.session_id = fresh_id();
        sessions_[e->desc.session_id] = e;
    }
    persist(*e);
    return e->desc;
}

void SessionManager::launch(const std::shared_ptr<Entry>& e) {
    if (!options_.run_async) return;
    std::lock_guard lock(e->m);
    if (e->running) return;
    e->running = true;
    e->thread = std::thread([this, e] { runner(e); });
}

namespace {

std::shared_ptr<TrackedInput> make_input(const std::shared_ptr<EventLog>& log,
                                         std::function<void(std::string, std::int64_t, std::int64_t)> record) {
    auto input = std::make_shared<TrackedInput>(1);
    input->set_hook([log, record](const std::string& actor, std::int64_t client_seq) {
        record(actor, client_seq, log->last_seq() + 1);
    });
    return input;
}

}  // namespace

SessionDescriptor SessionManager::start(const std::string& id) {
    auto e = find(id);
    {
        std::lock_guard lock(e->m);
        if (e->desc.status == DescriptorStatus::performing) return e->desc;
        if (e->desc.status != DescriptorStatus::planning)
            throw Error(Errc::session_not_performing, "session " + id + " is " + std::string(to_string(e->desc.status)));
        e->log = std::make_shared<EventLog>();
        e->writer = std::make_shared<TranscriptWriter>(transcript_path(id));
        e->log->add_listener([w = e->writer](const TranscriptEvent& ev) { w->write(ev); });
        Entry* raw = e.get();
        e->input = make_input(e->log, [raw](std::string actor, std::int64_t cs, std::int64_t start) {
            std::lock_guard l(raw->m);
            raw->inflight.push_back({std::move(actor), cs, start});
        });
        e->session = std::make_shared<Session>(e->blueprint, e->desc.roster, gateway_, e->config, id, e->input, e->log);
    }
    e->session->start();
    {
        std::lock_guard lock(e->m);
        e->desc.status = DescriptorStatus::performing;
    }
    sync_status(*e);
    if (e->desc.status == DescriptorStatus::performing) launch(e);
    return descriptor(id);
}

void SessionManager::after_round(Entry& e) {
    std::lock_guard lock(e.m);
    for (const auto& f : e.inflight) {
        InputAck& ack = e.acks[{f.actor, f.client_seq}];
        ack.executed = true;
        for (const auto& ev : e.log->since(f.start_seq - 1)) {
            const bool rejected = ev.data.value("type", "") == "rejected_turn" && ev.data.value("actor", "") == f.actor;
            if (!is_turn_event(ev, f.actor) && !rejected) break;
            if (!ack.first_seq) ack.first_seq = ev.seq;
            ack.last_seq = ev.seq;
            if (rejected) break;
        }
    }
    e.inflight.clear();
    e.cv.notify_all();
}

void SessionManager::sync_status(Entry& e) {
    {
        std::lock_guard lock(e.m);
        if (!e.session) return;
        switch (e.session->status()) {
            case SessionStatus::performing: e.desc.status = DescriptorStatus::performing; break;
            case SessionStatus::completed: e.desc.status = DescriptorStatus::completed; break;
            case SessionStatus::budget_exhausted:
                e.desc.status = DescriptorStatus::completed;
                e.desc.incomplete = true;
                break;
            case SessionStatus::aborted: e.desc.status = DescriptorStatus::aborted; break;
        }
        e.cv.notify_all();
    }
    persist(e);
}

void SessionManager::runner(std::shared_ptr<Entry> e) {
    bool has_humans = false;
    for (const auto& [_, c] : e->desc.roster) has_humans |= c == Controller::human;
    while (!e->stop) {
        const auto before = e->log->last_seq();
        bool more = false;
        try {
            more = e->session->step();
        } catch (const std::exception& ex) {
            e->session->abort(ex.what());
        }
        after_round(*e);
        if (!more) break;
        if (!has_humans) continue;
        bool turn_taken = false;
        for (const auto& ev : e->log->since(before))
            turn_taken |= ev.kind == EventKind::speech || ev.kind == EventKind::action_attempt;
        if (!turn_taken) e->input->wait_any(options_.idle_wait);
    }
    sync_status(*e);
    std::lock_guard lock(e->m);
    e->running = false;
    e->cv.notify_all();
}

bool SessionManager::step(const std::string& id) {
    auto e = find(id);
    if (!e->session) throw Error(Errc::session_not_performing, "session " + id + " has not started");
    bool more = false;
    try {
        more = e->session->step();
    } catch (const std::exception& ex) {
        e->session->abort(ex.what());
    }
    after_round(*e);
    sync_status(*e);
    return more;
}

InputAck SessionManager::submit_input(const PlayerInput& input) {
    auto e = find(input.session_id);
    std::unique_lock lock(e->m);
    auto who = e->desc.roster.find(input.actor);
    if (who == e->desc.roster.end() || who->second != Controller::human)
        throw Error(Errc::actor_not_human, "'" + input.actor + "' is not a human-controlled actor");
    const std::pair key{input.actor, input.client_seq};
    if (auto it = e->acks.find(key); it != e->acks.end()) {
        InputAck ack = it->second;
        ack.duplicate = true;
        return ack;
    }
    if (e->desc.status != DescriptorStatus::performing || !e->session)
        throw Error(Errc::session_not_performing, "session " + input.session_id + " is not performing");
    if (trim(input.raw_text).empty()) throw Error(Errc::empty_turn, "empty input");
    if (!e->input->push(input.actor, input.raw_text, input.client_seq))
        throw Error(Errc::not_your_turn, input.actor + " already has a pending turn");
    e->acks[key] = InputAck{};
    if (options_.run_async)
        e->cv.wait_for(lock, options_.ack_wait, [&] {
            return e->acks[key].executed || e->desc.status != DescriptorStatus::performing;
        });
    return e->acks[key];
}

void SessionManager::abort(const std::string& id, const std::string& reason) {
    auto e = find(id);
    if (e->session) {
        e->session->abort(reason);
        e->stop = true;
        e->input->interrupt();
        sync_status(*e);
        return;
    }
    {
        std::lock_guard lock(e->m);
        e->desc.status = DescriptorStatus::aborted;
    }
    persist(*e);
}

SessionDescriptor SessionManager::descriptor(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->m);
    return e->desc;
}

std::vector<SessionDescriptor> SessionManager::list() const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::lock_guard lock(mutex_);
        for (const auto& [_, e] : sessions_) entries.push_back(e);
    }
    std::vector<SessionDescriptor> out;
    for (const auto& e : entries) {
        std::lock_guard lock(e->m);
        out.push_back(e->desc);
    }
    return out;
}

std::shared_ptr<EventLog> SessionManager::events(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->m);
    if (!e->log) throw Error(Errc::session_not_performing, "session " + id + " has not started");
    return e->log;
}

std::shared_ptr<Session> SessionManager::session(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->m);
    return e->session;
}

fs::path SessionManager::transcript_path(const std::string& id) const { return options_.data_dir / (id + ".jsonl"); }

StageConfig SessionManager::config(const std::string& id) const {
    auto e = find(id);
    std::lock_guard lock(e->m);
    return e->config;
}

std::size_t SessionManager::recover(bool resume) {
    std::size_t loaded = 0;
    for (const auto& file : fs::directory_iterator(options_.data_dir)) {
        const auto name = file.path().filename().string();
        const std::string suffix = ".session.json";
        if (name.size() <= suffix.size() || name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) continue;
        const auto id = name.substr(0, name.size() - suffix.size());
        {
            std::lock_guard lock(mutex_);
            if (sessions_.contains(id)) continue;
        }
        std::ifstream in(file.path());
        const auto doc = json::parse(in, nullptr, false);
        if (doc.is_discarded()) throw Error(Errc::corrupt_transcript, "unreadable descriptor " + file.path().string());

        auto e = std::make_shared<Entry>();
        const auto& d = doc.at("descriptor");
        e->desc.session_id = d.at("session_id").get<std::string>();
        e->desc.blueprint_path = d.value("blueprint_path", "");
        e->desc.blueprint_hash = d.value("blueprint_hash", "");
        e->desc.roster = roster_from_json(d.at("roster"));
        e->desc.status = parse_descriptor_status(d.at("status").get<std::string>());
        e->desc.created_at = d.value("created_at", "");
        e->desc.turn_budget = d.value("turn_budget", 0);
        e->desc.incomplete = d.value("incomplete", false);
        e->blueprint = parse_blueprint(doc.at("blueprint"));
        e->config = StageConfig::from_json(doc.value("config", json::object()));

        if (e->desc.status != DescriptorStatus::planning) {
            const auto events = read_recoverable(transcript_path(id));
            e->log = std::make_shared<EventLog>();
            Entry* raw = e.get();
            e->input = make_input(e->log, [raw](std::string actor, std::int64_t cs, std::int64_t start) {
                std::lock_guard l(raw->m);
                raw->inflight.push_back({std::move(actor), cs, start});
            });
            e->session = std::make_shared<Session>(e->blueprint, e->desc.roster, gateway_, e->config, id, e->input, e->log);
            if (!events.empty()) e->session->restore(events);
            e->writer = std::make_shared<TranscriptWriter>(transcript_path(id), /*append=*/true);
            e->log->add_listener([w = e->writer](const TranscriptEvent& ev) { w->write(ev); });
            if (events.empty() && e->desc.status == DescriptorStatus::performing) e->session->start();
            if (e->desc.status == DescriptorStatus::aborted && e->session->status() == SessionStatus::performing)
                e->session->abort("recovered as aborted");
        }
        {
            std::lock_guard lock(mutex_);
            sessions_[id] = e;
        }
        if (e->session) {
            sync_status(*e);
            if (resume && e->desc.status == DescriptorStatus::performing) launch(e);
        }
        ++loaded;
    }
    return loaded;
}

bool SessionManager::wait(const std::string& id, std::chrono::milliseconds timeout) {
    auto e = find(id);
    {
        std::unique_lock lock(e->m);
        if (!e->cv.wait_for(lock, timeout, [&] { return !e->running; })) return false;
    }
    if (e->thread.joinable() && e->thread.get_id() != std::this_thread::get_id()) e->thread.join();
    return true;
}

// ---------------------------------------------------------------------------
// HTTP

int http_status(Errc code) {
    switch (code) {
        case Errc::unknown_session: return 404;
        case Errc::validation_failure: return 422;
        case Errc::actor_not_human: return 403;
        case Errc::not_your_turn:
        case Errc::session_not_performing: return 409;
        case Errc::backend_timeout:
        case Errc::backend_unavailable:
        case Errc::script_exhausted: return 502;
        case Errc::precondition:
        case Errc::schema_violation:
        case Errc::roster_mismatch:
        case Errc::empty_turn:
        case Errc::parse_failure:
        case Errc::actor_off_stage: return 400;
        default: return 500;
    }
}

std::string sse_frame(const TranscriptEvent& event) {
    std::string out = "id: " + std::to_string(event.seq) + "\n";
    out += "event: " + std::string(to_string(event.kind)) + "\n";
    out += "data: " + to_json(event).dump() + "\n\n";
    return out;
}

std::vector<TranscriptEvent> parse_sse(std::string_view body) {
    std::vector<TranscriptEvent> out;
    std::string data;
    std::size_t pos = 0;
    while (pos <= body.size()) {
        auto nl = body.find('\n', pos);
        if (nl == std::string_view::npos) nl = body.size();
        const auto line = body.substr(pos, nl - pos);
        if (line.empty()) {
            if (!data.empty()) out.push_back(event_from_json(json::parse(data)));
            data.clear();
        } else if (line.starts_with("data:")) {
            auto v = line.substr(5);
            if (v.starts_with(' ')) v.remove_prefix(1);
            data += v;
        }
        pos = nl + 1;
    }
    if (!data.empty()) out.push_back(event_from_json(json::parse(data)));
    return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        try {
            f(req, res);
        } catch (const Error& e) {
            send_json(res, http_status(e.code()), {{"error", to_string(e.code())}, {"message", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", "malformed_request"}, {"message", e.what()}});
        }
    };
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(Errc::schema_violation, "request body must be a JSON object");
    return j;
}

}  // namespace

void register_routes(httplib::Server& server, SessionManager& manager) {
    server.Post("/sessions", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        NarrativeBlueprint bp;
        std::string path;
        if (body.contains("blueprint")) {
            bp = parse_blueprint(body["blueprint"]);
        } else if (body.contains("blueprint_path")) {
            path = body["blueprint_path"].get<std::string>();
            std::ifstream in(path);
            if (!in) throw Error(Errc::precondition, "cannot open blueprint " + path);
            std::stringstream buf;
            buf << in.rdbuf();
            bp = parse_blueprint(std::string_view(buf.str()));
        } else {
            throw Error(Errc::schema_violation, "expected 'blueprint' or 'blueprint_path'");
        }
        Roster roster;
        if (body.contains("roster")) roster = roster_from_json(body["roster"]);
        std::optional<StageConfig> config;
        if (body.contains("config")) {
            auto merged = manager.default_config().to_json();
            merged.update(body["config"]);
            config = StageConfig::from_json(merged);
        }
        try {
            send_json(res, 201, manager.create(bp, roster, config, path).to_json());
        } catch (const Error& e) {
            if (e.code() != Errc::validation_failure) throw;
            json violations = json::array();
            for (const auto& v : validate(bp)) violations.push_back({{"path", v.path}, {"message", v.message}});
            send_json(res, 422, {{"error", to_string(e.code())}, {"message", e.what()}, {"violations", violations}});
        }
    }));

    server.Get("/sessions", guarded([&manager](const httplib::Request&, httplib::Response& res) {
        json arr = json::array();
        for (const auto& d : manager.list()) arr.push_back(d.to_json());
        send_json(res, 200, arr);
    }));

    server.Post(R"(/sessions/([^/]+)/start)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, manager.start(req.matches[1]).to_json());
    }));

    server.Post(R"(/sessions/([^/]+)/input)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        PlayerInput in;
        in.session_id = req.matches[1];
        in.actor = body.at("actor").get<std::string>();
        in.raw_text = body.at("text").get<std::string>();
        in.client_seq = body.at("client_seq").get<std::int64_t>();
        const auto ack = manager.submit_input(in);
        send_json(res, ack.executed ? 200 : 202, ack.to_json());
    }));

    server.Get(R"(/sessions/([^/]+)/events)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        auto log = manager.events(id);
        const auto desc = manager.descriptor(id);
        std::int64_t since = 0;
        if (req.has_param("since")) since = std::stoll(req.get_param_value("since"));
        else if (req.has_header("Last-Event-ID")) since = std::stoll(req.get_header_value("Last-Event-ID"));
        const bool follow = !req.has_param("follow") || req.get_param_value("follow") != "0";
        Viewer viewer = Viewer::spectator();
        const auto who = req.has_param("viewer") ? req.get_param_value("viewer") : std::string("spectator");
        if (who != "spectator" && !who.empty()) {
            if (!desc.roster.contains(who)) throw Error(Errc::precondition, "unknown viewer '" + who + "'");
            viewer = Viewer::of(who, manager.config(id).reveal_flags_to_humans);
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream",
            [log, viewer, last = since, follow](std::size_t, httplib::DataSink& sink) mutable {
                if (follow && !log->wait_beyond(last, std::chrono::milliseconds(1000))) {
                    if (!log->closed()) {
                        static const std::string ping = ": ping\n\n";
                        return sink.write(ping.data(), ping.size());
                    }
                }
                for (const auto& e : log->since(last)) {
                    last = e.seq;
                    if (!visible_to(e, viewer)) continue;
                    const auto frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size())) return false;
                }
                if (!follow || (log->closed() && log->last_seq() <= last)) sink.done();
                return true;
            });
    }));

    server.Get(R"(/sessions/([^/]+)/transcript)", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        const std::string id = req.matches[1];
        manager.descriptor(id);
        std::ifstream in(manager.transcript_path(id));
        std::stringstream buf;
        if (in) buf << in.rdbuf();
        res.status = 200;
        res.set_content(buf.str(), "application/x-ndjson");
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([&manager](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, manager.descriptor(req.matches[1]).to_json());
    }));
}

}  // namespace stagecraft
