#include "stagecraft/transcript.hpp"

#include <cstdio>
#include <sstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

std::string_view to_string(EventKind k) noexcept {
    switch (k) {
        case EventKind::speech: return "speech";
        case EventKind::action_attempt: return "action_attempt";
        case EventKind::action_result: return "action_result";
        case EventKind::broadcast: return "broadcast";
        case EventKind::thinking: return "thinking";
        case EventKind::instruction: return "instruction";
        case EventKind::system: return "system";
    }
    return "system";
}

std::optional<EventKind> parse_event_kind(std::string_view s) noexcept {
    for (auto k : {EventKind::speech, EventKind::action_attempt, EventKind::action_result, EventKind::broadcast,
                   EventKind::thinking, EventKind::instruction, EventKind::system})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

std::string TranscriptEvent::display_text() const {
    switch (kind) {
        case EventKind::speech: return speech.value_or(text);
        case EventKind::action_attempt: return action ? "(" + *action + ")" : text;
        case EventKind::thinking: return thinking ? "[" + *thinking + "]" : text;
        default: return text;
    }
}

json to_json(const TranscriptEvent& e) {
    json j = {{"seq", e.seq},
              {"timestamp", e.timestamp},
              {"kind", std::string(to_string(e.kind))},
              {"speaker", e.speaker},
              {"text", e.text},
              {"data", e.data}};
    switch (e.visibility.scope) {
        case Visibility::Scope::all: j["visibility"] = "all"; break;
        case Visibility::Scope::control: j["visibility"] = "control"; break;
        case Visibility::Scope::private_to: j["visibility"] = {{"private_to", e.visibility.actor}}; break;
    }
    if (e.speech) j["speech"] = *e.speech;
    if (e.action) j["action"] = *e.action;
    if (e.thinking) j["thinking"] = *e.thinking;
    return j;
}

TranscriptEvent event_from_json(const json& j) {
    try {
        TranscriptEvent e;
        e.seq = j.at("seq").get<std::int64_t>();
        e.timestamp = j.at("timestamp").get<double>();
        auto kind = parse_event_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(Errc::corrupt_transcript, "unknown event kind");
        e.kind = *kind;
        e.speaker = j.at("speaker").get<std::string>();
        e.text = j.value("text", "");
        e.data = j.value("data", json::object());
        const auto& vis = j.at("visibility");
        if (vis.is_string() && vis == "all") e.visibility = Visibility::all();
        else if (vis.is_string() && vis == "control") e.visibility = Visibility::control();
        else if (vis.is_object() && vis.contains("private_to"))
            e.visibility = Visibility::private_to(vis["private_to"].get<std::string>());
        else throw Error(Errc::corrupt_transcript, "bad visibility");
        if (j.contains("speech")) e.speech = j["speech"].get<std::string>();
        if (j.contains("action")) e.action = j["action"].get<std::string>();
        if (j.contains("thinking")) e.thinking = j["thinking"].get<std::string>();
        return e;
    } catch (const json::exception& ex) {
        throw Error(Errc::corrupt_transcript, ex.what());
    }
}

bool visible_to(const TranscriptEvent& e, const Viewer& viewer) {
    switch (e.visibility.scope) {
        case Visibility::Scope::all: return true;
        case Visibility::Scope::private_to: return viewer.actor && *viewer.actor == e.visibility.actor;
        case Visibility::Scope::control: return !viewer.actor || viewer.reveal_control;
    }
    return false;
}

std::vector<TranscriptEvent> filter_for(const std::vector<TranscriptEvent>& events, const Viewer& viewer) {
    std::vector<TranscriptEvent> out;
    for (const auto& e : events)
        if (visible_to(e, viewer)) out.push_back(e);
    return out;
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string to_jsonl(const std::vector<TranscriptEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        out += to_json(e).dump();
        out += '\n';
    }
    return out;
}

std::string transcript_hash(const std::vector<TranscriptEvent>& events) { return fnv1a_hex(to_jsonl(events)); }

// ---------------------------------------------------------------------------

TranscriptEvent EventLog::append(TranscriptEvent e) {
    std::lock_guard lock(mutex_);
    e.seq = events_.empty() ? 1 : events_.back().seq + 1;
    events_.push_back(e);
    for (const auto& l : listeners_) l(e);
    cv_.notify_all();
    return e;
}

std::vector<TranscriptEvent> EventLog::snapshot() const {
    std::lock_guard lock(mutex_);
    return events_;
}

std::vector<TranscriptEvent> EventLog::since(std::int64_t seq) const {
    std::lock_guard lock(mutex_);
    std::vector<TranscriptEvent> out;
    for (const auto& e : events_)
        if (e.seq > seq) out.push_back(e);
    return out;
}

std::int64_t EventLog::last_seq() const {
    std::lock_guard lock(mutex_);
    return events_.empty() ? 0 : events_.back().seq;
}

std::size_t EventLog::size() const {
    std::lock_guard lock(mutex_);
    return events_.size();
}

bool EventLog::wait_beyond(std::int64_t seq, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || (!events_.empty() && events_.back().seq > seq); });
    return !events_.empty() && events_.back().seq > seq;
}

void EventLog::close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    cv_.notify_all();
}

bool EventLog::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

void EventLog::add_listener(Listener l) {
    std::lock_guard lock(mutex_);
    listeners_.push_back(std::move(l));
}

// ---------------------------------------------------------------------------

TranscriptWriter::TranscriptWriter(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
    if (!out_) throw Error(Errc::precondition, "cannot open transcript " + path.string());
}

void TranscriptWriter::write(const TranscriptEvent& e) {
    std::lock_guard lock(mutex_);
    out_ << to_json(e).dump() << '\n';
    out_.flush();
}

std::vector<TranscriptEvent> read_transcript_text(std::string_view text) {
    std::vector<TranscriptEvent> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw Error(Errc::corrupt_transcript, "line " + std::to_string(lineno) + ": not valid JSON");
        TranscriptEvent e;
        try {
            e = event_from_json(j);
        } catch (const Error& err) {
            throw Error(Errc::corrupt_transcript, "line " + std::to_string(lineno) + ": " + err.what());
        }
        const auto expected = out.empty() ? 1 : out.back().seq + 1;
        if (e.seq != expected)
            throw Error(Errc::corrupt_transcript, "line " + std::to_string(lineno) + ": expected seq " +
                                                      std::to_string(expected) + ", found " + std::to_string(e.seq));
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<TranscriptEvent> read_transcript(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::corrupt_transcript, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return read_transcript_text(buf.str());
}

}  // namespace stagecraft
