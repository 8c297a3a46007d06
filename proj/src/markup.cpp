#include "stagecraft/markup.hpp"

#include <algorithm>

namespace stagecraft {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kCallOpen = "<tool_call>";
constexpr std::string_view kCallClose = "</tool_call>";

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

struct Span {
    SegmentKind kind;
    std::size_t begin;
    std::size_t end;
    bool closed;
};

// Locates tagged spans left to right. An unclosed think swallows the remainder; an
// unclosed tool_call is left as plain text.
std::vector<Span> find_spans(std::string_view raw) {
    std::vector<Span> spans;
    std::size_t pos = 0;
    while (pos < raw.size()) {
        const auto think = raw.find(kThinkOpen, pos);
        const auto call = raw.find(kCallOpen, pos);
        if (think == std::string_view::npos && call == std::string_view::npos) break;
        if (think != std::string_view::npos && (call == std::string_view::npos || think < call)) {
            const auto close = raw.find(kThinkClose, think + kThinkOpen.size());
            if (close == std::string_view::npos) {
                spans.push_back({SegmentKind::think, think, raw.size(), false});
                break;
            }
            spans.push_back({SegmentKind::think, think, close + kThinkClose.size(), true});
            pos = close + kThinkClose.size();
        } else {
            const auto close = raw.find(kCallClose, call + kCallOpen.size());
            if (close == std::string_view::npos) {
                pos = call + kCallOpen.size();
                continue;
            }
            spans.push_back({SegmentKind::tool_call, call, close + kCallClose.size(), true});
            pos = close + kCallClose.size();
        }
    }
    return spans;
}

std::string join_visible(std::string_view raw, const std::vector<Span>& spans, bool strip_calls) {
    std::vector<std::string_view> pieces;
    std::size_t cursor = 0;
    for (const auto& s : spans) {
        if (s.kind == SegmentKind::tool_call && !strip_calls) continue;
        pieces.push_back(raw.substr(cursor, s.begin - cursor));
        cursor = s.end;
    }
    pieces.push_back(raw.substr(std::min(cursor, raw.size())));

    std::string out;
    bool pending_newline = false;
    for (std::size_t i = 0; i < pieces.size(); ++i) {
        const auto piece = pieces[i];
        std::size_t b = 0;
        std::size_t e = piece.size();
        while (b < e && is_space(piece[b])) ++b;
        while (e > b && is_space(piece[e - 1])) --e;
        const bool lead_nl = piece.substr(0, b).find('\n') != std::string_view::npos;
        const bool trail_nl = piece.substr(e).find('\n') != std::string_view::npos;
        if (b == e) {
            pending_newline = pending_newline || lead_nl;
            continue;
        }
        if (!out.empty()) out += (pending_newline || lead_nl) ? '\n' : ' ';
        out.append(piece.substr(b, e - b));
        pending_newline = trail_nl;
    }
    return out;
}

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

ToolCallParse parse_tool_calls(std::string_view raw) {
    ToolCallParse out;
    std::size_t pos = 0;
    while (true) {
        const auto open = raw.find(kCallOpen, pos);
        if (open == std::string_view::npos) break;
        const auto body_begin = open + kCallOpen.size();
        const auto close = raw.find(kCallClose, body_begin);
        if (close == std::string_view::npos) {
            out.malformed.push_back({open, "unclosed <tool_call>"});
            break;
        }
        pos = close + kCallClose.size();
        const auto body = raw.substr(body_begin, close - body_begin);
        auto parsed = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
        if (parsed.is_discarded()) {
            out.malformed.push_back({open, "body is not valid JSON"});
            continue;
        }
        if (!parsed.is_object()) {
            out.malformed.push_back({open, "body must be a single JSON object"});
            continue;
        }
        if (parsed.size() != 2 || !parsed.contains("name") || !parsed.contains("arguments")) {
            out.malformed.push_back({open, "body must have exactly the keys name and arguments"});
            continue;
        }
        if (!parsed["name"].is_string() || !parsed["arguments"].is_object()) {
            out.malformed.push_back({open, "name must be a string and arguments an object"});
            continue;
        }
        out.calls.push_back({parsed["name"].get<std::string>(), parsed["arguments"]});
    }
    return out;
}

std::string render_tool_calls(const std::vector<ToolCall>& calls) {
    std::string out;
    for (const auto& call : calls) {
        nlohmann::json body = {{"name", call.name}, {"arguments", call.arguments}};
        out += kCallOpen;
        out += body.dump();
        out += kCallClose;
    }
    return out;
}

ThinkSplit extract_think(std::string_view raw) {
    ThinkSplit out;
    auto spans = find_spans(raw);
    std::vector<Span> thinks;
    std::copy_if(spans.begin(), spans.end(), std::back_inserter(thinks),
                 [](const Span& s) { return s.kind == SegmentKind::think; });
    if (!thinks.empty()) {
        const auto& first = thinks.front();
        const auto inner_begin = first.begin + kThinkOpen.size();
        const auto inner_end = first.closed ? first.end - kThinkClose.size() : first.end;
        out.thinking = trim(raw.substr(inner_begin, inner_end - inner_begin));
        if (!first.closed) out.warnings.emplace_back("unclosed <think> tag; remainder treated as thinking");
        if (thinks.size() > 1) out.warnings.emplace_back("extra <think> spans ignored");
    }
    out.visible = join_visible(raw, thinks, false);
    return out;
}

std::vector<Segment> segment_reply(std::string_view raw) {
    std::vector<Segment> out;
    std::size_t cursor = 0;
    for (const auto& s : find_spans(raw)) {
        if (s.begin > cursor) out.push_back({SegmentKind::text, cursor, s.begin});
        out.push_back({s.kind, s.begin, s.end});
        cursor = s.end;
    }
    if (cursor < raw.size()) out.push_back({SegmentKind::text, cursor, raw.size()});
    return out;
}

std::string visible_text(std::string_view raw) { return join_visible(raw, find_spans(raw), true); }

}  // namespace stagecraft
