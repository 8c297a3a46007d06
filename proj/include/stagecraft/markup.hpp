#pragma once

// Wire-level parsers for model replies: <think> spans and <tool_call> spans.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace stagecraft {

struct ToolCall {
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

struct MalformedCall {
    std::size_t offset = 0;  ///< byte offset of the opening <tool_call> tag
    std::string message;
};

struct ToolCallParse {
    std::vector<ToolCall> calls;
    std::vector<MalformedCall> malformed;
};

/// Extracts every `<tool_call>{"name": ..., "arguments": {...}}</tool_call>` span in
/// document order. Bodies that are not a single object with exactly those two keys are
/// reported in `malformed` and skipped; later spans are still returned.
ToolCallParse parse_tool_calls(std::string_view raw);

/// Inverse of parse_tool_calls for well-formed calls.
std::string render_tool_calls(const std::vector<ToolCall>& calls);

struct ThinkSplit {
    std::optional<std::string> thinking;
    std::string visible;
    std::vector<std::string> warnings;
};

/// Splits off the first `<think>...</think>` span. An unclosed tag swallows the rest of
/// the text as thinking. Further think spans are removed from `visible` but not kept.
ThinkSplit extract_think(std::string_view raw);

enum class SegmentKind { text, think, tool_call };

struct Segment {
    SegmentKind kind;
    std::size_t begin;
    std::size_t end;
};

/// Partitions `raw` into contiguous text/think/tool_call segments. The segments tile the
/// input: concatenating `raw.substr(begin, end - begin)` over them reproduces it.
std::vector<Segment> segment_reply(std::string_view raw);

/// Removes all think and tool_call segments and trims whitespace at each seam.
std::string visible_text(std::string_view raw);

std::string trim(std::string_view s);

}  // namespace stagecraft
