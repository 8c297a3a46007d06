#pragma once

// Application configuration: a JSON file whose values command-line flags may override.
//
// {
//   "backend": {"kind": "scripted", "script": "replies.jsonl"},
//   "judge":   {"kind": "http", "endpoint": "https://...", "model": "...", "api_key_env": "JUDGE_KEY"},
//   "search":  {"kind": "wikipedia"},
//   "stage":   {"stall_threshold": 6, "turn_budget": 200, "history_window": 30, ...},
//   "server":  {"port": 8080, "data_dir": "sessions"}
// }

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "stagecraft/gateway.hpp"
#include "stagecraft/search.hpp"
#include "stagecraft/stage.hpp"

namespace stagecraft {

struct BackendSettings {
    std::string kind = "http";  ///< "http" or "scripted"
    std::string script;         ///< scripted: JSONL path
    std::string endpoint;       ///< http: base URL; empty falls back to the environment
    std::string model;
    std::string api_key_env = "STAGECRAFT_LLM_API_KEY";

    nlohmann::json to_json() const;
    static BackendSettings from_json(const nlohmann::json& j);
};

struct SearchSettings {
    std::string kind = "none";  ///< "none", "fixture" or "wikipedia"
    std::string path;           ///< fixture file
    std::string host = "https://en.wikipedia.org";
};

struct ServerSettings {
    std::string host = "0.0.0.0";
    int port = 8080;
    std::string data_dir = "sessions";
};

struct AppConfig {
    BackendSettings backend;
    BackendSettings judge;
    SearchSettings search;
    StageConfig stage;
    ServerSettings server;

    nlohmann::json to_json() const;
    /// Missing keys keep defaults. Throws schema_violation on wrongly typed values.
    static AppConfig from_json(const nlohmann::json& j);
    static AppConfig from_file(const std::filesystem::path& path);
};

/// Throws precondition when the settings are incomplete.
std::shared_ptr<Backend> make_backend(const BackendSettings& settings);
/// nullptr for kind "none".
std::unique_ptr<SearchProvider> make_search(const SearchSettings& settings);

}  // namespace stagecraft
