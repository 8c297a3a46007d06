#include "stagecraft/config.hpp"

#include <cstdlib>
#include <fstream>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

json BackendSettings::to_json() const {
    return {{"kind", kind}, {"script", script}, {"endpoint", endpoint}, {"model", model}, {"api_key_env", api_key_env}};
}

BackendSettings BackendSettings::from_json(const json& j) {
    BackendSettings s;
    s.kind = j.value("kind", s.kind);
    s.script = j.value("script", s.script);
    s.endpoint = j.value("endpoint", s.endpoint);
    s.model = j.value("model", s.model);
    s.api_key_env = j.value("api_key_env", s.api_key_env);
    return s;
}

json AppConfig::to_json() const {
    return {{"backend", backend.to_json()},
            {"judge", judge.to_json()},
            {"search", {{"kind", search.kind}, {"path", search.path}, {"host", search.host}}},
            {"stage", stage.to_json()},
            {"server", {{"host", server.host}, {"port", server.port}, {"data_dir", server.data_dir}}}};
}

AppConfig AppConfig::from_json(const json& j) {
    try {
        AppConfig c;
        if (j.contains("backend")) c.backend = BackendSettings::from_json(j["backend"]);
        c.judge = j.contains("judge") ? BackendSettings::from_json(j["judge"]) : c.backend;
        if (j.contains("search")) {
            const auto& s = j["search"];
            c.search.kind = s.value("kind", c.search.kind);
            c.search.path = s.value("path", c.search.path);
            c.search.host = s.value("host", c.search.host);
        }
        if (j.contains("stage")) c.stage = StageConfig::from_json(j["stage"]);
        if (j.contains("server")) {
            const auto& s = j["server"];
            c.server.host = s.value("host", c.server.host);
            c.server.port = s.value("port", c.server.port);
            c.server.data_dir = s.value("data_dir", c.server.data_dir);
        }
        return c;
    } catch (const json::exception& e) {
        throw Error(Errc::schema_violation, std::string("config: ") + e.what());
    }
}

AppConfig AppConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::precondition, "cannot open config " + path.string());
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(Errc::schema_violation, "config is not JSON: " + path.string());
    return from_json(j);
}

std::shared_ptr<Backend> make_backend(const BackendSettings& settings) {
    if (settings.kind == "scripted") {
        if (settings.script.empty()) throw Error(Errc::precondition, "scripted backend needs a script path");
        return ScriptedBackend::from_jsonl(settings.script);
    }
    if (settings.kind != "http") throw Error(Errc::precondition, "unknown backend kind '" + settings.kind + "'");
    auto cfg = HttpBackend::config_from_env().value_or(HttpBackend::Config{});
    if (!settings.endpoint.empty()) cfg.endpoint = settings.endpoint;
    if (!settings.model.empty()) cfg.model = settings.model;
    if (const char* key = std::getenv(settings.api_key_env.c_str())) cfg.api_key = key;
    if (cfg.endpoint.empty()) throw Error(Errc::precondition, "http backend needs an endpoint (config or STAGECRAFT_LLM_URL)");
    return std::make_shared<HttpBackend>(cfg);
}

std::unique_ptr<SearchProvider> make_search(const SearchSettings& settings) {
    if (settings.kind == "none") return nullptr;
    if (settings.kind == "fixture") return std::make_unique<FixtureSearch>(FixtureSearch::from_file(settings.path));
    if (settings.kind == "wikipedia") return std::make_unique<WikipediaSearch>(settings.host);
    throw Error(Errc::precondition, "unknown search kind '" + settings.kind + "'");
}

}  // namespace stagecraft
