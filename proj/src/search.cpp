#include "stagecraft/search.hpp"

#include <fstream>
#include <regex>

#include <httplib.h>

#include "stagecraft/error.hpp"

namespace stagecraft {

using nlohmann::json;

FixtureSearch FixtureSearch::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::search_unavailable, "cannot open search fixture " + path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(Errc::schema_violation, "search fixture must be a JSON object");
    std::map<std::string, std::vector<SearchHit>> results;
    for (auto it = doc.begin(); it != doc.end(); ++it) {
        auto& hits = results[it.key()];
        for (const auto& h : it.value()) hits.push_back({h.value("title", ""), h.value("snippet", "")});
    }
    return FixtureSearch(std::move(results));
}

std::vector<SearchHit> FixtureSearch::search(const std::string& query) {
    auto it = results_.find(query);
    return it == results_.end() ? std::vector<SearchHit>{} : it->second;
}

WikipediaSearch::WikipediaSearch(std::string host, int max_hits) : host_(std::move(host)), max_hits_(max_hits) {}

std::vector<SearchHit> WikipediaSearch::parse_response(const json& body, int max_hits) {
    static const std::regex tags("<[^>]*>");
    std::vector<SearchHit> out;
    if (!body.contains("query") || !body["query"].contains("search")) return out;
    for (const auto& item : body["query"]["search"]) {
        if (static_cast<int>(out.size()) >= max_hits) break;
        out.push_back({item.value("title", ""), std::regex_replace(item.value("snippet", ""), tags, "")});
    }
    return out;
}

std::vector<SearchHit> WikipediaSearch::search(const std::string& query) {
    httplib::Client client(host_);
    client.set_connection_timeout(5, 0);
    client.set_read_timeout(10, 0);
    const httplib::Params params{{"action", "query"}, {"list", "search"}, {"format", "json"},
                                 {"srlimit", std::to_string(max_hits_)}, {"srsearch", query}};
    auto res = client.Get("/w/api.php", params, httplib::Headers{{"User-Agent", "stagecraft/0.1"}});
    if (!res) throw Error(Errc::search_unavailable, "search request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(Errc::search_unavailable, "search returned HTTP " + std::to_string(res->status));
    auto body = json::parse(res->body, nullptr, false);
    if (body.is_discarded()) throw Error(Errc::search_unavailable, "search returned a non-JSON body");
    return parse_response(body, max_hits_);
}

}  // namespace stagecraft
