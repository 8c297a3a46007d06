#pragma once

// Reference lookup used by the actor designer.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace stagecraft {

struct SearchHit {
    std::string title;
    std::string snippet;
};

class SearchProvider {
public:
    virtual ~SearchProvider() = default;
    /// Throws Error{search_unavailable} when the provider cannot be reached.
    virtual std::vector<SearchHit> search(const std::string& query) = 0;
    virtual std::string name() const = 0;
};

/// Canned results keyed by exact query; unknown queries return no hits.
///
/// File format: {"<query>": [{"title": ..., "snippet": ...}, ...], ...}
class FixtureSearch : public SearchProvider {
public:
    FixtureSearch() = default;
    explicit FixtureSearch(std::map<std::string, std::vector<SearchHit>> results) : results_(std::move(results)) {}
    static FixtureSearch from_file(const std::filesystem::path& path);

    std::vector<SearchHit> search(const std::string& query) override;
    std::string name() const override { return "fixture"; }

private:
    std::map<std::string, std::vector<SearchHit>> results_;
};

/// MediaWiki search API client (defaults to English Wikipedia).
class WikipediaSearch : public SearchProvider {
public:
    explicit WikipediaSearch(std::string host = "https://en.wikipedia.org", int max_hits = 3);

    std::vector<SearchHit> search(const std::string& query) override;
    std::string name() const override { return "wikipedia"; }

    /// Parses a `list=search` response body.
    static std::vector<SearchHit> parse_response(const nlohmann::json& body, int max_hits);

private:
    std::string host_;
    int max_hits_;
};

}  // namespace stagecraft
