#pragma once

#include <chrono>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentloop/protocol.hpp"

namespace agentloop::search {

enum class Mode {
  Live,    // query the HTTP provider
  Replay,  // serve recorded fixtures only; misses are errors
  Record,  // query live, then persist the response as a fixture
};

enum class QueryKind { Image, Text };

struct SearchResponse {
  QueryKind kind = QueryKind::Text;
  std::optional<std::string> query;  // text search only, as issued
  std::vector<protocol::SearchResultEntry> results;  // at most 5
  double latency_seconds = 0.0;
  bool from_replay = false;
  std::string replay_key;  // fixture key this request resolves to
};

struct SearchConfig {
  Mode mode = Mode::Replay;
  std::filesystem::path fixture_dir;
  std::string base_url;   // live provider, e.g. "https://serpapi.example"
  std::string api_key;    // SEARCH_API_KEY
  double max_qps = 2.0;   // live-mode rate limit, <=0 disables
  int timeout_ms = 10000;
  int max_results = 5;
};

// Text fixtures are keyed by sha256 of the normalized query, image fixtures
// by sha256 of the image bytes; thumbnails live in a sidecar directory so
// fixture JSON stays readable.
class SearchClient {
 public:
  explicit SearchClient(SearchConfig config);

  // Throws Error(ProviderError | QuotaExceeded | ReplayMiss).
  SearchResponse image_search(const std::string& image_png);
  SearchResponse text_search(const std::string& query);

  // Persists a response as a fixture.  Throws Error(Precondition) in replay
  // mode, which never writes.
  void record_fixture(const SearchResponse& response);

  static std::string normalize_query(std::string_view query);
  static std::string text_key(std::string_view query);
  static std::string image_key(std::string_view image_png);

  const SearchConfig& config() const { return config_; }

 private:
  SearchResponse load_fixture(QueryKind kind, const std::string& key,
                              const std::optional<std::string>& query);
  SearchResponse live_request(QueryKind kind, const std::string& key,
                              const std::optional<std::string>& query,
                              const std::string& image_png);
  void throttle();

  SearchConfig config_;
  std::mutex throttle_mutex_;
  std::chrono::steady_clock::time_point next_allowed_;
};

}  // namespace agentloop::search
