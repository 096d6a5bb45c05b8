#include "agentloop/search.hpp"

#include <algorithm>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "agentloop/errors.hpp"
#include "agentloop/util.hpp"

namespace agentloop::search {

using nlohmann::json;

namespace {

const char* kind_dir(QueryKind kind) { return kind == QueryKind::Image ? "image" : "text"; }

}  // namespace

SearchClient::SearchClient(SearchConfig config)
    : config_(std::move(config)), next_allowed_(std::chrono::steady_clock::now()) {
  if (config_.mode != Mode::Live && config_.fixture_dir.empty())
    throw Error(ErrorCode::ConfigError, "replay/record search mode needs a fixture_dir");
  if (config_.mode != Mode::Replay && config_.base_url.empty())
    throw Error(ErrorCode::ConfigError, "live search mode needs a base_url");
}

std::string SearchClient::normalize_query(std::string_view query) {
  return collapse_whitespace(to_lower(query));
}

std::string SearchClient::text_key(std::string_view query) {
  return sha256_hex(normalize_query(query));
}

std::string SearchClient::image_key(std::string_view image_png) {
  return sha256_hex(image_png);
}

SearchResponse SearchClient::image_search(const std::string& image_png) {
  if (image_png.empty())
    throw Error(ErrorCode::Precondition, "image search needs a non-empty image payload");
  std::string key = image_key(image_png);
  if (config_.mode == Mode::Replay) return load_fixture(QueryKind::Image, key, std::nullopt);
  SearchResponse r = live_request(QueryKind::Image, key, std::nullopt, image_png);
  if (config_.mode == Mode::Record) record_fixture(r);
  return r;
}

SearchResponse SearchClient::text_search(const std::string& query) {
  if (trim_view(query).empty())
    throw Error(ErrorCode::Precondition, "text search needs a non-empty query");
  std::string key = text_key(query);
  if (config_.mode == Mode::Replay) return load_fixture(QueryKind::Text, key, query);
  SearchResponse r = live_request(QueryKind::Text, key, query, "");
  if (config_.mode == Mode::Record) record_fixture(r);
  return r;
}

SearchResponse SearchClient::load_fixture(QueryKind kind, const std::string& key,
                                          const std::optional<std::string>& query) {
  auto path = config_.fixture_dir / kind_dir(kind) / (key + ".json");
  if (!std::filesystem::exists(path))
    throw Error(ErrorCode::ReplayMiss,
                std::string(kind_dir(kind)) + " fixture " + key + " not found under " +
                    config_.fixture_dir.string());
  json j = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object() || !j.contains("results"))
    throw Error(ErrorCode::SchemaMismatch, "malformed search fixture " + path.string());

  SearchResponse r;
  r.kind = kind;
  r.query = query;
  if (!r.query && j.contains("query") && j["query"].is_string())
    r.query = j["query"].get<std::string>();
  r.from_replay = true;
  r.replay_key = key;
  for (const auto& e : j["results"]) {
    protocol::SearchResultEntry entry;
    entry.title = e.value("title", "");
    entry.link = e.value("link", "");
    entry.snippet = e.value("snippet", "");
    std::string thumb = e.value("thumbnail", "");
    if (!thumb.empty()) {
      auto thumb_path = config_.fixture_dir / "thumbs" / (thumb + ".png");
      if (!std::filesystem::exists(thumb_path))
        throw Error(ErrorCode::SchemaMismatch,
                    "fixture " + key + " references missing thumbnail " + thumb);
      entry.thumbnail_png = read_file(thumb_path);
    }
    r.results.push_back(std::move(entry));
    if (static_cast<int>(r.results.size()) >= config_.max_results) break;
  }
  return r;
}

void SearchClient::record_fixture(const SearchResponse& response) {
  if (config_.mode == Mode::Replay)
    throw Error(ErrorCode::Precondition, "record_fixture is not available in replay mode");
  json j;
  j["kind"] = kind_dir(response.kind);
  if (response.query) j["query"] = *response.query;
  json results = json::array();
  for (const auto& e : response.results) {
    json entry = {{"title", e.title}, {"link", e.link}, {"snippet", e.snippet}};
    if (!e.thumbnail_png.empty()) {
      std::string thumb_key = sha256_hex(e.thumbnail_png);
      atomic_write_file(config_.fixture_dir / "thumbs" / (thumb_key + ".png"),
                        e.thumbnail_png);
      entry["thumbnail"] = thumb_key;
    } else {
      entry["thumbnail"] = "";
    }
    results.push_back(std::move(entry));
  }
  j["results"] = std::move(results);
  std::string key = response.replay_key;
  atomic_write_file(config_.fixture_dir / kind_dir(response.kind) / (key + ".json"),
                    j.dump(2) + "\n");
}

void SearchClient::throttle() {
  if (config_.max_qps <= 0) return;
  auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::duration<double>(1.0 / config_.max_qps));
  std::chrono::steady_clock::time_point wait_until;
  {
    std::lock_guard<std::mutex> lock(throttle_mutex_);
    auto now = std::chrono::steady_clock::now();
    wait_until = std::max(next_allowed_, now);
    next_allowed_ = wait_until + interval;
  }
  std::this_thread::sleep_until(wait_until);
}

SearchResponse SearchClient::live_request(QueryKind kind, const std::string& key,
                                          const std::optional<std::string>& query,
                                          const std::string& image_png) {
  throttle();
  auto start = std::chrono::steady_clock::now();

  httplib::Client cli(config_.base_url);
  cli.set_connection_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  cli.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);

  httplib::Result res;
  if (kind == QueryKind::Text) {
    httplib::Params params{{"engine", "google"},
                           {"q", *query},
                           {"num", std::to_string(config_.max_results)},
                           {"api_key", config_.api_key}};
    res = cli.Get("/search", params, httplib::Headers{});
  } else {
    json body = {{"engine", "google_lens"},
                 {"image", base64_encode(image_png)},
                 {"num", config_.max_results},
                 {"api_key", config_.api_key}};
    res = cli.Post("/search", body.dump(), "application/json");
  }

  if (!res)
    throw Error(ErrorCode::ProviderError,
                "search provider unreachable: " + httplib::to_string(res.error()));
  if (res->status == 429)
    throw Error(ErrorCode::QuotaExceeded, "search provider rate limit exhausted");
  if (res->status == 401 || res->status == 403)
    throw Error(ErrorCode::ProviderError,
                "search provider rejected credentials (HTTP " +
                    std::to_string(res->status) + ")");
  if (res->status != 200)
    throw Error(ErrorCode::ProviderError,
                "search provider HTTP " + std::to_string(res->status));

  json j = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::ProviderError, "search provider returned malformed JSON");

  SearchResponse r;
  r.kind = kind;
  r.query = query;
  r.replay_key = key;
  const char* list_key = kind == QueryKind::Image ? "visual_matches" : "organic_results";
  for (const auto& e : j.value(list_key, json::array())) {
    protocol::SearchResultEntry entry;
    entry.title = e.value("title", "");
    entry.link = e.value("link", "");
    entry.snippet = e.value("snippet", "");
    std::string thumb_b64 = e.value("thumbnail", "");
    if (!thumb_b64.empty()) entry.thumbnail_png = base64_decode(thumb_b64);
    r.results.push_back(std::move(entry));
    if (static_cast<int>(r.results.size()) >= config_.max_results) break;
  }
  r.latency_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace agentloop::search
