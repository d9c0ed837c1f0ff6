#include "streetsafe/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "streetsafe/fingerprint.hpp"

namespace streetsafe {

using nlohmann::json;

namespace {

const std::map<std::string, std::string, std::less<>> kMediaTypes = {
    {".bmp", "image/bmp"}, {".gif", "image/gif"},   {".jpeg", "image/jpeg"},
    {".jpg", "image/jpeg"}, {".png", "image/png"}, {".webp", "image/webp"},
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string media_type(const std::filesystem::path& path) {
  auto it = kMediaTypes.find(lower(path.extension().string()));
  return it == kMediaTypes.end() ? "application/octet-stream" : it->second;
}

}  // namespace

bool is_valid_image_id(std::string_view id) {
  if (id.empty() || id.size() > 200 || id.front() == '.') return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '.';
  });
}

ImageRegistry scan_image_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError(dir.string() + ": not a directory");
  ImageRegistry registry;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (!kMediaTypes.count(lower(entry.path().extension().string()))) continue;
    const std::string id = entry.path().stem().string();
    if (!is_valid_image_id(id)) throw DataError(entry.path().string() + ": image id may only use [A-Za-z0-9_.-]");
    if (!registry.emplace(id, entry.path()).second) throw DataError(entry.path().string() + ": duplicate image id '" + id + "'");
  }
  return registry;
}

PairingStrategy parse_pairing_strategy(std::string_view name) {
  if (name == "balanced") return PairingStrategy::kBalanced;
  if (name == "uniform") return PairingStrategy::kUniform;
  if (name == "match-quality") return PairingStrategy::kMatchQuality;
  throw DataError("unknown pairing strategy '" + std::string(name) + "' (expected balanced, uniform or match-quality)");
}

std::string_view to_string(ChoiceStatus status) {
  switch (status) {
    case ChoiceStatus::kAccepted: return "accepted";
    case ChoiceStatus::kUnknownToken: return "unknown_token";
    case ChoiceStatus::kExpired: return "expired";
    case ChoiceStatus::kReplayed: return "replayed";
    case ChoiceStatus::kMalformed: return "malformed";
  }
  return "malformed";
}

AnnotationService::AnnotationService(ServiceConfig config)
    : config_(std::move(config)), pairing_rng_(config_.pairing_seed), table_(config_.rating) {
  config_.rating.validate();
  if (config_.token_ttl_seconds <= 0) throw DataError("token ttl must be positive");
  for (const auto& [id, path] : config_.images) {
    if (!is_valid_image_id(id)) throw DataError("invalid image id '" + id + "'");
    ids_.push_back(id);
  }
  if (config_.log_path.empty()) throw DataError("annotation service needs a log path");
  if (std::filesystem::exists(config_.log_path)) {
    const auto records = load_comparison_log(config_.log_path);
    table_ = replay_log(records, config_.rating);
    accepted_ = static_cast<std::int64_t>(records.size());
    if (!records.empty()) last_timestamp_ = records.back().timestamp;
  } else if (config_.log_path.has_parent_path()) {
    std::filesystem::create_directories(config_.log_path.parent_path());
  }
  log_fd_ = ::open(config_.log_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (log_fd_ < 0) throw DataError(config_.log_path.string() + ": cannot open log: " + std::strerror(errno));
}

AnnotationService::~AnnotationService() {
  if (log_fd_ >= 0) ::close(log_fd_);
}

std::int64_t AnnotationService::now() const {
  if (config_.clock) return config_.clock();
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

std::string AnnotationService::new_token() {
  thread_local std::random_device device;
  std::uint64_t hi = (static_cast<std::uint64_t>(device()) << 32) | device();
  std::uint64_t lo = (static_cast<std::uint64_t>(device()) << 32) | device();
  std::string token;
  do {
    token = to_hex(hi) + to_hex(lo);
    ++lo;
  } while (outstanding_.count(token) || consumed_.count(token));
  return token;
}

void AnnotationService::purge_expired(std::int64_t t) {
  for (auto it = outstanding_.begin(); it != outstanding_.end();) {
    if (t - it->second.issued_at > config_.token_ttl_seconds) {
      it = outstanding_.erase(it);
    } else {
      ++it;
    }
  }
}

PairAssignment AnnotationService::get_pair() {
  if (ids_.size() < 2) throw DataError("pairing needs at least two registered images");
  std::lock_guard lock(writer_);
  const std::int64_t t = now();
  if (++issued_since_purge_ >= 1024) {
    purge_expired(t);
    issued_since_purge_ = 0;
  }
  const std::size_t n = ids_.size();
  // Only the writer mutates the table, so reading it under writer_ is safe.
  auto rating = [&](std::size_t i) {
    const auto* r = table_.find(ids_[i]);
    return r ? *r : init_rating(config_.rating);
  };
  // Uniform choice among the indices (other than `skip`) minimizing `key`.
  auto pick_min = [&](auto&& key, std::size_t skip) {
    std::vector<std::size_t> candidates;
    auto best = key(skip == 0 ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == skip) continue;
      const auto k = key(i);
      if (k < best) {
        best = k;
        candidates.clear();
      }
      if (!(best < k)) candidates.push_back(i);
    }
    return candidates[pairing_rng_.below(candidates.size())];
  };
  auto games = [&](std::size_t i) { return rating(i).games; };

  std::size_t first;
  std::size_t second;
  switch (config_.pairing) {
    case PairingStrategy::kUniform:
      first = pairing_rng_.below(n);
      second = pairing_rng_.below(n - 1);
      if (second >= first) ++second;
      break;
    case PairingStrategy::kBalanced:
      first = pick_min(games, n);
      second = pairing_rng_.below(n - 1);
      if (second >= first) ++second;
      break;
    case PairingStrategy::kMatchQuality: {
      first = pick_min(games, n);
      const PlayerRating anchor = rating(first);
      second = pick_min(
          [&](std::size_t i) {
            const PlayerRating r = rating(i);
            return std::pair{r.games, -match_quality(anchor, r, config_.rating)};
          },
          first);
      break;
    }
  }
  if (pairing_rng_.below(2) == 1) std::swap(first, second);

  PairAssignment a{new_token(), ids_[first], ids_[second], t};
  outstanding_.emplace(a.pair_token, Outstanding{a.left_id, a.right_id, t});
  return a;
}

void AnnotationService::append_line(const std::string& line) {
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t k = ::write(log_fd_, line.data() + written, line.size() - written);
    if (k < 0) {
      if (errno == EINTR) continue;
      throw DataError(config_.log_path.string() + ": log append failed: " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(k);
  }
}

ChoiceResult AnnotationService::submit_choice(const ChoiceSubmission& s) {
  ChoiceResult result;
  if (s.pair_token.empty() || (s.chosen != "left" && s.chosen != "right")) {
    result.status = ChoiceStatus::kMalformed;
    result.message = "expected a pair_token and chosen = left|right";
    return result;
  }
  std::lock_guard lock(writer_);
  auto it = outstanding_.find(s.pair_token);
  if (it == outstanding_.end()) {
    result.status = consumed_.count(s.pair_token) ? ChoiceStatus::kReplayed : ChoiceStatus::kUnknownToken;
    result.message = result.status == ChoiceStatus::kReplayed ? "token already used" : "unknown token";
    return result;
  }
  const std::int64_t t = now();
  if (t - it->second.issued_at > config_.token_ttl_seconds) {
    outstanding_.erase(it);
    result.status = ChoiceStatus::kExpired;
    result.message = "token expired";
    return result;
  }
  const Outstanding pair = it->second;
  ComparisonRecord record;
  record.timestamp = std::max(t, last_timestamp_);
  record.session = s.session.empty() ? "anon-" + s.pair_token.substr(0, 8) : s.session;
  const bool left = s.chosen == "left";
  record.winner_id = left ? pair.left_id : pair.right_id;
  record.loser_id = left ? pair.right_id : pair.left_id;
  record.meta = s.meta;

  append_line(format_comparison_line(record));
  last_timestamp_ = record.timestamp;
  outstanding_.erase(it);
  consumed_.insert(s.pair_token);
  ++accepted_;
  if (config_.after_append) config_.after_append(record);

  std::unique_lock table_lock(table_mutex_);
  table_.apply(record);
  result.status = ChoiceStatus::kAccepted;
  if (config_.show_scores && has_score_spread(table_)) {
    const auto scores = normalize_scores(table_);
    result.left_score = scores.at(pair.left_id);
    result.right_score = scores.at(pair.right_id);
  }
  return result;
}

ScoreSnapshot AnnotationService::get_scores() const {
  const RatingTable snapshot = ratings();
  ScoreSnapshot out;
  if (!has_score_spread(snapshot)) return out;
  out.collecting = false;
  for (const auto& [id, score] : normalize_scores(snapshot)) {
    const auto& r = snapshot.ratings().at(id);
    out.scores.push_back({id, score, r.mu, r.sigma, r.games});
  }
  std::stable_sort(out.scores.begin(), out.scores.end(),
                   [](const ScoreEntry& a, const ScoreEntry& b) { return a.score > b.score; });
  return out;
}

RatingTable AnnotationService::ratings() const {
  std::shared_lock lock(table_mutex_);
  return table_;
}

std::optional<std::filesystem::path> AnnotationService::image_path(std::string_view id) const {
  if (!is_valid_image_id(id)) return std::nullopt;
  auto it = config_.images.find(std::string(id));
  if (it == config_.images.end()) return std::nullopt;
  return it->second;
}

std::int64_t AnnotationService::accepted_count() const {
  std::lock_guard lock(writer_);
  return accepted_;
}

struct HttpServer::Impl {
  AnnotationService& service;
  httplib::Server server;

  explicit Impl(AnnotationService& s) : service(s) {
    server.new_task_queue = [] { return new httplib::ThreadPool(64); };
    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(json{{"ok", true}}.dump(), "application/json");
    });
    server.Get("/api/pair", [this](const httplib::Request&, httplib::Response& res) {
      try {
        const auto a = service.get_pair();
        res.set_content(json{{"pair_token", a.pair_token}, {"left_id", a.left_id}, {"right_id", a.right_id}}.dump(),
                        "application/json");
      } catch (const DataError& e) {
        res.status = 503;
        res.set_content(json{{"ok", false}, {"error", e.what()}}.dump(), "application/json");
      }
    });
    server.Post("/api/choice", [this](const httplib::Request& req, httplib::Response& res) {
      ChoiceSubmission sub;
      auto string_field = [](const json& doc, const char* key) -> std::string {
        auto it = doc.find(key);
        if (it == doc.end() || it->is_null()) return {};
        if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
        return it->get<std::string>();
      };
      try {
        const json doc = json::parse(req.body);
        if (!doc.is_object()) throw DataError("body must be a JSON object");
        sub.pair_token = string_field(doc, "pair_token");
        sub.chosen = string_field(doc, "chosen");
        sub.meta.age = string_field(doc, "age");
        sub.meta.gender = string_field(doc, "gender");
        sub.meta.location = string_field(doc, "location");
        sub.session = string_field(doc, "session");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"ok", false}, {"error", std::string("malformed body: ") + e.what()}}.dump(),
                        "application/json");
        return;
      }
      const ChoiceResult r = service.submit_choice(sub);
      json body{{"ok", r.status == ChoiceStatus::kAccepted}};
      switch (r.status) {
        case ChoiceStatus::kAccepted: res.status = 200; break;
        case ChoiceStatus::kMalformed: res.status = 400; break;
        case ChoiceStatus::kUnknownToken: res.status = 404; break;
        case ChoiceStatus::kReplayed: res.status = 409; break;
        case ChoiceStatus::kExpired: res.status = 410; break;
      }
      if (r.status != ChoiceStatus::kAccepted) body["error"] = r.message;
      if (r.left_score) body["left_score"] = *r.left_score;
      if (r.right_score) body["right_score"] = *r.right_score;
      res.set_content(body.dump(), "application/json");
    });
    server.Get("/api/scores", [this](const httplib::Request&, httplib::Response& res) {
      const ScoreSnapshot snap = service.get_scores();
      json scores = json::array();
      for (const auto& e : snap.scores) {
        scores.push_back({{"image_id", e.image_id}, {"score", e.score}, {"mu", e.mu}, {"sigma", e.sigma}, {"games", e.games}});
      }
      res.set_content(json{{"status", snap.collecting ? "collecting" : "ok"}, {"scores", scores}}.dump(),
                      "application/json");
    });
    server.Get(R"(/api/images/(.+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto path = service.image_path(req.matches[1].str());
      std::ifstream in;
      if (path) in.open(*path, std::ios::binary);
      if (!path || !in) {
        res.status = 404;
        res.set_content(json{{"ok", false}, {"error", "unknown image"}}.dump(), "application/json");
        return;
      }
      std::ostringstream bytes;
      bytes << in.rdbuf();
      res.set_content(bytes.str(), media_type(*path));
    });
  }
};

HttpServer::HttpServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpServer::~HttpServer() { stop(); }

int HttpServer::bind_to_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool HttpServer::bind(const std::string& host, int port) { return impl_->server.bind_to_port(host, port); }
bool HttpServer::listen_after_bind() { return impl_->server.listen_after_bind(); }
void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}
bool HttpServer::is_running() const { return impl_->server.is_running(); }

}  // namespace streetsafe
