#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "streetsafe/trueskill.hpp"

namespace streetsafe {

using ImageRegistry = std::map<std::string, std::filesystem::path>;

/// Ids are restricted to [A-Za-z0-9_.-] and may not start with a dot.
bool is_valid_image_id(std::string_view id);

/// Every regular image file (jpg, jpeg, png, gif, webp, bmp) directly in
/// `dir`, keyed by file stem. Throws DataError on duplicate or invalid stems.
ImageRegistry scan_image_directory(const std::filesystem::path& dir);

/// kBalanced: an image with the fewest games, then a random partner.
/// kUniform: two distinct images at random.
/// kMatchQuality: an image with the fewest games, then the partner with the
/// highest TrueSkill match quality among the least-played others.
enum class PairingStrategy { kBalanced, kUniform, kMatchQuality };
PairingStrategy parse_pairing_strategy(std::string_view name);

struct ServiceConfig {
  ImageRegistry images;
  std::filesystem::path log_path;
  PairingStrategy pairing = PairingStrategy::kBalanced;
  std::int64_t token_ttl_seconds = 1800;
  TrueSkillParams rating;
  std::uint64_t pairing_seed = 0;
  /// Returns UTC seconds; defaults to the system clock.
  std::function<std::int64_t()> clock;
  /// Runs after a record reaches the log and before ratings change. Tests
  /// use it to simulate a crash between the two.
  std::function<void(const ComparisonRecord&)> after_append;
  /// Include the pair's normalized scores in choice acknowledgements.
  bool show_scores = true;
};

struct PairAssignment {
  std::string pair_token;
  std::string left_id;
  std::string right_id;
  std::int64_t issued_at = 0;
};

struct ChoiceSubmission {
  std::string pair_token;
  std::string chosen;  // "left" or "right"
  AnnotatorMeta meta;
  std::string session;  // optional
};

enum class ChoiceStatus { kAccepted, kUnknownToken, kExpired, kReplayed, kMalformed };
std::string_view to_string(ChoiceStatus status);

struct ChoiceResult {
  ChoiceStatus status = ChoiceStatus::kMalformed;
  std::string message;
  std::optional<double> left_score;
  std::optional<double> right_score;
};

struct ScoreEntry {
  std::string image_id;
  double score = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  std::int64_t games = 0;
};

struct ScoreSnapshot {
  bool collecting = true;  // fewer than two distinct ratings
  std::vector<ScoreEntry> scores;  // descending score
};

/// Pair issuing, choice recording and live ratings over an append-only
/// comparison log. The log is replayed at construction.
class AnnotationService {
 public:
  explicit AnnotationService(ServiceConfig config);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  /// Throws DataError when fewer than two images are registered.
  PairAssignment get_pair();
  ChoiceResult submit_choice(const ChoiceSubmission& submission);
  ScoreSnapshot get_scores() const;
  /// Consistent copy of the live ratings.
  RatingTable ratings() const;
  std::optional<std::filesystem::path> image_path(std::string_view id) const;
  std::int64_t accepted_count() const;
  const ServiceConfig& config() const { return config_; }

 private:
  struct Outstanding {
    std::string left_id;
    std::string right_id;
    std::int64_t issued_at = 0;
  };

  std::int64_t now() const;
  std::string new_token();
  void append_line(const std::string& line);
  void purge_expired(std::int64_t now);

  ServiceConfig config_;
  std::vector<std::string> ids_;
  int log_fd_ = -1;

  mutable std::mutex writer_;  // serializes every mutation
  std::unordered_map<std::string, Outstanding> outstanding_;
  std::unordered_set<std::string> consumed_;
  std::int64_t last_timestamp_ = 0;
  std::int64_t accepted_ = 0;
  std::int64_t issued_since_purge_ = 0;
  Rng pairing_rng_;

  mutable std::shared_mutex table_mutex_;
  RatingTable table_;
};

/// JSON-over-HTTP front end for an AnnotationService.
class HttpServer {
 public:
  explicit HttpServer(AnnotationService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Returns the chosen port, or -1.
  int bind_to_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  bool is_running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace streetsafe
