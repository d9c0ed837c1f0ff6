#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "streetsafe/common.hpp"

namespace streetsafe {

struct TrueSkillParams {
  double mu0 = 25.0;
  double sigma0 = 25.0 / 3.0;
  double beta = 25.0 / 6.0;
  double tau = 25.0 / 300.0;  // dynamics; 0 disables variance inflation

  /// sigma0 and beta must be positive, tau non-negative, mu0 finite.
  void validate() const;
};

struct PlayerRating {
  double mu = 0.0;
  double sigma = 1.0;
  std::int64_t games = 0;
  friend bool operator==(const PlayerRating&, const PlayerRating&) = default;
};

PlayerRating init_rating(const TrueSkillParams& params = {});

/// Additive mean correction of a two-player no-draw win, v(t) = phi(t) / Phi(t).
/// Uses an asymptotic expansion below t = -6 where Phi underflows in
/// relative precision.
double win_mean_factor(double t);
/// Multiplicative variance correction w(t) = v(t) (v(t) + t), in (0, 1).
double win_variance_factor(double t);

/// Two-player, no-draw update. Returns (new winner, new loser).
std::pair<PlayerRating, PlayerRating> update(const PlayerRating& winner, const PlayerRating& loser,
                                             const TrueSkillParams& params = {});

/// Probability-of-draw style match quality in (0, 1]: highest for equal
/// means and small uncertainty, so the outcome is least predictable.
double match_quality(const PlayerRating& a, const PlayerRating& b, const TrueSkillParams& params = {});

/// Optional annotator metadata; empty strings mean "not given".
struct AnnotatorMeta {
  std::string age;
  std::string gender;
  std::string location;
  friend bool operator==(const AnnotatorMeta&, const AnnotatorMeta&) = default;
};

struct ComparisonRecord {
  std::int64_t timestamp = 0;  // UTC seconds
  std::string session;
  std::string winner_id;
  std::string loser_id;
  AnnotatorMeta meta;
  friend bool operator==(const ComparisonRecord&, const ComparisonRecord&) = default;
};

/// One tab-separated log line (with trailing newline). Missing metadata is
/// written as '-'; tabs and newlines inside fields are replaced by spaces.
std::string format_comparison_line(const ComparisonRecord& record);
/// Parses the whole log, validating field counts, distinct ids and
/// non-decreasing timestamps.
std::vector<ComparisonRecord> parse_comparison_log(std::istream& in, const std::string& source);
std::vector<ComparisonRecord> load_comparison_log(const std::filesystem::path& path);

class RatingTable {
 public:
  explicit RatingTable(TrueSkillParams params = {});

  const TrueSkillParams& params() const { return params_; }
  const std::map<std::string, PlayerRating>& ratings() const { return ratings_; }
  std::size_t size() const { return ratings_.size(); }
  bool empty() const { return ratings_.empty(); }
  const PlayerRating* find(const std::string& id) const;

  /// Ensures `id` exists, initialised to the prior.
  const PlayerRating& ensure(const std::string& id);
  /// Applies one comparison; throws DataError when winner == loser.
  void apply(const ComparisonRecord& record);
  void set(const std::string& id, const PlayerRating& rating) { ratings_[id] = rating; }

  friend bool operator==(const RatingTable&, const RatingTable&);

 private:
  TrueSkillParams params_;
  std::map<std::string, PlayerRating> ratings_;
};

/// Folds update() over the records in order.
RatingTable replay_log(std::span<const ComparisonRecord> records, const TrueSkillParams& params = {});

enum class ScoreMode { kMean, kConservative };  // mu, or mu - 3 sigma

/// Min-max normalization of the per-image score to [0, 1]. Throws DataError
/// when fewer than two distinct values exist.
std::map<std::string, double> normalize_scores(const RatingTable& table, ScoreMode mode = ScoreMode::kMean);

/// True when normalize_scores would succeed.
bool has_score_spread(const RatingTable& table, ScoreMode mode = ScoreMode::kMean);

/// Ratings export: image_id,mu,sigma,games.
void write_ratings(std::ostream& out, const RatingTable& table, std::string_view fingerprint = {});
RatingTable load_ratings(const std::filesystem::path& path, const TrueSkillParams& params = {});

struct LabelEntry {
  double score = 0.0;
  Action label = Action::kUnsafe;
  bool overridden = false;
  friend bool operator==(const LabelEntry&, const LabelEntry&) = default;
};

struct LabelSet {
  std::map<std::string, LabelEntry> entries;
  double threshold = 0.0;
};

/// threshold = mean score; safe iff score > threshold. Expert overrides
/// replace the thresholded label and are flagged.
LabelSet derive_labels(const std::map<std::string, double>& scores,
                       const std::map<std::string, Action>& overrides = {});

/// Label export: image_id,score,label,overridden.
void write_labels(std::ostream& out, const LabelSet& labels, std::string_view fingerprint = {});
LabelSet load_labels(const std::filesystem::path& path);
/// Overrides file: image_id,label.
std::map<std::string, Action> load_overrides(const std::filesystem::path& path);

}  // namespace streetsafe
