#include "streetsafe/trueskill.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include "streetsafe/csv.hpp"

namespace streetsafe {

namespace {

constexpr double kAsymptoticCutoff = -6.0;

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Mills ratio Phi(-x) / phi(x) for large positive x by backward evaluation
// of its continued fraction 1/(x + 1/(x + 2/(x + 3/(x + ...)))).
double mills_ratio(double x) {
  double tail = x;
  for (int k = 80; k >= 1; --k) tail = x + k / tail;
  return 1.0 / tail;
}

std::string field_or_dash(const std::string& s) {
  if (s.empty()) return "-";
  std::string out = s;
  for (char& c : out) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

std::string dash_to_empty(std::string_view s) { return s == "-" ? std::string{} : std::string(s); }

}  // namespace

void TrueSkillParams::validate() const {
  if (!std::isfinite(mu0)) throw DataError("TrueSkill mu0 must be finite");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw DataError("TrueSkill sigma0 must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw DataError("TrueSkill beta must be positive");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw DataError("TrueSkill tau must be non-negative");
}

PlayerRating init_rating(const TrueSkillParams& params) {
  params.validate();
  return PlayerRating{params.mu0, params.sigma0, 0};
}

double win_mean_factor(double t) {
  if (t < kAsymptoticCutoff) return 1.0 / mills_ratio(-t);
  return normal_pdf(t) / normal_cdf(t);
}

double win_variance_factor(double t) {
  const double v = win_mean_factor(t);
  return v * (v + t);
}

std::pair<PlayerRating, PlayerRating> update(const PlayerRating& winner, const PlayerRating& loser,
                                             const TrueSkillParams& params) {
  params.validate();
  const double tau2 = params.tau * params.tau;
  const double var_w = winner.sigma * winner.sigma + tau2;
  const double var_l = loser.sigma * loser.sigma + tau2;
  const double c2 = 2.0 * params.beta * params.beta + var_w + var_l;
  const double c = std::sqrt(c2);
  const double t = (winner.mu - loser.mu) / c;
  const double v = win_mean_factor(t);
  const double w = win_variance_factor(t);

  PlayerRating w_out = winner;
  PlayerRating l_out = loser;
  w_out.mu = winner.mu + var_w / c * v;
  l_out.mu = loser.mu - var_l / c * v;
  w_out.sigma = std::sqrt(var_w * (1.0 - var_w / c2 * w));
  l_out.sigma = std::sqrt(var_l * (1.0 - var_l / c2 * w));
  ++w_out.games;
  ++l_out.games;
  if (!std::isfinite(w_out.mu) || !std::isfinite(l_out.mu) || !(w_out.sigma > 0.0) || !(l_out.sigma > 0.0)) {
    throw NumericalError("TrueSkill update produced a non-finite or degenerate rating");
  }
  return {w_out, l_out};
}

double match_quality(const PlayerRating& a, const PlayerRating& b, const TrueSkillParams& params) {
  params.validate();
  const double b2 = 2.0 * params.beta * params.beta;
  const double c2 = b2 + a.sigma * a.sigma + b.sigma * b.sigma;
  const double d = a.mu - b.mu;
  return std::sqrt(b2 / c2) * std::exp(-d * d / (2.0 * c2));
}

std::string format_comparison_line(const ComparisonRecord& r) {
  std::string line = std::to_string(r.timestamp);
  for (const std::string* f : {&r.session, &r.winner_id, &r.loser_id, &r.meta.age, &r.meta.gender, &r.meta.location}) {
    line += '\t';
    line += field_or_dash(*f);
  }
  line += '\n';
  return line;
}

std::vector<ComparisonRecord> parse_comparison_log(std::istream& in, const std::string& source) {
  csv::LineReader reader(in, source);
  std::vector<ComparisonRecord> records;
  std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line, '\t');
    if (f.size() != 7) throw DataError(reader.where() + "expected 7 tab-separated fields, found " + std::to_string(f.size()));
    ComparisonRecord r;
    auto ts = csv::parse_int(f[0]);
    if (!ts) throw DataError(reader.where() + "invalid timestamp '" + std::string(f[0]) + "'");
    r.timestamp = *ts;
    if (r.timestamp < last_ts) throw DataError(reader.where() + "timestamp decreases");
    last_ts = r.timestamp;
    r.session = std::string(f[1]);
    r.winner_id = std::string(f[2]);
    r.loser_id = std::string(f[3]);
    if (r.winner_id.empty() || r.loser_id.empty()) throw DataError(reader.where() + "empty image id");
    if (r.winner_id == r.loser_id) throw DataError(reader.where() + "winner and loser are the same image");
    r.meta = AnnotatorMeta{dash_to_empty(f[4]), dash_to_empty(f[5]), dash_to_empty(f[6])};
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ComparisonRecord> load_comparison_log(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  return parse_comparison_log(in, path.string());
}

RatingTable::RatingTable(TrueSkillParams params) : params_(params) { params_.validate(); }

const PlayerRating* RatingTable::find(const std::string& id) const {
  auto it = ratings_.find(id);
  return it == ratings_.end() ? nullptr : &it->second;
}

const PlayerRating& RatingTable::ensure(const std::string& id) {
  auto it = ratings_.find(id);
  if (it == ratings_.end()) it = ratings_.emplace(id, init_rating(params_)).first;
  return it->second;
}

void RatingTable::apply(const ComparisonRecord& record) {
  if (record.winner_id == record.loser_id) throw DataError("comparison of image '" + record.winner_id + "' with itself");
  const PlayerRating w = ensure(record.winner_id);
  const PlayerRating l = ensure(record.loser_id);
  auto [nw, nl] = update(w, l, params_);
  ratings_[record.winner_id] = nw;
  ratings_[record.loser_id] = nl;
}

bool operator==(const RatingTable& a, const RatingTable& b) {
  return a.params_.mu0 == b.params_.mu0 && a.params_.sigma0 == b.params_.sigma0 && a.params_.beta == b.params_.beta &&
         a.params_.tau == b.params_.tau && a.ratings_ == b.ratings_;
}

RatingTable replay_log(std::span<const ComparisonRecord> records, const TrueSkillParams& params) {
  RatingTable table(params);
  std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.winner_id == r.loser_id) throw DataError("record " + std::to_string(i) + ": winner and loser are the same image");
    if (r.timestamp < last_ts) throw DataError("record " + std::to_string(i) + ": timestamp decreases");
    last_ts = r.timestamp;
    table.apply(r);
  }
  return table;
}

namespace {

double score_of(const PlayerRating& r, ScoreMode mode) { return mode == ScoreMode::kMean ? r.mu : r.mu - 3.0 * r.sigma; }

}  // namespace

bool has_score_spread(const RatingTable& table, ScoreMode mode) {
  if (table.size() < 2) return false;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [id, r] : table.ratings()) {
    lo = std::min(lo, score_of(r, mode));
    hi = std::max(hi, score_of(r, mode));
  }
  return hi > lo;
}

std::map<std::string, double> normalize_scores(const RatingTable& table, ScoreMode mode) {
  if (!has_score_spread(table, mode)) {
    throw DataError("need at least two images with distinct ratings; collect more comparisons");
  }
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& [id, r] : table.ratings()) {
    lo = std::min(lo, score_of(r, mode));
    hi = std::max(hi, score_of(r, mode));
  }
  std::map<std::string, double> scores;
  for (const auto& [id, r] : table.ratings()) scores[id] = (score_of(r, mode) - lo) / (hi - lo);
  return scores;
}

void write_ratings(std::ostream& out, const RatingTable& table, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "image_id,mu,sigma,games\n";
  for (const auto& [id, r] : table.ratings()) {
    out << id << ',' << csv::format_double(r.mu) << ',' << csv::format_double(r.sigma) << ',' << r.games << '\n';
  }
}

RatingTable load_ratings(const std::filesystem::path& path, const TrueSkillParams& params) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "image_id,mu,sigma,games") throw DataError(reader.where() + "header must be 'image_id,mu,sigma,games'");
  RatingTable table(params);
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 4) throw DataError(reader.where() + "expected 4 columns");
    auto mu = csv::parse_double(f[1]);
    auto sigma = csv::parse_double(f[2]);
    auto games = csv::parse_int(f[3]);
    if (!mu || !sigma || !(*sigma > 0.0) || !games || *games < 0) throw DataError(reader.where() + "invalid rating row");
    const std::string id(f[0]);
    if (table.find(id)) throw DataError(reader.where() + "duplicate image_id '" + id + "'");
    table.set(id, PlayerRating{*mu, *sigma, *games});
  }
  return table;
}

LabelSet derive_labels(const std::map<std::string, double>& scores, const std::map<std::string, Action>& overrides) {
  if (scores.empty()) throw DataError("cannot derive labels from an empty score table");
  LabelSet out;
  double sum = 0.0;
  for (const auto& [id, s] : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw DataError("score for '" + id + "' outside [0,1]");
    sum += s;
  }
  out.threshold = sum / static_cast<double>(scores.size());
  for (const auto& [id, s] : scores) {
    out.entries[id] = LabelEntry{s, s > out.threshold ? Action::kSafe : Action::kUnsafe, false};
  }
  for (const auto& [id, label] : overrides) {
    auto it = out.entries.find(id);
    if (it == out.entries.end()) throw DataError("override for unknown image_id '" + id + "'");
    it->second.label = label;
    it->second.overridden = true;
  }
  return out;
}

void write_labels(std::ostream& out, const LabelSet& labels, std::string_view fingerprint) {
  if (!fingerprint.empty()) out << csv::fingerprint_comment(fingerprint);
  out << "image_id,score,label,overridden\n";
  for (const auto& [id, e] : labels.entries) {
    out << id << ',' << csv::format_double(e.score) << ',' << to_string(e.label) << ',' << (e.overridden ? 1 : 0) << '\n';
  }
}

LabelSet load_labels(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "image_id,score,label,overridden") {
    throw DataError(reader.where() + "header must be 'image_id,score,label,overridden'");
  }
  LabelSet labels;
  double sum = 0.0;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 4) throw DataError(reader.where() + "expected 4 columns");
    auto score = csv::parse_double(f[1]);
    auto label = try_parse_action(f[2]);
    if (!score || !(*score >= 0.0 && *score <= 1.0)) throw DataError(reader.where() + "column \"score\": invalid");
    if (!label) throw DataError(reader.where() + "column \"label\": expected safe or unsafe");
    if (f[3] != "0" && f[3] != "1") throw DataError(reader.where() + "column \"overridden\": expected 0 or 1");
    const std::string id(f[0]);
    if (!labels.entries.emplace(id, LabelEntry{*score, *label, f[3] == "1"}).second) {
      throw DataError(reader.where() + "duplicate image_id '" + id + "'");
    }
    sum += *score;
  }
  if (!labels.entries.empty()) labels.threshold = sum / static_cast<double>(labels.entries.size());
  return labels;
}

std::map<std::string, Action> load_overrides(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  csv::LineReader reader(in, path.string());
  auto header = reader.next();
  if (!header || *header != "image_id,label") throw DataError(reader.where() + "header must be 'image_id,label'");
  std::map<std::string, Action> overrides;
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != 2) throw DataError(reader.where() + "expected 2 columns");
    auto label = try_parse_action(f[1]);
    if (!label) throw DataError(reader.where() + "column \"label\": expected safe or unsafe");
    if (!overrides.emplace(std::string(f[0]), *label).second) throw DataError(reader.where() + "duplicate override");
  }
  return overrides;
}

}  // namespace streetsafe
