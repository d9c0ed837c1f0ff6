// Acceptance suite: each criterion prints one PASS/FAIL line with its
// measured quantities and wall time; the exit status is non-zero if any
// criterion fails or exceeds its time budget.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cli_runner.hpp"
#include "http_fixture.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "streetsafe/csv.hpp"
#include "streetsafe/evaluation.hpp"
#include "streetsafe/medirl.hpp"
#include "streetsafe/service.hpp"
#include "streetsafe/synthetic.hpp"
#include "streetsafe/trueskill.hpp"
#include "test_util.hpp"

using namespace streetsafe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

StateId sid(std::size_t s) { return StateId::unchecked(s); }

// R(s, safe) - R(s, unsafe) = sum_k u_k (1 - 2 b_k), split symmetrically.
LinearReward gap_reward(const std::array<double, kFeatureCount>& u) {
  std::array<std::array<double, kFeatureCount>, kActionCount> w{};
  double su = 0.0;
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    w[0][k] = -u[k];
    w[1][k] = u[k];
    su += u[k];
  }
  return LinearReward(w, {0.5 * su, -0.5 * su});
}

// 1. Reward-network backward against central differences.
Outcome gradient_exactness() {
  constexpr double h = 1e-6;
  double worst = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(derive_seed(1001, trial));
    auto p = init_params(rng.next());
    for (auto& L : p.net.layers) {
      for (auto& b : L.biases) b = rng.uniform(-0.5, 0.5);
    }
    const auto state = decode(sid(rng.below(kStateCount)));
    const std::array<double, 2> up = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto analytic = oracle::flatten(backward(p, state, up));
    const auto numeric = oracle::central_differences(
        p.net,
        [&](const MlpParams& net) {
          auto y = forward(RewardNetParams{net, 0}, state);
          return up[0] * y.values[0] + up[1] * y.values[1];
        },
        h);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      worst = std::max(worst, oracle::relative_error(analytic[i], numeric[i], 1e-4));
    }
  }
  return {worst < 1e-5, "max relative error " + fmt("%.3g", worst) + " over 100 triples"};
}

// 2. Perturbing one reward entry moves the objective by the analytic
// reward gradient.
Outcome maxent_stationarity() {
  constexpr double h = 1e-6;
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t inst = 0; inst < 50; ++inst) {
    Rng rng(derive_seed(2002, inst));
    RewardTable table{};
    for (auto& row : table) {
      for (auto& v : row) v = rng.uniform(-3, 3);
    }
    DemonstrationSet demos;
    const std::size_t n = 50 + rng.below(400);
    const std::size_t span = 8 + rng.below(kStateCount - 8);
    for (std::size_t i = 0; i < n; ++i) {
      demos.add({sid(rng.below(span)), rng.bernoulli(rng.uniform()) ? Action::kUnsafe : Action::kSafe});
    }
    const auto emp = empirical_policy(demos);
    const auto analytic = reward_gradient(emp.joint, emp.state_weight, maxent_policy(table));
    for (int probe = 0; probe < 20; ++probe) {
      const std::size_t s = rng.below(span);
      const std::size_t a = rng.below(2);
      auto up = table, down = table;
      up[s][a] += h;
      down[s][a] -= h;
      const double numeric = (log_likelihood(up, demos) - log_likelihood(down, demos)) / (2 * h);
      worst = std::max(worst, oracle::relative_error(analytic[s][a], numeric, 1e-4));
      ++checked;
    }
  }
  return {worst < 1e-5, "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(checked) +
                            " entries in 50 instances"};
}

// 3. Synthetic expert recovered through the command-line pipeline.
Outcome synthetic_recovery() {
  testutil::TempDir dir;
  const std::string d = dir.path().string();
  auto step = [&](std::vector<std::string> args) {
    args.push_back("--out");
    args.push_back(d);
    return testutil::run_cli(std::move(args)).code;
  };
  if (step({"synth-expert", "--states", "256", "--demos", "5000", "--seed", "7"}) != 0) return {false, "synth-expert failed"};
  if (step({"train-irl", "--demos", d + "/demonstrations.csv"}) != 0) return {false, "train-irl failed"};
  if (step({"evaluate", "--demos", d + "/demonstrations.csv", "--reward", d + "/reward_net.json", "--truth",
            d + "/truth_reward.json"}) != 0) {
    return {false, "evaluate failed"};
  }
  const auto lines = testutil::read_lines(dir / "recovery.csv");
  if (lines.size() != 3) return {false, "unexpected recovery.csv"};
  const auto fields = csv::split(lines[2]);
  const double mae = *csv::parse_double(fields[0]);
  const double lba = *csv::parse_double(fields[2]);

  // Independent check of the reported numbers from the raw artifacts.
  const auto demos = load_demonstrations(dir / "demonstrations.csv");
  const auto learned = maxent_policy(load_reward_params(dir / "reward_net.json"));
  const NetworkReward truth(load_reward_params(dir / "truth_reward.json"));
  const auto generator = maxent_policy(truth.table());
  double sum = 0.0;
  const auto visited = demos.visited_states();
  for (auto s : visited) sum += std::abs(learned(s, Action::kUnsafe) - generator(s, Action::kUnsafe));
  const double mae_check = sum / static_cast<double>(visited.size());
  const auto greedy = regenerate_greedy(truth, demos);
  const double lba_check = policy_agreement(learned, greedy);
  const bool consistent = std::abs(mae - mae_check) < 1e-12 && std::abs(lba - lba_check) < 1e-12;

  return {mae < 0.05 && lba >= 0.95 && consistent,
          "policy MAE " + fmt("%.4f", mae) + " on " + std::to_string(visited.size()) + " states, greedy LBA " +
              fmt("%.4f", lba) + (consistent ? "" : " (report disagrees with recomputation)")};
}

// 4. Under preferences that deviate from the hand-crafted expert reward,
// IRL + D3QN beats expert reward + D3QN.
Outcome irl_beats_expert() {
  ExpertRewardConfig expert;
  expert.weights = {1.0, 0.8, 0.6, 0.4, 0.7, 0.5, 0.3, 0.9};
  expert.consistency_bonus = 0.5;
  const ExpertReward expert_reward(expert);
  // Sky, fence and entropy act with the opposite sign from the expert's view.
  const auto truth = gap_reward({1.0, -0.8, 0.6, -0.4, 0.7, 0.5, -0.3, 0.9});
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(derive_seed(seed, 11));
    const auto demos = sample_demonstrations(truth, StateSampler::uniform(), 3000, rng, SamplingMode::kSoftmax);
    PipelineConfig pc;
    pc.irl.seed = seed;
    pc.solver.seed = seed;
    const double irl = run_pipeline(demos, pc).metrics.learned_behavior_accuracy;
    const double exp = run_solver(expert_reward, demos, pc).metrics.learned_behavior_accuracy;
    all = all && irl > exp;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " irl " + fmt("%.4f", irl) +
              " vs expert " + fmt("%.4f", exp);
  }
  return {all, detail};
}

// 5. D3QN matches the exact one-step optimum on states with a clear gap.
Outcome solver_correctness() {
  SyntheticExpertConfig sc;
  sc.demos = 1;
  const NetworkReward reward(make_synthetic_expert(sc).truth);
  const auto exact = exact_policy(reward);
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SingleStepEnv env(StateSampler::uniform(), reward, derive_seed(seed, 2));
    D3qnConfig cfg;
    cfg.seed = seed;
    const auto result = d3qn_train(env, cfg);
    int gapped = 0, agree = 0;
    for (std::size_t s = 0; s < kStateCount; ++s) {
      if (std::abs(exact.values[s][0] - exact.values[s][1]) <= 0.05) continue;
      ++gapped;
      agree += result.policy(sid(s)) == exact(sid(s)) ? 1 : 0;
    }
    const double rate = static_cast<double>(agree) / gapped;
    all = all && rate >= 0.99;
    detail += (seed ? "; " : "") + std::string("seed ") + std::to_string(seed) + " " + std::to_string(agree) + "/" +
              std::to_string(gapped);
  }
  return {all, detail};
}

double kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  std::int64_t concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double s = (x[i] - x[j]) * (y[i] - y[j]);
      if (s > 0) ++concordant;
      if (s < 0) ++discordant;
    }
  }
  const double pairs = static_cast<double>(x.size() * (x.size() - 1) / 2);
  return static_cast<double>(concordant - discordant) / pairs;
}

// 6. TrueSkill against a 50-digit evaluation, then ranking recovery from
// noisy annotators.
Outcome trueskill_oracle() {
  TrueSkillParams p;
  p.tau = 0.0;
  const auto [w, l] = update(init_rating(p), init_rating(p), p);
  const auto [ow, ol] = oracle::trueskill_update({p.mu0, p.sigma0}, {p.mu0, p.sigma0}, p.beta, 0);
  const double ew = std::abs(w.mu - ow.mu.convert_to<double>());
  const double el = std::abs(l.mu - ol.mu.convert_to<double>());
  const bool headline = std::abs(w.mu - 29.205) < 5e-4 && std::abs(l.mu - 20.795) < 5e-4;
  const bool exact = ew < 1e-6 && el < 1e-6;

  // Ranking recovery: annotators pick the truly better image with probability
  // 0.9 whatever the quality gap, and the service chooses the pairs.
  constexpr std::size_t kImages = 20;
  constexpr std::size_t kPerImage = 30;
  constexpr std::uint64_t kSeeds = 5;
  auto recover = [&](PairingStrategy pairing, std::uint64_t seed, std::int64_t& min_games, std::int64_t& max_games) {
    testutil::TempDir dir;
    ServiceConfig cfg;
    for (std::size_t i = 0; i < kImages; ++i) {
      const std::string id = "i" + std::to_string(i);
      testutil::write_file(dir / (id + ".png"), "x");
      cfg.images[id] = dir / (id + ".png");
    }
    cfg.log_path = dir / "comparisons.tsv";
    cfg.pairing = pairing;
    cfg.pairing_seed = derive_seed(seed, 60);
    AnnotationService svc(cfg);
    Rng rng(derive_seed(seed, 61));
    std::map<std::string, double> quality;
    for (const auto& [id, path] : cfg.images) quality[id] = rng.uniform();
    for (std::size_t k = 0; k < kImages * kPerImage / 2; ++k) {
      const PairAssignment pair = svc.get_pair();
      const bool left_better = quality[pair.left_id] > quality[pair.right_id];
      ChoiceSubmission choice;
      choice.pair_token = pair.pair_token;
      choice.chosen = left_better == rng.bernoulli(0.9) ? "left" : "right";
      svc.submit_choice(choice);
    }
    const RatingTable table = svc.ratings();
    std::vector<double> truth, mus;
    min_games = std::numeric_limits<std::int64_t>::max();
    max_games = 0;
    for (const auto& [id, q] : quality) {
      const PlayerRating* r = table.find(id);
      truth.push_back(q);
      mus.push_back(r ? r->mu : init_rating().mu);
      const std::int64_t g = r ? r->games : 0;
      min_games = std::min(min_games, g);
      max_games = std::max(max_games, g);
    }
    return kendall_tau(truth, mus);
  };

  bool ranking = true;
  double worst = 1.0, worst_balanced = 1.0;
  std::int64_t lo_games = std::numeric_limits<std::int64_t>::max(), hi_games = 0;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    std::int64_t lo = 0, hi = 0;
    const double tau = recover(PairingStrategy::kMatchQuality, seed, lo, hi);
    ranking = ranking && tau > 0.9 && lo == static_cast<std::int64_t>(kPerImage) &&
              hi == static_cast<std::int64_t>(kPerImage);
    worst = std::min(worst, tau);
    lo_games = std::min(lo_games, lo);
    hi_games = std::max(hi_games, hi);
    worst_balanced = std::min(worst_balanced, recover(PairingStrategy::kBalanced, seed, lo, hi));
  }

  return {headline && exact && ranking,
          "winner " + fmt("%.6f", w.mu) + " loser " + fmt("%.6f", l.mu) + " (oracle error " +
              fmt("%.2g", std::max(ew, el)) + "); match-quality pairing: min Kendall tau " + fmt("%.4f", worst) +
              " over " + std::to_string(kSeeds) + " seeds, games per image " + std::to_string(lo_games) + ".." +
              std::to_string(hi_games) + " (balanced pairing: " + fmt("%.4f", worst_balanced) + ")"};
}

// 7. F1 and AUC against brute-force references.
Outcome metrics_oracle() {
  int f1_mismatch = 0;
  double auc_worst = 0.0;
  for (std::uint64_t inst = 0; inst < 1000; ++inst) {
    Rng rng(derive_seed(7007, inst));
    const std::size_t n = 2 + rng.below(300);
    std::vector<bool> pred(n), label(n);
    std::vector<double> score(n);
    const double base = rng.uniform(0.05, 0.95);
    const bool coarse = rng.bernoulli(0.5);
    for (std::size_t i = 0; i < n; ++i) {
      label[i] = rng.bernoulli(base);
      pred[i] = rng.bernoulli(0.5) ? label[i] : rng.bernoulli(0.5);
      score[i] = coarse ? std::floor(rng.uniform(0, 8)) : rng.uniform();
    }
    label[0] = true;
    label[1] = false;
    std::unique_ptr<bool[]> p(new bool[n]), l(new bool[n]);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = pred[i];
      l[i] = label[i];
    }
    const std::span<const bool> ps(p.get(), n), ls(l.get(), n);
    if (f1_score(ps, ls).value != oracle::f1_bruteforce(pred, label)) ++f1_mismatch;
    auc_worst = std::max(auc_worst, std::abs(auc(score, ls) - oracle::auc_bruteforce(score, label)));
  }
  return {f1_mismatch == 0 && auc_worst <= 1e-12,
          std::to_string(f1_mismatch) + " F1 mismatches, max AUC error " + fmt("%.3g", auc_worst) + " over 1000 instances"};
}

// 8. The encoding is a bijection and reruns are byte-identical.
Outcome bijection_and_determinism() {
  bool bijective = true;
  std::set<std::size_t> images;
  for (std::size_t id = 0; id < kStateCount; ++id) {
    bijective = bijective && state_id(decode(sid(id))).value() == id;
    images.insert(state_id(decode(sid(id))).value());
  }
  bijective = bijective && images.size() == kStateCount;

  testutil::TempDir src, a, b;
  testutil::write_file(src / "features.csv", [] {
    std::ostringstream o;
    write_feature_table(o, testutil::random_table(522, 8008));
    return o.str();
  }());
  testutil::write_file(src / "demos.csv", [] {
    Rng rng(8009);
    DemonstrationSet d;
    for (int i = 0; i < 522; ++i) d.add({sid(rng.below(kStateCount)), rng.bernoulli(0.5) ? Action::kSafe : Action::kUnsafe});
    std::ostringstream o;
    write_demonstrations(o, d);
    return o.str();
  }());
  bool identical = true;
  for (const auto* out : {&a, &b}) {
    const std::string o = out->path().string();
    identical = identical &&
                testutil::run_cli({"encode", "--features", (src / "features.csv").string(), "--out", o}).code == 0 &&
                testutil::run_cli({"train-irl", "--demos", (src / "demos.csv").string(), "--epochs", "40", "--out", o})
                        .code == 0;
  }
  for (auto name : {"encoder.json", "states.csv", "reward_net.json", "irl_history.csv", "demonstrations.csv"}) {
    identical = identical && testutil::read_file(a / name) == testutil::read_file(b / name) &&
                !testutil::read_file(a / name).empty();
  }
  return {bijective && identical, std::string(bijective ? "bijective" : "NOT bijective") + ", reruns " +
                                      (identical ? "byte-identical" : "DIFFER")};
}

// 9. The ablation report's largest accuracy drop lands on the feature the
// expert weighs three times as much.
Outcome ablation_sensitivity() {
  const Feature designated[3] = {Feature::kGreenery, Feature::kCarCount, Feature::kWire};
  bool all = true;
  std::string detail;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    std::array<double, kFeatureCount> u;
    u.fill(1.0);
    u[bit_position(kDefaultFeatureOrder, designated[seed])] = 3.0;
    Rng rng(derive_seed(seed, 12));
    const auto demos = sample_demonstrations(gap_reward(u), StateSampler::uniform(), 3000, rng, SamplingMode::kSoftmax);
    PipelineConfig pc;
    pc.irl.seed = seed;
    pc.irl.max_epochs = 2000;
    pc.solver.seed = seed;
    pc.solver.episodes = 8000;
    const auto report = ablation_report(pc, demos);
    const double full = report.full().learned_behavior_accuracy;
    std::string argmax;
    double biggest = -1.0, runner_up = -1.0;
    for (std::size_t i = 1; i < report.rows.size(); ++i) {
      const double drop = full - report.rows[i].learned_behavior_accuracy;
      if (drop > biggest) {
        runner_up = biggest;
        biggest = drop;
        argmax = report.rows[i].setting;
      } else {
        runner_up = std::max(runner_up, drop);
      }
    }
    const std::string want = "minus_" + std::string(to_string(designated[seed]));
    all = all && argmax == want;
    detail += (seed ? "; " : "") + std::string(to_string(designated[seed])) + ": largest drop " + argmax + " " +
              fmt("%.4f", biggest) + " (next " + fmt("%.4f", runner_up) + ")";
  }
  return {all, detail};
}

// 10. Concurrent annotators over HTTP; the log is the source of truth.
Outcome service_under_load() {
  testutil::TempDir dir;
  ServiceConfig cfg;
  for (int i = 0; i < 30; ++i) {
    const std::string id = "img" + std::to_string(i);
    testutil::write_file(dir / (id + ".png"), "x");
    cfg.images[id] = dir / (id + ".png");
  }
  cfg.log_path = dir / "comparisons.tsv";
  cfg.pairing_seed = 10;
  AnnotationService service(cfg);
  testutil::LiveServer server(service);

  constexpr int kAnnotators = 50;
  constexpr int kEach = 40;
  std::atomic<int> accepted{0}, failures{0};
  std::vector<std::thread> threads;
  for (int a = 0; a < kAnnotators; ++a) {
    threads.emplace_back([&, a] {
      auto client = server.client();
      for (int k = 0; k < kEach; ++k) {
        auto pair = client.Get("/api/pair");
        if (!pair || pair->status != 200) {
          ++failures;
          continue;
        }
        const auto pj = nlohmann::json::parse(pair->body);
        nlohmann::json body{{"pair_token", pj["pair_token"]},
                            {"chosen", (a + k) % 3 ? "left" : "right"},
                            {"session", "annotator" + std::to_string(a) + "-" + std::to_string(k)}};
        auto res = client.Post("/api/choice", body.dump(), "application/json");
        if (res && res->status == 200) {
          ++accepted;
        } else {
          ++failures;
        }
      }
    });
  }
  for (auto& t : threads) t.join();

  const auto records = load_comparison_log(cfg.log_path);
  std::set<std::string> sessions;
  for (const auto& r : records) sessions.insert(r.session);
  const bool counts = accepted == kAnnotators * kEach && static_cast<int>(records.size()) == accepted &&
                      sessions.size() == records.size() && service.accepted_count() == accepted;
  const bool replay_equal = service.ratings() == replay_log(records);
  return {counts && replay_equal && failures == 0,
          std::to_string(accepted.load()) + " accepted, " + std::to_string(records.size()) + " log lines, " +
              std::to_string(sessions.size()) + " distinct, " + std::to_string(failures.load()) +
              " failed requests, live table " + (replay_equal ? "equals" : "DIFFERS FROM") + " replay"};
}

struct Criterion {
  int number;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient exactness", 5, gradient_exactness},
      {2, "maxent stationarity", 5, maxent_stationarity},
      {3, "synthetic expert recovery", 60, synthetic_recovery},
      {4, "IRL reward beats expert reward", 300, irl_beats_expert},
      {5, "one-step solver correctness", 120, solver_correctness},
      {6, "TrueSkill oracle and ranking recovery", 10, trueskill_oracle},
      {7, "metrics oracle equivalence", 5, metrics_oracle},
      {8, "encoder bijection and determinism", 1, bijection_and_determinism},
      {9, "ablation sensitivity", 300, ablation_sensitivity},
      {10, "service log is truth under load", 60, service_under_load},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("[%s] %2d %s: %s; %.2f s (budget %.0f s%s)\n", pass ? "PASS" : "FAIL", c.number, c.name,
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : ", EXCEEDED");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
