#include "cli.hpp"

#include <signal.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "streetsafe/bvcb.hpp"
#include "streetsafe/csv.hpp"
#include "streetsafe/evaluation.hpp"
#include "streetsafe/features.hpp"
#include "streetsafe/fingerprint.hpp"
#include "streetsafe/medirl.hpp"
#include "streetsafe/reward.hpp"
#include "streetsafe/rl.hpp"
#include "streetsafe/service.hpp"
#include "streetsafe/synthetic.hpp"
#include "streetsafe/trueskill.hpp"

namespace streetsafe::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kToolVersion = "0.1.0";

struct Stage {
  std::string name;
  CLI::App* app = nullptr;
  std::string out = "out";
  bool force = false;
  bool has_artifacts = true;
  std::function<std::vector<fs::path>()> outputs;
  std::function<void(const std::string& fingerprint)> body;
  std::vector<std::string*> inputs;  // file paths checked before the stage runs

  fs::path at(const std::string& file) const { return fs::path(out) / file; }
};

void write_artifact(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    auto f = csv::open_output(tmp);
    f << text;
    f.flush();
    if (!f) throw DataError(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

template <typename Fn>
void write_csv(const fs::path& path, Fn&& fn) {
  std::ostringstream ss;
  fn(ss);
  write_artifact(path, ss.str());
}

std::string read_text(const fs::path& path) {
  auto in = csv::open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::string> artifact_fingerprint(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return std::nullopt;
  if (path.extension() == ".json") {
    try {
      const json doc = json::parse(read_text(path));
      if (doc.contains("fingerprint") && doc["fingerprint"].is_string()) return doc["fingerprint"].get<std::string>();
    } catch (const json::exception&) {
    }
    return std::nullopt;
  }
  return csv::read_fingerprint_comment(path);
}

// FNV-1a over the canonical JSON of every resolved option plus the bytes of
// every input file it names.
std::string compute_fingerprint(const Stage& stage) {
  json doc;
  doc["tool"] = "streetsafe";
  doc["version"] = kToolVersion;
  doc["command"] = stage.name;
  json options = json::object();
  json files = json::object();
  for (const CLI::Option* opt : stage.app->get_options()) {
    const std::string name = opt->get_name();
    if (name == "--help" || name == "--out" || name == "--force" || name == "--config") continue;
    const std::vector<std::string> values = opt->count() > 0 ? opt->reduced_results()
                                                              : std::vector<std::string>{opt->get_default_str()};
    options[name] = values;
    for (const auto& v : values) {
      std::error_code ec;
      if (!v.empty() && fs::is_regular_file(v, ec)) files[v] = to_hex(hash_file(v));
    }
  }
  doc["options"] = options;
  doc["inputs"] = files;
  return to_hex(fnv1a(doc.dump()));
}

FeatureOrder parse_feature_order(const std::string& text) {
  if (text.empty()) return kDefaultFeatureOrder;
  const auto parts = csv::split(text);
  if (parts.size() != kFeatureCount) throw DataError("--feature-order needs all 8 feature names");
  FeatureOrder order{};
  for (std::size_t k = 0; k < kFeatureCount; ++k) order[k] = parse_feature(parts[k]);
  validate_feature_order(order);
  return order;
}

FeatureOrder order_from_encoder(const std::string& encoder_path) {
  return encoder_path.empty() ? kDefaultFeatureOrder : load_encoder_config(encoder_path).feature_order;
}

void add_common(CLI::App* app, Stage& stage) {
  app->add_option("--out", stage.out, "Output directory");
  app->add_flag("--force", stage.force, "Rerun even when outputs carry the same fingerprint");
}

CLI::Option* add_input(CLI::App* app, Stage& stage, const std::string& flag, std::string& target,
                       const std::string& help) {
  stage.inputs.push_back(&target);
  return app->add_option(flag, target, help);
}

void add_trueskill_options(CLI::App* app, TrueSkillParams& p) {
  app->add_option("--mu0", p.mu0, "Prior mean");
  app->add_option("--sigma0", p.sigma0, "Prior standard deviation");
  app->add_option("--beta", p.beta, "Performance noise");
  app->add_option("--tau", p.tau, "Dynamics noise added before each update");
}

void add_irl_options(CLI::App* app, TrainConfig& c, const std::string& prefix) {
  app->add_option("--" + prefix + "epochs", c.max_epochs, "Maximum full-batch epochs");
  app->add_option("--" + prefix + "tolerance", c.tolerance, "Stop when the gradient norm falls below this");
  app->add_option("--" + prefix + "lr", c.optimizer.learning_rate, "Learning rate");
  app->add_flag("--" + prefix + "plain-gradient", c.optimizer.plain_gradient, "Plain gradient ascent instead of Adam");
  app->add_option("--" + prefix + "log-every", c.log_every, "Progress interval in epochs");
}

void add_solver_options(CLI::App* app, D3qnConfig& c, bool& uniform, const std::string& prefix) {
  app->add_option("--episodes", c.episodes, "Episode budget");
  app->add_option("--epsilon-start", c.epsilon_start, "Initial exploration rate");
  app->add_option("--epsilon-end", c.epsilon_end, "Final exploration rate");
  app->add_option("--epsilon-decay", c.epsilon_decay_fraction, "Fraction of the budget spent decaying epsilon");
  app->add_option("--buffer", c.buffer_capacity, "Replay capacity");
  app->add_option("--batch", c.batch_size, "Minibatch size");
  app->add_option("--sync-period", c.target_sync_period, "Gradient steps between target syncs");
  app->add_option("--" + prefix + "lr", c.learning_rate, "Q-network learning rate");
  app->add_option("--gamma", c.gamma, "Discount (unused by one-step episodes)");
  app->add_option("--eval-every", c.eval_every, "Episodes between policy evaluations");
  app->add_flag("--uniform", uniform, "Sample start states uniformly instead of from the demonstrations");
}

std::map<std::string, std::size_t> state_index(const StateAssignments& states) {
  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < states.size(); ++i) idx[states[i].first] = i;
  return idx;
}

// Single-reward selection for subcommands that accept --reward or --expert.
std::unique_ptr<RewardSource> load_reward(const std::string& reward_path, const std::string& expert_path,
                                          const FeatureOrder& order) {
  if (!reward_path.empty() == !expert_path.empty()) throw CLI::ValidationError("exactly one of --reward or --expert is required");
  if (!reward_path.empty()) return std::make_unique<NetworkReward>(load_reward_params(reward_path));
  return std::make_unique<ExpertReward>(load_expert_reward(expert_path, order));
}

struct IngestOptions {
  std::string manifest, class_map, features;
  bool skip_malformed = false;
};

FeatureTable ingest_manifest(const fs::path& manifest, const ClassMapping& mapping, std::ostream& log) {
  auto in = csv::open_input(manifest);
  csv::LineReader reader(in, manifest.string());
  auto header = reader.next();
  const std::string base = "image_id,segmap,histogram,wire,car_count";
  if (!header || (*header != base && *header != base + ",lat,lon")) {
    throw DataError(reader.where() + "header must be '" + base + "' optionally followed by ',lat,lon'");
  }
  FeatureTable table;
  table.has_geo = *header != base;
  const fs::path dir = manifest.parent_path();
  while (auto line = reader.next()) {
    if (line->empty()) continue;
    const auto f = csv::split(*line);
    if (f.size() != (table.has_geo ? 7u : 5u)) throw DataError(reader.where() + "wrong number of columns");
    const std::string where = reader.where();
    FeatureRow row;
    row.image_id = std::string(f[0]);
    if (row.image_id.empty()) throw DataError(where + "column \"image_id\": empty");
    if (table.find(row.image_id)) throw DataError(where + "duplicate image_id '" + row.image_id + "'");
    const auto wire = csv::parse_int(f[3]);
    if (!wire || (*wire != 0 && *wire != 1)) throw DataError(where + "column \"wire\": expected 0 or 1");
    const auto cars = csv::parse_int(f[4]);
    if (!cars || *cars < 0) throw DataError(where + "column \"car_count\": expected a non-negative integer");
    const auto map = load_segmentation_map(dir / std::string(f[1]));
    const auto hist = load_histogram(dir / std::string(f[2]));
    row.features = assemble_features(cover_ratios(map, mapping), *wire == 1, compute_visual_entropy(hist), *cars);
    if (table.has_geo) {
      const auto lat = csv::parse_double(f[5]);
      const auto lon = csv::parse_double(f[6]);
      if (!lat || !lon) throw DataError(where + "columns \"lat\",\"lon\": expected numbers");
      row.geo = GeoPoint{*lat, *lon};
    }
    try {
      validate(row.features);
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    table.rows.push_back(std::move(row));
  }
  log << "ingested " << table.size() << " images from " << manifest.string() << "\n";
  return table;
}

void install_stop_thread(HttpServer& server, std::thread& waiter) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  waiter = std::thread([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& log, std::ostream& err) {
  CLI::App app("Street-level safety perception pipeline", "streetsafe");
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Configuration file (TOML/INI; one [section] per subcommand)");
  app.set_version_flag("--version", kToolVersion);
  app.fallthrough();
  app.require_subcommand(1);

  std::list<Stage> stages;
  auto stage = [&](const std::string& name, const std::string& help) -> Stage& {
    Stage& s = stages.emplace_back();
    s.name = name;
    s.app = app.add_subcommand(name, help);
    add_common(s.app, s);
    return s;
  };

  // ingest
  IngestOptions ing;
  {
    Stage& s = stage("ingest", "Build a validated feature table from segmentation maps, or canonicalize one");
    add_input(s.app, s, "--manifest", ing.manifest, "CSV: image_id,segmap,histogram,wire,car_count[,lat,lon]");
    add_input(s.app, s, "--class-map", ing.class_map, "JSON mapping feature names to segmentation class ids");
    add_input(s.app, s, "--features", ing.features, "Existing feature table to validate");
    s.app->add_flag("--skip-malformed", ing.skip_malformed, "Drop and report malformed feature rows");
    s.outputs = [&s] { return std::vector<fs::path>{s.at("features.csv")}; };
    s.body = [&s, &ing, &log](const std::string& fp) {
      FeatureTable table;
      if (!ing.manifest.empty()) {
        if (ing.class_map.empty()) throw CLI::ValidationError("--manifest needs --class-map");
        table = ingest_manifest(ing.manifest, ClassMapping::load(ing.class_map), log);
      } else if (!ing.features.empty()) {
        LoadReport report;
        table = load_feature_table(ing.features, {ing.skip_malformed}, &report);
        for (const auto& msg : report.skipped) log << "skipped: " << msg << "\n";
      } else {
        throw CLI::ValidationError("give --manifest or --features");
      }
      if (table.empty()) throw DataError("no valid feature rows");
      write_csv(s.at("features.csv"), [&](std::ostream& o) { write_feature_table(o, table, fp); });
      log << "wrote " << s.at("features.csv").string() << " (" << table.size() << " rows)\n";
    };
  }

  // encode
  struct {
    std::string features, polarity, encoder, order;
  } enc;
  {
    Stage& s = stage("encode", "Threshold features at their means and assign one of 256 states per image");
    add_input(s.app, s, "--features", enc.features, "Feature table")->required();
    add_input(s.app, s, "--polarity", enc.polarity, "JSON polarity overrides: {feature: high_safe|high_unsafe}");
    add_input(s.app, s, "--encoder", enc.encoder, "Reuse thresholds from an existing encoder file");
    s.app->add_option("--feature-order", enc.order, "Comma-separated bit order (default greenery,...,car_count)");
    s.outputs = [&s] { return std::vector<fs::path>{s.at("encoder.json"), s.at("states.csv")}; };
    s.body = [&s, &enc, &log](const std::string& fp) {
      const FeatureTable table = load_feature_table(enc.features);
      EncoderConfig config;
      if (!enc.encoder.empty()) {
        config = load_encoder_config(enc.encoder);
      } else {
        Polarity polarity = default_polarity();
        if (!enc.polarity.empty()) polarity = parse_polarity_overrides(read_text(enc.polarity), polarity);
        config = fit_thresholds(table, polarity, parse_feature_order(enc.order));
      }
      StateAssignments states;
      for (const auto& row : table.rows) states.emplace_back(row.image_id, state_id(encode(row.features, config)));
      write_artifact(s.at("encoder.json"), serialize(config, fp));
      write_csv(s.at("states.csv"), [&](std::ostream& o) { write_states(o, states, fp); });
      log << "encoded " << states.size() << " images\n";
    };
  }

  // rate
  struct {
    std::string log_path;
    TrueSkillParams params;
  } rate;
  {
    Stage& s = stage("rate", "Replay a pairwise comparison log into TrueSkill ratings");
    add_input(s.app, s, "--log", rate.log_path, "Tab-separated comparison log")->required();
    add_trueskill_options(s.app, rate.params);
    s.outputs = [&s] { return std::vector<fs::path>{s.at("ratings.csv")}; };
    s.body = [&s, &rate, &log](const std::string& fp) {
      rate.params.validate();
      const auto records = load_comparison_log(rate.log_path);
      const RatingTable table = replay_log(records, rate.params);
      write_csv(s.at("ratings.csv"), [&](std::ostream& o) { write_ratings(o, table, fp); });
      log << "rated " << table.size() << " images from " << records.size() << " comparisons\n";
    };
  }

  // label
  struct {
    std::string ratings, overrides, mode = "mean";
  } lab;
  {
    Stage& s = stage("label", "Normalize ratings to [0,1] and threshold them at the mean into safe/unsafe labels");
    add_input(s.app, s, "--ratings", lab.ratings, "Ratings table")->required();
    add_input(s.app, s, "--overrides", lab.overrides, "CSV image_id,label of expert overrides");
    s.app->add_option("--score-mode", lab.mode, "mean (mu) or conservative (mu - 3 sigma)")
        ->check(CLI::IsMember({"mean", "conservative"}));
    s.outputs = [&s] { return std::vector<fs::path>{s.at("labels.csv")}; };
    s.body = [&s, &lab, &log](const std::string& fp) {
      const RatingTable table = load_ratings(lab.ratings);
      const auto scores = normalize_scores(table, lab.mode == "mean" ? ScoreMode::kMean : ScoreMode::kConservative);
      const auto overrides = lab.overrides.empty() ? std::map<std::string, Action>{} : load_overrides(lab.overrides);
      const LabelSet labels = derive_labels(scores, overrides);
      write_csv(s.at("labels.csv"), [&](std::ostream& o) { write_labels(o, labels, fp); });
      log << "labelled " << labels.entries.size() << " images (threshold " << labels.threshold << ")\n";
    };
  }

  // train-irl
  struct {
    std::string demos, states, labels, ratings;
    TrainConfig config;
  } irl;
  {
    Stage& s = stage("train-irl", "Fit the reward network to demonstrations by maximum-entropy IRL");
    add_input(s.app, s, "--demos", irl.demos, "Demonstrations (state_id,action)");
    add_input(s.app, s, "--states", irl.states, "State file from encode (with --labels)");
    add_input(s.app, s, "--labels", irl.labels, "Label file from label (with --states)");
    add_input(s.app, s, "--replicate-ratings", irl.ratings, "Repeat each image once per comparison it took part in");
    add_irl_options(s.app, irl.config, "");
    s.app->add_option("--seed", irl.config.seed, "Network initialization seed");
    s.outputs = [&s] {
      return std::vector<fs::path>{s.at("reward_net.json"), s.at("irl_history.csv"), s.at("demonstrations.csv")};
    };
    s.body = [&s, &irl, &log](const std::string& fp) {
      DemonstrationSet demos;
      if (!irl.demos.empty()) {
        demos = load_demonstrations(irl.demos);
      } else if (!irl.states.empty() && !irl.labels.empty()) {
        std::optional<RatingTable> ratings;
        if (!irl.ratings.empty()) ratings = load_ratings(irl.ratings);
        demos = demonstrations_from_labels(load_states(irl.states), load_labels(irl.labels), ratings ? &*ratings : nullptr);
      } else {
        throw CLI::ValidationError("give --demos, or --states with --labels");
      }
      if (demos.empty()) throw DataError("no demonstrations to train on");
      const TrainResult result = train(demos, irl.config, [&log](const EpochRecord& r) {
        log << "epoch " << r.epoch << " log_likelihood=" << r.log_likelihood << " grad_norm=" << r.grad_norm
            << " agreement=" << r.agreement << "\n";
      });
      write_artifact(s.at("reward_net.json"), serialize(result.params, irl.config.optimizer, fp));
      write_csv(s.at("irl_history.csv"), [&](std::ostream& o) { write_history(o, result.history, fp); });
      write_csv(s.at("demonstrations.csv"), [&](std::ostream& o) { write_demonstrations(o, demos, fp); });
      const auto& last = result.history.back();
      log << (result.converged ? "converged" : "stopped") << " after " << last.epoch
          << " epochs, log_likelihood=" << last.log_likelihood << "\n";
    };
  }

  // solve-rl
  struct {
    std::string reward, expert, demos, expert_eval, encoder;
    D3qnConfig config;
    bool uniform = false;
  } sol;
  {
    Stage& s = stage("solve-rl", "Train a dueling double DQN under a reward and export its greedy policy");
    add_input(s.app, s, "--reward", sol.reward, "Reward network from train-irl");
    add_input(s.app, s, "--expert", sol.expert, "Hand-crafted expert reward JSON");
    add_input(s.app, s, "--demos", sol.demos, "Demonstrations defining the start-state distribution");
    add_input(s.app, s, "--expert-eval", sol.expert_eval, "Expert reward used to score the policy during training");
    add_input(s.app, s, "--encoder", sol.encoder, "Encoder file supplying the feature order");
    add_solver_options(s.app, sol.config, sol.uniform, "");
    s.app->add_option("--seed", sol.config.seed, "Solver seed");
    s.outputs = [&s, &sol] {
      std::vector<fs::path> out{s.at("policy.csv"), s.at("rl_trace.csv")};
      if (!sol.expert_eval.empty()) out.push_back(s.at("expert_curve.csv"));
      return out;
    };
    s.body = [&s, &sol, &log](const std::string& fp) {
      const FeatureOrder order = order_from_encoder(sol.encoder);
      const auto reward = load_reward(sol.reward, sol.expert, order);
      StateSampler sampler = StateSampler::uniform();
      if (!sol.uniform) {
        if (sol.demos.empty()) throw CLI::ValidationError("solve-rl needs --demos unless --uniform is set");
        sampler = StateSampler::empirical(load_demonstrations(sol.demos));
      }
      std::optional<ExpertRewardConfig> eval_cfg;
      if (!sol.expert_eval.empty()) eval_cfg = load_expert_reward(sol.expert_eval, order);
      std::vector<StateId> all;
      for (std::size_t i = 0; i < kStateCount; ++i) all.push_back(StateId::unchecked(i));
      std::vector<std::pair<int, double>> curve;
      SingleStepEnv env(sampler, *reward, derive_seed(sol.config.seed, 2));
      const D3qnResult result = d3qn_train(env, sol.config, [&](int episode, const GreedyPolicy& p) {
        if (eval_cfg) curve.emplace_back(episode, total_expert_reward(p, *eval_cfg, all));
      });
      write_csv(s.at("policy.csv"), [&](std::ostream& o) { write_policy(o, result.policy, fp); });
      write_csv(s.at("rl_trace.csv"), [&](std::ostream& o) { write_trace(o, result.trace, fp); });
      if (eval_cfg) {
        write_csv(s.at("expert_curve.csv"), [&](std::ostream& o) {
          o << csv::fingerprint_comment(fp) << "episode,total_expert_reward\n";
          for (const auto& [ep, total] : curve) o << ep << ',' << csv::format_double(total) << '\n';
        });
      }
      const GreedyPolicy exact = exact_policy(*reward);
      std::size_t agree = 0;
      for (std::size_t i = 0; i < kStateCount; ++i) agree += exact.actions[i] == result.policy.actions[i] ? 1 : 0;
      log << "solver policy agrees with the exact one-step optimum on " << agree << "/256 states\n";
    };
  }

  // evaluate
  struct {
    std::string policy, demos, reward, expert, truth, encoder, setting = "full";
  } ev;
  {
    Stage& s = stage("evaluate", "Score a policy against demonstrations (F1, AUC, learned behavior accuracy)");
    add_input(s.app, s, "--policy", ev.policy, "Policy from solve-rl (default: greedy policy of the reward)");
    add_input(s.app, s, "--demos", ev.demos, "Demonstrations")->required();
    add_input(s.app, s, "--reward", ev.reward, "Reward network supplying AUC scores");
    add_input(s.app, s, "--expert", ev.expert, "Expert reward supplying AUC scores");
    add_input(s.app, s, "--truth", ev.truth, "Ground-truth reward network for synthetic-recovery metrics");
    add_input(s.app, s, "--encoder", ev.encoder, "Encoder file supplying the feature order");
    s.app->add_option("--setting", ev.setting, "Row label in the report");
    s.outputs = [&s, &ev] {
      std::vector<fs::path> out{s.at("metrics.csv")};
      if (!ev.truth.empty()) out.push_back(s.at("recovery.csv"));
      return out;
    };
    s.body = [&s, &ev, &log](const std::string& fp) {
      const auto reward = load_reward(ev.reward, ev.expert, order_from_encoder(ev.encoder));
      const DemonstrationSet demos = load_demonstrations(ev.demos);
      const GreedyPolicy policy = ev.policy.empty() ? exact_policy(*reward) : load_policy(ev.policy);
      MetricsReport m = evaluate(policy, *reward, demos);
      m.setting = ev.setting;
      m.fingerprint = fp;
      const MetricsReport rows[] = {m};
      write_csv(s.at("metrics.csv"), [&](std::ostream& o) {
        o << csv::fingerprint_comment(fp);
        write_metrics(o, rows);
      });
      log << "f1=" << m.f1 << (m.f1_degenerate ? " (degenerate)" : "") << " auc="
          << (m.auc ? std::to_string(*m.auc) : std::string("n/a")) << " learned_behavior_accuracy="
          << m.learned_behavior_accuracy << " n=" << m.n_items << "\n";
      if (!ev.truth.empty()) {
        const NetworkReward truth(load_reward_params(ev.truth));
        const PolicyTable learned = maxent_policy(tabulate(*reward));
        const PolicyTable target = maxent_policy(truth.table());
        const EmpiricalPolicy empirical = empirical_policy(demos);
        double mae = 0.0, mae_empirical = 0.0;
        const auto visited = demos.visited_states();
        for (StateId st : visited) {
          mae += std::abs(learned(st, Action::kUnsafe) - target(st, Action::kUnsafe));
          mae_empirical += std::abs(learned(st, Action::kUnsafe) - empirical.conditional(st, Action::kUnsafe));
        }
        mae /= static_cast<double>(visited.size());
        mae_empirical /= static_cast<double>(visited.size());
        const double greedy_lba = learned_behavior_accuracy(policy, regenerate_greedy(truth, demos));
        write_csv(s.at("recovery.csv"), [&](std::ostream& o) {
          o << csv::fingerprint_comment(fp) << "policy_mae,policy_mae_empirical,greedy_learned_behavior_accuracy,visited_states\n"
            << csv::format_double(mae) << ',' << csv::format_double(mae_empirical) << ',' << csv::format_double(greedy_lba)
            << ',' << visited.size() << '\n';
        });
        log << "policy_mae=" << mae << " (empirical " << mae_empirical << ") greedy_learned_behavior_accuracy="
            << greedy_lba << "\n";
      }
    };
  }

  // ablate
  struct {
    std::string demos, expert, encoder, features;
    PipelineConfig config;
    std::uint64_t seed = 0;
  } abl;
  {
    Stage& s = stage("ablate", "Retrain with each feature bit zeroed and report the metric changes");
    add_input(s.app, s, "--demos", abl.demos, "Demonstrations")->required();
    add_input(s.app, s, "--expert", abl.expert, "Also report D3QN under this expert reward");
    add_input(s.app, s, "--encoder", abl.encoder, "Encoder file supplying the feature order");
    s.app->add_option("--features", abl.features, "Comma-separated subset of features to ablate (default all)");
    add_irl_options(s.app, abl.config.irl, "irl-");
    add_solver_options(s.app, abl.config.solver, abl.config.uniform_sampler, "rl-");
    s.app->add_option("--seed", abl.seed, "Seed shared by every row");
    s.outputs = [&s] { return std::vector<fs::path>{s.at("ablation.csv")}; };
    s.body = [&s, &abl, &log](const std::string& fp) {
      const FeatureOrder order = order_from_encoder(abl.encoder);
      const DemonstrationSet demos = load_demonstrations(abl.demos);
      abl.config.irl.seed = abl.seed;
      abl.config.solver.seed = abl.seed;
      std::vector<Feature> features(order.begin(), order.end());
      if (!abl.features.empty()) {
        features.clear();
        for (auto name : csv::split(abl.features)) features.push_back(parse_feature(name));
      }
      std::vector<MetricsReport> rows;
      rows.push_back(run_pipeline(demos, abl.config).metrics);
      rows.back().setting = "full";
      log << "full learned_behavior_accuracy=" << rows.back().learned_behavior_accuracy << "\n";
      if (!abl.expert.empty()) {
        const ExpertReward expert(load_expert_reward(abl.expert, order));
        rows.push_back(run_solver(expert, demos, abl.config).metrics);
        rows.back().setting = "expert_reward";
        log << "expert_reward learned_behavior_accuracy=" << rows.back().learned_behavior_accuracy << "\n";
      }
      for (Feature f : features) {
        rows.push_back(ablate(f, abl.config, demos, order));
        log << rows.back().setting << " learned_behavior_accuracy=" << rows.back().learned_behavior_accuracy << "\n";
      }
      for (auto& r : rows) r.fingerprint = fp;
      write_csv(s.at("ablation.csv"), [&](std::ostream& o) {
        o << csv::fingerprint_comment(fp);
        write_metrics(o, rows);
      });
    };
  }

  // attribute
  struct {
    std::string reward, expert, states, image, action = "safe", encoder;
    int state = -1;
  } att;
  {
    Stage& s = stage("attribute", "Per-feature reward contributions for one image under IRL and/or expert rewards");
    add_input(s.app, s, "--reward", att.reward, "Reward network");
    add_input(s.app, s, "--expert", att.expert, "Expert reward JSON");
    add_input(s.app, s, "--states", att.states, "State file (with --image)");
    add_input(s.app, s, "--encoder", att.encoder, "Encoder file supplying the feature order");
    s.app->add_option("--image", att.image, "Image id to look up in --states");
    s.app->add_option("--state", att.state, "State id in [0,255] (instead of --image)");
    s.app->add_option("--action", att.action, "Action to attribute")->check(CLI::IsMember({"safe", "unsafe"}));
    s.outputs = [&s] { return std::vector<fs::path>{s.at("attribution.csv")}; };
    s.body = [&s, &att](const std::string& fp) {
      const FeatureOrder order = order_from_encoder(att.encoder);
      std::string label;
      StateId state;
      if (att.state >= 0) {
        state = StateId::from_int(att.state);
        label = att.image.empty() ? "state_" + std::to_string(att.state) : att.image;
      } else if (!att.image.empty() && !att.states.empty()) {
        const auto states = load_states(att.states);
        const auto idx = state_index(states);
        auto it = idx.find(att.image);
        if (it == idx.end()) throw DataError(att.states + ": image '" + att.image + "' not found");
        state = states[it->second].second;
        label = att.image;
      } else {
        throw CLI::ValidationError("give --state, or --image with --states");
      }
      std::vector<AttributionReport> reports;
      const Action action = parse_action(att.action);
      if (!att.reward.empty()) reports.push_back(attribute(NetworkReward(load_reward_params(att.reward)), state, action, order));
      if (!att.expert.empty()) reports.push_back(attribute(ExpertReward(load_expert_reward(att.expert, order)), state, action, order));
      if (reports.empty()) throw CLI::ValidationError("give --reward and/or --expert");
      write_csv(s.at("attribution.csv"), [&](std::ostream& o) {
        o << csv::fingerprint_comment(fp);
        write_attributions(o, label, reports, fp);
      });
    };
  }

  // serve
  struct {
    std::string images, log_path, listen = "127.0.0.1:8080", pairing = "balanced";
    std::int64_t ttl = 1800;
    bool hide_scores = false;
    std::uint64_t seed = 0;
  } srv;
  {
    Stage& s = stage("serve", "Run the annotation HTTP service");
    s.has_artifacts = false;
    s.app->add_option("--images", srv.images, "Directory of images to compare")->envname("STREETSAFE_IMAGES")->required();
    s.app->add_option("--log", srv.log_path, "Append-only comparison log")->envname("STREETSAFE_LOG")->required();
    s.app->add_option("--listen", srv.listen, "host:port")->envname("STREETSAFE_LISTEN");
    s.app->add_option("--pairing", srv.pairing, "Pair selection: balanced, uniform or match-quality")
        ->envname("STREETSAFE_PAIRING")
        ->check(CLI::IsMember({"balanced", "uniform", "match-quality"}));
    s.app->add_option("--ttl", srv.ttl, "Pair token lifetime in seconds")->envname("STREETSAFE_TOKEN_TTL");
    s.app->add_flag("--hide-scores", srv.hide_scores, "Omit scores from choice acknowledgements");
    s.app->add_option("--seed", srv.seed, "Pairing seed");
    s.body = [&srv, &log](const std::string&) {
      const auto colon = srv.listen.rfind(':');
      if (colon == std::string::npos) throw CLI::ValidationError("--listen must be host:port");
      const std::string host = srv.listen.substr(0, colon);
      const auto port = csv::parse_int(srv.listen.substr(colon + 1));
      if (!port || *port <= 0 || *port > 65535) throw CLI::ValidationError("--listen port must lie in [1,65535]");
      ServiceConfig config;
      config.images = scan_image_directory(srv.images);
      config.log_path = srv.log_path;
      config.pairing = parse_pairing_strategy(srv.pairing);
      config.token_ttl_seconds = srv.ttl;
      config.show_scores = !srv.hide_scores;
      config.pairing_seed = srv.seed;
      AnnotationService service(std::move(config));
      HttpServer server(service);
      if (!server.bind(host, static_cast<int>(*port))) throw DataError("cannot listen on " + srv.listen);
      std::thread waiter;
      install_stop_thread(server, waiter);
      log << "serving " << service.config().images.size() << " images on http://" << srv.listen << "\n" << std::flush;
      server.listen_after_bind();
      waiter.join();
    };
  }

  // synth-expert
  SyntheticExpertConfig syn;
  {
    Stage& s = stage("synth-expert", "Generate a ground-truth reward network and demonstrations sampled from it");
    s.app->add_option("--states", syn.states, "Number of distinct states in the support");
    s.app->add_option("--demos", syn.demos, "Number of demonstrations");
    s.app->add_option("--seed", syn.seed, "Seed for the network and the sampling");
    s.app->add_option("--sharpness", syn.sharpness, "Root-mean-square reward gap of the ground truth");
    s.outputs = [&s] {
      return std::vector<fs::path>{s.at("truth_reward.json"), s.at("demonstrations.csv"), s.at("greedy_demonstrations.csv")};
    };
    s.body = [&s, &syn, &log](const std::string& fp) {
      const SyntheticExpert ex = make_synthetic_expert(syn);
      write_artifact(s.at("truth_reward.json"), serialize(ex.truth, std::nullopt, fp));
      write_csv(s.at("demonstrations.csv"), [&](std::ostream& o) { write_demonstrations(o, ex.softmax_demos, fp); });
      write_csv(s.at("greedy_demonstrations.csv"), [&](std::ostream& o) { write_demonstrations(o, ex.greedy_demos, fp); });
      log << "sampled " << ex.softmax_demos.size() << " demonstrations over " << ex.support.size() << " states\n";
    };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, log, err);
      return kOk;
    }
    app.exit(e, log, err);
    return kUsage;
  }

  Stage* chosen = nullptr;
  for (auto& s : stages) {
    if (s.app->parsed()) chosen = &s;
  }
  if (!chosen) return kUsage;

  try {
    for (const std::string* path : chosen->inputs) {
      std::error_code ec;
      if (!path->empty() && !fs::is_regular_file(*path, ec)) throw DataError(*path + ": no such file");
    }
    std::string fp;
    if (chosen->has_artifacts) {
      fp = compute_fingerprint(*chosen);
      const auto outputs = chosen->outputs();
      const bool up_to_date = std::all_of(outputs.begin(), outputs.end(), [&](const fs::path& p) {
        const auto have = artifact_fingerprint(p);
        return have && *have == fp;
      });
      if (up_to_date && !chosen->force) {
        log << chosen->name << ": outputs already carry fingerprint " << fp << "; nothing to do (use --force)\n";
        return kOk;
      }
      fs::create_directories(chosen->out);
    }
    chosen->body(fp);
    return kOk;
  } catch (const CLI::ValidationError& e) {
    err << "streetsafe " << chosen->name << ": " << e.what() << "\n";
    return kUsage;
  } catch (const NumericalError& e) {
    err << "streetsafe " << chosen->name << ": numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DataError& e) {
    err << "streetsafe " << chosen->name << ": " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "streetsafe " << chosen->name << ": " << e.what() << "\n";
    return kData;
  }
}

}  // namespace streetsafe::cli
