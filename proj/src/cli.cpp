#include "coevolve/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "coevolve/errors.hpp"
#include "coevolve/predictor.hpp"

namespace coevolve::cli {

namespace {

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key)) {
    if (j.at(key).is_null()) {
      out.reset();
    } else {
      out = j.at(key).get<T>();
    }
  }
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

void check_known_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                      const std::string& section) {
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : keys) known = known || key == k;
    if (!known) throw ConfigError("unknown key '" + key + "' in " + section);
  }
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["events"] = events.string();
  j["checkpoint"] = checkpoint.string();
  j["m"] = optional_json(num_users);
  j["n"] = optional_json(num_items);
  j["split"] = optional_json(split);
  j["proportions"] = proportions;

  auto& s = j["simulate"];
  s["m"] = simulate.num_users;
  s["n"] = simulate.num_items;
  s["k"] = simulate.k;
  s["d"] = simulate.context_dim;
  s["context"] = std::string(to_string(simulate.context_mode));
  s["activation"] = std::string(to_string(simulate.activation));
  s["param_scale"] = simulate.param_scale;
  s["T"] = simulate.horizon;
  s["max_events"] = simulate.max_events;

  auto& t = j["train"];
  t["window"] = train.window_size;
  t["nce_samples"] = optional_json(train.nce_samples);
  t["full_survival"] = train.full_survival;
  t["scale_survival"] = train.scale_survival;
  t["lr"] = train.learning_rate;
  t["clip_norm"] = train.clip_norm;
  t["epochs"] = train.epochs;
  t["k"] = train.k;
  t["activation"] = std::string(to_string(train.activation));
  t["init_scale"] = train.init_scale;

  auto& e = j["evaluate"];
  e["bins"] = evaluate.time_bins;
  e["predict_time"] = evaluate.predict_time;
  e["details"] = evaluate.keep_details;

  auto& p = j["predict"];
  p["user"] = predict.user;
  p["time"] = predict.time;
  p["top"] = predict.top;
  p["item"] = optional_json(predict.item);
  return j;
}

void apply_config_json(RunConfig& cfg, const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw ConfigError("config root must be an object");
    check_known_keys(j, {"command", "seed", "output_dir", "events", "checkpoint", "m", "n",
                         "split", "proportions", "simulate", "train", "evaluate", "predict"},
                     "config");
    read_if(j, "command", cfg.command);
    read_if(j, "seed", cfg.seed);
    if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("events")) cfg.events = j.at("events").get<std::string>();
    if (j.contains("checkpoint")) cfg.checkpoint = j.at("checkpoint").get<std::string>();
    read_if(j, "m", cfg.num_users);
    read_if(j, "n", cfg.num_items);
    read_if(j, "split", cfg.split);
    read_if(j, "proportions", cfg.proportions);

    if (j.contains("simulate")) {
      const auto& s = j.at("simulate");
      check_known_keys(s, {"m", "n", "k", "d", "context", "activation", "param_scale", "T",
                           "max_events"},
                       "simulate");
      read_if(s, "m", cfg.simulate.num_users);
      read_if(s, "n", cfg.simulate.num_items);
      read_if(s, "k", cfg.simulate.k);
      read_if(s, "d", cfg.simulate.context_dim);
      if (s.contains("context"))
        cfg.simulate.context_mode = context_mode_from_string(s.at("context").get<std::string>());
      if (s.contains("activation"))
        cfg.simulate.activation = activation_from_string(s.at("activation").get<std::string>());
      read_if(s, "param_scale", cfg.simulate.param_scale);
      read_if(s, "T", cfg.simulate.horizon);
      read_if(s, "max_events", cfg.simulate.max_events);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_known_keys(t, {"window", "nce_samples", "full_survival", "scale_survival", "lr",
                           "clip_norm", "epochs", "k", "activation", "init_scale"},
                       "train");
      read_if(t, "window", cfg.train.window_size);
      read_if(t, "nce_samples", cfg.train.nce_samples);
      read_if(t, "full_survival", cfg.train.full_survival);
      read_if(t, "scale_survival", cfg.train.scale_survival);
      read_if(t, "lr", cfg.train.learning_rate);
      read_if(t, "clip_norm", cfg.train.clip_norm);
      read_if(t, "epochs", cfg.train.epochs);
      read_if(t, "k", cfg.train.k);
      if (t.contains("activation"))
        cfg.train.activation = activation_from_string(t.at("activation").get<std::string>());
      read_if(t, "init_scale", cfg.train.init_scale);
    }
    if (j.contains("evaluate")) {
      const auto& e = j.at("evaluate");
      check_known_keys(e, {"bins", "predict_time", "details"}, "evaluate");
      read_if(e, "bins", cfg.evaluate.time_bins);
      read_if(e, "predict_time", cfg.evaluate.predict_time);
      read_if(e, "details", cfg.evaluate.keep_details);
    }
    if (j.contains("predict")) {
      const auto& p = j.at("predict");
      check_known_keys(p, {"user", "time", "top", "item"}, "predict");
      read_if(p, "user", cfg.predict.user);
      read_if(p, "time", cfg.predict.time);
      read_if(p, "top", cfg.predict.top);
      read_if(p, "item", cfg.predict.item);
    }
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("bad config value: ") + ex.what());
  }
}

namespace {

std::string fmt(double x, int precision = 6) {
  std::ostringstream os;
  os << std::setprecision(precision) << x;
  return os.str();
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_manifest(const RunConfig& cfg, const nlohmann::json& outputs) {
  nlohmann::json j;
  j["config"] = cfg.to_json();
  j["outputs"] = outputs;
  write_json(cfg.output_dir / "manifest.json", j);
}

EventLog load_events(const RunConfig& cfg) {
  if (cfg.events.empty()) throw ConfigError("no event file given (--events)");
  if (!std::filesystem::exists(cfg.events))
    throw ConfigError("event file " + cfg.events.string() + " does not exist");
  if (std::filesystem::exists(sidecar_path(cfg.events))) {
    const LogMetadata meta = read_sidecar(sidecar_path(cfg.events));
    EventLog log = load_event_log(cfg.events);
    if ((cfg.num_users && *cfg.num_users != meta.num_users) ||
        (cfg.num_items && *cfg.num_items != meta.num_items))
      throw ConfigError("m/n given on the command line disagree with the sidecar");
    return log;
  }
  if (!cfg.num_users || !cfg.num_items)
    throw ConfigError("event file has no JSON sidecar; pass --m and --n");
  return load_event_log(cfg.events, *cfg.num_users, *cfg.num_items);
}

ModelParams load_model(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("no checkpoint given (--checkpoint)");
  if (!std::filesystem::exists(cfg.checkpoint))
    throw ConfigError("checkpoint " + cfg.checkpoint.string() + " does not exist");
  return load_checkpoint(cfg.checkpoint);
}

std::string run_simulate(const RunConfig& cfg) {
  SimConfig sim = cfg.simulate;
  sim.seed = cfg.seed;
  const SimResult result = simulate(sim);
  const auto events_path = cfg.output_dir / "events.csv";
  write_event_log(events_path, result.log);
  nlohmann::json generator = params_to_json(result.params);
  generator["seed"] = cfg.seed;
  write_json(cfg.output_dir / "generator.json", generator);
  write_manifest(cfg, {{"events", events_path.string()},
                       {"sidecar", sidecar_path(events_path).string()},
                       {"generator", (cfg.output_dir / "generator.json").string()}});
  return "simulate: " + std::to_string(result.log.size()) + " events, m=" +
         std::to_string(sim.num_users) + " n=" + std::to_string(sim.num_items) +
         " T=" + fmt(result.log.horizon()) + " -> " + events_path.string();
}

std::string run_train(const RunConfig& cfg) {
  EventLog log = load_events(cfg);
  if (cfg.split) log = split_by_proportion(log, *cfg.split).first;
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  TrainResult result;
  try {
    result = train(log, tc);
  } catch (const TrainingAborted& ex) {
    write_trace_csv(cfg.output_dir / "trace.csv", ex.trace());
    throw;
  }
  const auto ckpt = cfg.output_dir / "checkpoint.json";
  save_checkpoint(ckpt, result.params);
  write_trace_csv(cfg.output_dir / "trace.csv", result.trace);
  write_manifest(cfg, {{"checkpoint", ckpt.string()},
                       {"trace", (cfg.output_dir / "trace.csv").string()}});
  const double last = result.trace.empty() ? 0.0 : result.trace.back().loss.total;
  return "train: " + std::to_string(log.size()) + " events, " +
         std::to_string(result.trace.size()) + " windows, final window loss " + fmt(last) +
         " -> " + ckpt.string();
}

std::string run_evaluate(const RunConfig& cfg) {
  const EventLog log = load_events(cfg);
  EvalConfig ec = cfg.evaluate;
  if (!cfg.proportions.empty()) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const SweepResult sweep = sweep_splits(log, tc, cfg.proportions, ec);
    nlohmann::json j;
    j["splits"] = nlohmann::json::array();
    for (const auto& s : sweep.splits) {
      nlohmann::json row = metrics_to_json(s.metrics);
      row["proportion"] = s.proportion;
      row["train_events"] = s.train_events;
      row["test_events"] = s.test_events;
      j["splits"].push_back(row);
    }
    j["mean"] = metrics_to_json(sweep.mean);
    write_json(cfg.output_dir / "metrics.json", j);
    write_metrics_csv(cfg.output_dir / "metrics.csv", sweep.splits, sweep.mean);
    write_manifest(cfg, {{"metrics", (cfg.output_dir / "metrics.json").string()},
                         {"metrics_csv", (cfg.output_dir / "metrics.csv").string()}});
    return "evaluate: " + std::to_string(sweep.splits.size()) + " splits, mean MAR " +
           fmt(sweep.mean.mar) + ", mean MAE " + fmt(sweep.mean.mae_hours) + " h";
  }

  const ModelParams params = load_model(cfg);
  const double p = cfg.split.value_or(0.7);
  auto [train_log, test_log] = split_by_proportion(log, p);
  const Evaluation ev = evaluate(train_log, test_log, params, ec);
  nlohmann::json j = metrics_to_json(ev.metrics);
  j["proportion"] = p;
  j["train_events"] = train_log.size();
  j["test_events"] = test_log.size();
  write_json(cfg.output_dir / "metrics.json", j);
  const SplitResult row{p, train_log.size(), test_log.size(), ev.metrics};
  write_metrics_csv(cfg.output_dir / "metrics.csv", std::span(&row, 1), ev.metrics);
  nlohmann::json outputs{{"metrics", (cfg.output_dir / "metrics.json").string()},
                         {"metrics_csv", (cfg.output_dir / "metrics.csv").string()}};
  if (ec.keep_details) {
    write_predictions_csv(cfg.output_dir / "predictions.csv", ev.details);
    outputs["predictions"] = (cfg.output_dir / "predictions.csv").string();
  }
  write_manifest(cfg, outputs);
  return "evaluate: " + std::to_string(test_log.size()) + " test events, MAR " +
         fmt(ev.metrics.mar) + ", MAE " + fmt(ev.metrics.mae_hours) + " h";
}

std::string run_predict(const RunConfig& cfg) {
  const EventLog log = load_events(cfg);
  const ModelParams params = load_model(cfg);
  const PredictQuery& q = cfg.predict;
  if (q.user >= log.num_users()) throw DataError("query user out of range");
  if (q.item && *q.item >= log.num_items()) throw DataError("query item out of range");
  if (q.time < 0.0) throw DataError("query time must be >= 0");
  if (log.context_dim() != static_cast<std::size_t>(params.d()) && !log.empty())
    throw DataError("checkpoint context dimension does not match the event log");

  DynamicState state = DynamicState::zeros(log.num_users(), log.num_items(), params.k());
  for (const Event& e : log.events()) {
    if (e.time >= q.time) break;
    apply_event(state, params, e);
  }
  const PredictionRanking ranking = rank_items(state, q.user, q.time);
  const std::size_t top = std::min(q.top, ranking.order.size());

  std::ofstream out(cfg.output_dir / "ranking.csv");
  if (!out) throw DataError("cannot write ranking.csv");
  out.precision(17);
  out << "rank,item,density,log_density,intensity\n";
  for (std::size_t r = 0; r < ranking.order.size(); ++r) {
    const ItemId i = ranking.order[r];
    out << (r + 1) << ',' << i << ',' << ranking.scores[i] << ',' << ranking.log_scores[i] << ','
        << ranking.intensities[i] << '\n';
  }
  std::cout << "top-" << top << " items for user " << q.user << " at t=" << q.time << ":\n";
  for (std::size_t r = 0; r < top; ++r) {
    const ItemId i = ranking.order[r];
    std::cout << "  " << std::setw(3) << (r + 1) << "  item " << std::setw(6) << i
              << "  density " << fmt(ranking.scores[i]) << '\n';
  }
  nlohmann::json outputs{{"ranking", (cfg.output_dir / "ranking.csv").string()}};
  std::string summary = "predict: user " + std::to_string(q.user) + " at t=" + fmt(q.time) +
                        ", best item " + std::to_string(ranking.order.front());
  if (q.item) {
    const double when = predict_return_time(state, q.user, *q.item, q.time);
    nlohmann::json j{{"user", q.user}, {"item", *q.item}, {"time", q.time},
                     {"predicted_time", when}};
    write_json(cfg.output_dir / "return_time.json", j);
    outputs["return_time"] = (cfg.output_dir / "return_time.json").string();
    summary += ", expected return of item " + std::to_string(*q.item) + " at t=" + fmt(when);
  }
  write_manifest(cfg, outputs);
  return summary;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Coevolving user/item embeddings for time-sensitive recommendation"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir, events, checkpoint;
  std::optional<std::size_t> m, n;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--seed", seed, "random seed");
  app.add_option("-o,--out", output_dir, "output directory");
  app.add_option("--events", events, "event CSV");
  app.add_option("--checkpoint", checkpoint, "model checkpoint (JSON)");
  app.add_option("--m", m, "number of users (when the event file has no sidecar)");
  app.add_option("--n", n, "number of items (when the event file has no sidecar)");

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample an event log from a random model");
  std::optional<std::size_t> sim_m, sim_n, sim_max;
  std::optional<int> sim_k, sim_d;
  std::optional<double> sim_T, sim_scale;
  std::optional<std::string> sim_context, sim_act;
  sim->add_option("--users", sim_m, "number of users");
  sim->add_option("--items", sim_n, "number of items");
  sim->add_option("--k", sim_k, "embedding dimension");
  sim->add_option("--d", sim_d, "context dimension");
  sim->add_option("--context", sim_context, "context mode: none | gaussian");
  sim->add_option("--activation", sim_act, "tanh | sigmoid");
  sim->add_option("--param-scale", sim_scale, "ground-truth weight range (x 1/sqrt(k))");
  sim->add_option("--T", sim_T, "horizon in hours");
  sim->add_option("--max-events", sim_max, "event cap");

  // train / evaluate share training knobs
  std::optional<std::size_t> window, nce;
  std::optional<double> lr, clip, init_scale, split;
  std::optional<int> epochs, k;
  std::optional<std::string> act;
  bool full_survival = false, no_scale = false, details = false;
  std::vector<double> proportions;
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--window", window, "events per training window (M)");
    sub->add_option("--nce-samples", nce, "sampled non-event dimensions per window (C)");
    sub->add_flag("--full-survival", full_survival, "enumerate every dimension");
    sub->add_flag("--no-scale-survival", no_scale, "do not reweight sampled dimensions");
    sub->add_option("--lr", lr, "Adam learning rate");
    sub->add_option("--clip-norm", clip, "global gradient norm bound");
    sub->add_option("--epochs", epochs, "passes over the log");
    sub->add_option("--k", k, "embedding dimension");
    sub->add_option("--activation", act, "tanh | sigmoid");
    sub->add_option("--init-scale", init_scale, "initial weight range (x 1/sqrt(k))");
    sub->add_option("--split", split, "use the first T*p hours for training");
  };
  auto* trn = app.add_subcommand("train", "fit a model to an event log");
  add_train_flags(trn);
  auto* evl = app.add_subcommand("evaluate", "MAR / MAE on a train/test split");
  add_train_flags(evl);
  std::optional<int> bins;
  evl->add_option("--proportions", proportions, "train and evaluate once per proportion");
  evl->add_option("--bins", bins, "number of equal time bins over the test span");
  evl->add_flag("--details", details, "write per-event predictions.csv");

  auto* prd = app.add_subcommand("predict", "rank items for a (user, time) query");
  std::optional<std::size_t> q_user, q_top, q_item;
  std::optional<double> q_time;
  prd->add_option("--user", q_user, "query user");
  prd->add_option("--time", q_time, "query time in hours");
  prd->add_option("--top", q_top, "items to print");
  prd->add_option("--item", q_item, "also predict the return time for this item");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw ConfigError("cannot open config " + config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& ex) {
        throw ConfigError("config " + config_path + " is not valid JSON: " + ex.what());
      }
      apply_config_json(cfg, j);
    }
    cfg.command = app.get_subcommands().front()->get_name();
    if (seed) cfg.seed = *seed;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) cfg.output_dir = env;
    if (output_dir) cfg.output_dir = *output_dir;
    if (events) cfg.events = *events;
    if (checkpoint) cfg.checkpoint = *checkpoint;
    if (m) cfg.num_users = m;
    if (n) cfg.num_items = n;

    if (sim_m) cfg.simulate.num_users = *sim_m;
    if (sim_n) cfg.simulate.num_items = *sim_n;
    if (sim_k) cfg.simulate.k = *sim_k;
    if (sim_d) cfg.simulate.context_dim = *sim_d;
    if (sim_context) cfg.simulate.context_mode = context_mode_from_string(*sim_context);
    if (sim_act) cfg.simulate.activation = activation_from_string(*sim_act);
    if (sim_scale) cfg.simulate.param_scale = *sim_scale;
    if (sim_T) cfg.simulate.horizon = *sim_T;
    if (sim_max) cfg.simulate.max_events = *sim_max;

    if (window) cfg.train.window_size = *window;
    if (nce) cfg.train.nce_samples = nce;
    if (full_survival) cfg.train.full_survival = true;
    if (no_scale) cfg.train.scale_survival = false;
    if (lr) cfg.train.learning_rate = *lr;
    if (clip) cfg.train.clip_norm = *clip;
    if (epochs) cfg.train.epochs = *epochs;
    if (k) cfg.train.k = *k;
    if (act) cfg.train.activation = activation_from_string(*act);
    if (init_scale) cfg.train.init_scale = *init_scale;
    if (split) cfg.split = split;
    if (!proportions.empty()) cfg.proportions = proportions;
    if (bins) cfg.evaluate.time_bins = *bins;
    if (details) cfg.evaluate.keep_details = true;
    if (q_user) cfg.predict.user = *q_user;
    if (q_time) cfg.predict.time = *q_time;
    if (q_top) cfg.predict.top = *q_top;
    if (q_item) cfg.predict.item = q_item;

    cfg.train.seed = cfg.seed;
    cfg.simulate.seed = cfg.seed;
    if (cfg.command != "simulate") cfg.train.validate();
    if (cfg.command == "simulate") cfg.simulate.validate();
    if (cfg.split && !(*cfg.split > 0.0 && *cfg.split < 1.0))
      throw ConfigError("--split must lie in (0, 1)");

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + cfg.output_dir.string());

    std::string summary;
    if (cfg.command == "simulate") summary = run_simulate(cfg);
    else if (cfg.command == "train") summary = run_train(cfg);
    else if (cfg.command == "evaluate") summary = run_evaluate(cfg);
    else summary = run_predict(cfg);
    std::cout << summary << std::endl;
    return kOk;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << std::endl;
    return kConfigError;
  } catch (const DataError& ex) {
    std::cerr << "data error: " << ex.what() << std::endl;
    return kDataError;
  } catch (const NumericalError& ex) {
    std::cerr << "numerical abort: " << ex.what() << std::endl;
    return kNumericalAbort;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << std::endl;
    return kFailure;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("coevolve");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace coevolve::cli
