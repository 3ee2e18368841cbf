#include "scmbrl/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "scmbrl/serialize.hpp"

namespace scmbrl {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

Task parse_task(const std::string& s) {
  if (s == "evaluation") return Task::kEvaluation;
  if (s == "control") return Task::kControl;
  throw ConfigError("task: expected evaluation or control, got '" + s + "'");
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "model_free") return Algorithm::kModelFree;
  if (s == "dyna") return Algorithm::kDyna;
  if (s == "sc_residual") return Algorithm::kScResidual;
  if (s == "sc_direct") return Algorithm::kScDirect;
  if (s == "sc_reverse") return Algorithm::kScReverse;
  throw ConfigError("algorithm: unknown value '" + s + "'");
}

ModelObjective parse_objective(const std::string& s) {
  if (s == "mle") return ModelObjective::kMle;
  if (s == "ve") return ModelObjective::kVe;
  throw ConfigError("model: expected mle or ve, got '" + s + "'");
}

CollectionMode parse_collection(const std::string& s) {
  if (s == "streams") return CollectionMode::kStreams;
  if (s == "iid") return CollectionMode::kIidUniform;
  throw ConfigError("collection: expected streams or iid, got '" + s + "'");
}

NoiseTarget parse_target(const std::string& s) {
  if (s == "reward") return NoiseTarget::kRewardInit;
  if (s == "value") return NoiseTarget::kValueInit;
  throw ConfigError("target: expected reward or value, got '" + s + "'");
}

StartMode parse_starts(const std::string& s) {
  if (s == "all") return {StartMode::Kind::kAllStates, 0};
  if (s.rfind("sample:", 0) == 0) {
    try {
      return {StartMode::Kind::kSample, std::stoi(s.substr(7))};
    } catch (const std::exception&) {
      throw ConfigError("starts: cannot parse count in '" + s + "'");
    }
  }
  throw ConfigError("starts: expected all or sample:N, got '" + s + "'");
}

ImaginationMode parse_imagination(const std::string& s) {
  if (s == "on_policy") return {ImaginationMode::Kind::kOnPolicy, 0.0};
  if (s.rfind("eps_mix:", 0) == 0) {
    try {
      return {ImaginationMode::Kind::kEpsilonMix, std::stod(s.substr(8))};
    } catch (const std::exception&) {
      throw ConfigError("imagination: cannot parse epsilon in '" + s + "'");
    }
  }
  throw ConfigError("imagination: expected on_policy or eps_mix:F, got '" + s + "'");
}

std::vector<double> parse_real_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream stream(s);
  std::string item;
  while (std::getline(stream, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(key + ": cannot parse real '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string starts_to_string(const StartMode& m) {
  return m.kind == StartMode::Kind::kAllStates ? "all"
                                               : "sample:" + std::to_string(m.sample_count);
}

std::string imagination_to_string(const ImaginationMode& m) {
  return m.kind == ImaginationMode::Kind::kOnPolicy
             ? "on_policy"
             : "eps_mix:" + format_real(m.epsilon);
}

// Raw option values as parsed from flags; presence decides precedence.
struct FlagValues {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string task, algorithm, model, starts, imagination, collection, target, format;
  int iterations = 0, replicas = 0, horizon = 0, batch_size = 0, n_states = 0,
      n_actions = 0, eval_interval = 0, threads = 0;
  double epsilon = 0.0, alpha_td = 0.0, alpha_r = 0.0, alpha_model = 0.0,
         alpha_plan = 0.0, discount = 0.0;
  std::string sigma_grid;
  std::string mdp_in, mdp_out;
  bool checkpoint = false;
  bool eval_greedy = false;
};

const std::set<std::string>& known_file_keys() {
  static const std::set<std::string> keys = {
      "schema_version", "task",          "algorithm",      "model",
      "n_states",       "n_actions",     "discount",       "epsilon",
      "batch_size",     "K",             "iterations",     "eval_interval",
      "replicas",       "seed",          "alpha_td",       "alpha_r",
      "alpha_model",    "alpha_plan",    "starts",         "imagination",
      "collection",     "sigma_grid",    "target",         "out",
      "format",         "checkpoint",    "mdp",            "mdp_out",
      "threads",        "eval_greedy",   "alpha_td_grid",  "alpha_model_grid",
      "sc_multiplier_grid"};
  return keys;
}

template <typename T>
T get_typed(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

void apply_config_file(CliConfig& config, const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_file_keys().count(key)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    (void)value;
  }
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != 1) {
    throw ConfigError("config file: missing or unsupported schema_version");
  }

  ExperimentConfig& exp = config.exp;
  if (j.contains("task")) exp.task = parse_task(get_typed<std::string>(j["task"], "task"));
  if (j.contains("algorithm")) exp.algorithm = parse_algorithm(get_typed<std::string>(j["algorithm"], "algorithm"));
  if (j.contains("model")) exp.model_objective = parse_objective(get_typed<std::string>(j["model"], "model"));
  if (j.contains("n_states")) exp.n_states = get_typed<int>(j["n_states"], "n_states");
  if (j.contains("n_actions")) exp.n_actions = get_typed<int>(j["n_actions"], "n_actions");
  if (j.contains("discount")) exp.discount = get_typed<double>(j["discount"], "discount");
  if (j.contains("epsilon") && !j["epsilon"].is_null()) {
    exp.epsilon = get_typed<double>(j["epsilon"], "epsilon");
  }
  if (j.contains("batch_size")) exp.batch_size = get_typed<int>(j["batch_size"], "batch_size");
  if (j.contains("K")) exp.horizon = get_typed<int>(j["K"], "K");
  if (j.contains("iterations")) exp.iterations = get_typed<int>(j["iterations"], "iterations");
  if (j.contains("eval_interval")) exp.eval_interval = get_typed<int>(j["eval_interval"], "eval_interval");
  if (j.contains("replicas")) exp.n_replicas = get_typed<int>(j["replicas"], "replicas");
  if (j.contains("seed")) exp.base_seed = get_typed<std::uint64_t>(j["seed"], "seed");
  if (j.contains("alpha_td")) exp.alpha_td = get_typed<double>(j["alpha_td"], "alpha_td");
  if (j.contains("alpha_r")) exp.alpha_r = get_typed<double>(j["alpha_r"], "alpha_r");
  if (j.contains("alpha_model") && !j["alpha_model"].is_null()) {
    exp.alpha_model = get_typed<double>(j["alpha_model"], "alpha_model");
  }
  if (j.contains("alpha_plan") && !j["alpha_plan"].is_null()) {
    exp.alpha_plan = get_typed<double>(j["alpha_plan"], "alpha_plan");
  }
  if (j.contains("starts")) exp.starts = parse_starts(get_typed<std::string>(j["starts"], "starts"));
  if (j.contains("imagination")) {
    exp.imagination = parse_imagination(get_typed<std::string>(j["imagination"], "imagination"));
  }
  if (j.contains("collection")) {
    exp.collection = parse_collection(get_typed<std::string>(j["collection"], "collection"));
  }
  if (j.contains("threads")) exp.threads = get_typed<int>(j["threads"], "threads");
  if (j.contains("eval_greedy")) exp.eval_greedy_policy = get_typed<bool>(j["eval_greedy"], "eval_greedy");

  if (j.contains("sigma_grid")) {
    if (!j["sigma_grid"].is_array()) throw ConfigError("config key 'sigma_grid' must be an array");
    config.sigma_grid.clear();
    for (const auto& v : j["sigma_grid"]) config.sigma_grid.push_back(get_typed<double>(v, "sigma_grid"));
    if (config.sigma_grid.empty()) throw ConfigError("config key 'sigma_grid' must be non-empty");
  }
  if (j.contains("target")) config.target = parse_target(get_typed<std::string>(j["target"], "target"));
  if (j.contains("out")) config.out_dir = get_typed<std::string>(j["out"], "out");
  if (j.contains("format")) config.format = get_typed<std::string>(j["format"], "format");
  if (j.contains("checkpoint")) config.checkpoint = get_typed<bool>(j["checkpoint"], "checkpoint");
  if (j.contains("mdp")) config.mdp_in = get_typed<std::string>(j["mdp"], "mdp");
  if (j.contains("mdp_out")) config.mdp_out = get_typed<std::string>(j["mdp_out"], "mdp_out");

  auto read_grid = [&](const char* key, std::vector<double>& grid) {
    if (!j.contains(key)) return;
    if (!j[key].is_array()) throw ConfigError(std::string("config key '") + key + "' must be an array");
    grid.clear();
    for (const auto& v : j[key]) grid.push_back(get_typed<double>(v, key));
    if (grid.empty()) throw ConfigError(std::string("config key '") + key + "' must be non-empty");
  };
  read_grid("alpha_td_grid", config.grids.alpha_td);
  read_grid("alpha_model_grid", config.grids.alpha_model);
  read_grid("sc_multiplier_grid", config.grids.sc_multiplier);
}

void check_format(const std::string& format) {
  if (format != "jsonl" && format != "csv" && format != "both") {
    throw ConfigError("format: expected jsonl, csv or both, got '" + format + "'");
  }
}

}  // namespace

std::string resolved_config_json(const CliConfig& config) {
  const ExperimentConfig& exp = config.exp;
  json j;
  j["schema_version"] = 1;
  j["task"] = to_string(exp.task);
  j["algorithm"] = to_string(exp.algorithm);
  j["model"] = to_string(exp.model_objective);
  j["n_states"] = exp.n_states;
  j["n_actions"] = exp.n_actions;
  j["discount"] = exp.discount;
  if (exp.task == Task::kControl) {
    j["epsilon"] = resolve_epsilon(exp);
  } else {
    j["epsilon"] = nullptr;
  }
  j["batch_size"] = exp.batch_size;
  j["K"] = exp.horizon;
  j["iterations"] = exp.iterations;
  j["eval_interval"] = exp.eval_interval;
  j["replicas"] = exp.n_replicas;
  j["seed"] = exp.base_seed;
  j["alpha_td"] = exp.alpha_td;
  j["alpha_r"] = exp.alpha_r;
  j["alpha_model"] = resolve_alpha_model(exp);
  j["alpha_plan"] = resolve_alpha_plan(exp);
  j["starts"] = starts_to_string(exp.starts);
  j["imagination"] = imagination_to_string(exp.imagination);
  j["collection"] = exp.collection == CollectionMode::kStreams ? "streams" : "iid";
  j["sigma_grid"] = config.sigma_grid;
  j["target"] = config.target == NoiseTarget::kRewardInit ? "reward" : "value";
  j["out"] = config.out_dir;
  j["format"] = config.format;
  j["checkpoint"] = config.checkpoint;
  j["mdp"] = config.mdp_in;
  j["mdp_out"] = config.mdp_out;
  j["threads"] = exp.threads;
  j["eval_greedy"] = exp.eval_greedy_policy;
  j["alpha_td_grid"] = config.grids.alpha_td;
  j["alpha_model_grid"] = config.grids.alpha_model;
  j["sc_multiplier_grid"] = config.grids.sc_multiplier;
  return j.dump(2) + "\n";
}

namespace {

void write_run_outputs(const CliConfig& config, const RunResult& result,
                       std::ostream& out) {
  fs::create_directories(config.out_dir);
  write_text_file((fs::path(config.out_dir) / "resolved_config.json").string(),
                  resolved_config_json(config));
  if (config.format == "jsonl" || config.format == "both") {
    write_text_file((fs::path(config.out_dir) / "metrics.jsonl").string(),
                    metrics_to_jsonl(result.records));
  }
  if (config.format == "csv" || config.format == "both") {
    write_text_file((fs::path(config.out_dir) / "metrics.csv").string(),
                    metrics_to_csv(result.records));
  }
  std::vector<SummaryStat> summaries =
      summarize_by_iteration(result.records, config.exp.task, config.exp.base_seed);
  std::string summary_name = std::string("summary_") + to_string(config.exp.algorithm) +
                             "_" + to_string(config.exp.model_objective) + ".csv";
  write_text_file((fs::path(config.out_dir) / summary_name).string(),
                  summary_to_csv(summaries));
  if (config.checkpoint) {
    fs::path dir = fs::path(config.out_dir) / "checkpoints";
    fs::create_directories(dir);
    for (std::size_t r = 0; r < result.finals.size(); ++r) {
      write_text_file((dir / ("model_replica" + std::to_string(r) + ".json")).string(),
                      model_params_to_json(result.finals[r].params));
    }
  }
  if (!summaries.empty()) {
    const SummaryStat& last = summaries.back();
    out << "final " << (config.exp.task == Task::kControl ? "normalized_return" : "value_error")
        << " mean=" << format_real(last.mean) << " ci=[" << format_real(last.ci_lo) << ", "
        << format_real(last.ci_hi) << "] over " << config.exp.n_replicas << " replicas\n";
  }
}

int dispatch(CliConfig config, const std::string& subcommand, std::ostream& out) {
  if (subcommand == "generate") {
    fs::create_directories(config.out_dir);
    Rng rng = make_rng(config.exp.base_seed);
    TabularMdp mdp = generate_garnet(config.exp.n_states, config.exp.n_actions, rng,
                                     config.exp.discount);
    std::string path = config.mdp_out.empty()
                           ? (fs::path(config.out_dir) / "mdp.json").string()
                           : config.mdp_out;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    write_text_file(path, mdp_to_json(mdp, config.exp.base_seed));
    write_text_file((fs::path(config.out_dir) / "resolved_config.json").string(),
                    resolved_config_json(config));
    out << "wrote " << path << "\n";
    return 0;
  }

  if (!config.mdp_in.empty()) {
    TabularMdp mdp = mdp_from_json(read_text_file(config.mdp_in));
    config.exp.n_states = mdp.n_states;
    config.exp.n_actions = mdp.n_actions;
    config.exp.discount = mdp.discount;
    config.exp.fixed_mdp = std::move(mdp);
  }

  if (subcommand == "evaluate" || subcommand == "control") {
    RunResult result = config.exp.task == Task::kControl ? run_control(config.exp)
                                                         : run_policy_evaluation(config.exp);
    write_run_outputs(config, result, out);
    return 0;
  }
  if (subcommand == "robustness") {
    std::vector<RobustnessRow> rows =
        run_robustness_sweep(config.exp, config.sigma_grid, config.target);
    fs::create_directories(config.out_dir);
    write_text_file((fs::path(config.out_dir) / "resolved_config.json").string(),
                    resolved_config_json(config));
    write_text_file((fs::path(config.out_dir) / "robustness.csv").string(),
                    robustness_to_csv(rows));
    out << "wrote " << rows.size() << " noise levels to robustness.csv\n";
    return 0;
  }
  if (subcommand == "sweep") {
    std::vector<SweepCell> cells = run_lr_sweep(config.exp, config.grids);
    fs::create_directories(config.out_dir);
    write_text_file((fs::path(config.out_dir) / "resolved_config.json").string(),
                    resolved_config_json(config));
    write_text_file((fs::path(config.out_dir) / "sweep.csv").string(), sweep_to_csv(cells));
    out << "wrote " << cells.size() << " cells to sweep.csv\n";
    return 0;
  }
  throw ConfigError("unknown subcommand '" + subcommand + "'");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tabular model-based RL with self-consistency planning updates"};
  app.require_subcommand(1);

  FlagValues flags;
  std::vector<CLI::App*> subs;
  for (const char* name : {"generate", "evaluate", "control", "robustness", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->fallthrough();
    subs.push_back(sub);
  }

  app.add_option("--config", flags.config_path, "JSON configuration file");
  CLI::Option* opt_out = app.add_option("--out", flags.out_dir, "output directory");
  CLI::Option* opt_seed = app.add_option("--seed", flags.seed, "base seed");
  CLI::Option* opt_task = app.add_option("--task", flags.task, "evaluation|control");
  CLI::Option* opt_algo = app.add_option("--algorithm", flags.algorithm,
                                         "model_free|dyna|sc_residual|sc_direct|sc_reverse");
  CLI::Option* opt_model = app.add_option("--model", flags.model, "mle|ve");
  CLI::Option* opt_iters = app.add_option("--iterations", flags.iterations, "training iterations");
  CLI::Option* opt_reps = app.add_option("--replicas", flags.replicas, "independent replicas");
  CLI::Option* opt_k = app.add_option("--K", flags.horizon, "planning rollout length");
  CLI::Option* opt_eps = app.add_option("--epsilon", flags.epsilon, "control exploration rate");
  CLI::Option* opt_batch = app.add_option("--batch-size", flags.batch_size, "transitions per iteration");
  CLI::Option* opt_atd = app.add_option("--alpha-td", flags.alpha_td, "TD(0) learning rate");
  CLI::Option* opt_ar = app.add_option("--alpha-r", flags.alpha_r, "reward-model learning rate");
  CLI::Option* opt_am = app.add_option("--alpha-model", flags.alpha_model, "transition-model learning rate");
  CLI::Option* opt_ap = app.add_option("--alpha-plan", flags.alpha_plan, "planning learning rate");
  CLI::Option* opt_starts = app.add_option("--starts", flags.starts, "all|sample:N");
  CLI::Option* opt_imag = app.add_option("--imagination", flags.imagination, "on_policy|eps_mix:F");
  CLI::Option* opt_coll = app.add_option("--collection", flags.collection, "streams|iid");
  CLI::Option* opt_sigma = app.add_option("--sigma-grid", flags.sigma_grid, "comma-separated noise levels");
  CLI::Option* opt_target = app.add_option("--target", flags.target, "reward|value");
  CLI::Option* opt_ns = app.add_option("--n-states", flags.n_states, "number of states");
  CLI::Option* opt_na = app.add_option("--n-actions", flags.n_actions, "number of actions");
  CLI::Option* opt_disc = app.add_option("--discount", flags.discount, "discount factor");
  CLI::Option* opt_ei = app.add_option("--eval-interval", flags.eval_interval, "iterations between records");
  CLI::Option* opt_threads = app.add_option("--threads", flags.threads, "worker threads (0 = auto)");
  CLI::Option* opt_format = app.add_option("--format", flags.format, "jsonl|csv|both");
  CLI::Option* opt_mdp = app.add_option("--mdp", flags.mdp_in, "MDP file to load");
  CLI::Option* opt_mdp_out = app.add_option("--mdp-out", flags.mdp_out, "MDP file to write (generate)");
  CLI::Option* opt_ckpt = app.add_flag("--checkpoint", flags.checkpoint, "write final model snapshots");
  CLI::Option* opt_greedy = app.add_flag("--eval-greedy", flags.eval_greedy,
                                         "measure the greedy policy instead of the behaviour policy");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  std::string subcommand;
  for (CLI::App* sub : subs) {
    if (sub->parsed()) subcommand = sub->get_name();
  }

  try {
    CliConfig config;
    const char* env_out = std::getenv("SC_MBRL_OUT");
    config.out_dir = env_out != nullptr ? env_out : "out";

    if (!flags.config_path.empty()) apply_config_file(config, flags.config_path);

    ExperimentConfig& exp = config.exp;
    if (opt_task->count() > 0) exp.task = parse_task(flags.task);
    if (opt_algo->count() > 0) exp.algorithm = parse_algorithm(flags.algorithm);
    if (opt_model->count() > 0) exp.model_objective = parse_objective(flags.model);
    if (opt_seed->count() > 0) exp.base_seed = flags.seed;
    if (opt_iters->count() > 0) exp.iterations = flags.iterations;
    if (opt_reps->count() > 0) exp.n_replicas = flags.replicas;
    if (opt_k->count() > 0) exp.horizon = flags.horizon;
    if (opt_eps->count() > 0) exp.epsilon = flags.epsilon;
    if (opt_batch->count() > 0) exp.batch_size = flags.batch_size;
    if (opt_atd->count() > 0) exp.alpha_td = flags.alpha_td;
    if (opt_ar->count() > 0) exp.alpha_r = flags.alpha_r;
    if (opt_am->count() > 0) exp.alpha_model = flags.alpha_model;
    if (opt_ap->count() > 0) exp.alpha_plan = flags.alpha_plan;
    if (opt_starts->count() > 0) exp.starts = parse_starts(flags.starts);
    if (opt_imag->count() > 0) exp.imagination = parse_imagination(flags.imagination);
    if (opt_coll->count() > 0) exp.collection = parse_collection(flags.collection);
    if (opt_ns->count() > 0) exp.n_states = flags.n_states;
    if (opt_na->count() > 0) exp.n_actions = flags.n_actions;
    if (opt_disc->count() > 0) exp.discount = flags.discount;
    if (opt_ei->count() > 0) exp.eval_interval = flags.eval_interval;
    if (opt_threads->count() > 0) exp.threads = flags.threads;
    if (opt_greedy->count() > 0) exp.eval_greedy_policy = flags.eval_greedy;
    if (opt_out->count() > 0) config.out_dir = flags.out_dir;
    if (opt_format->count() > 0) config.format = flags.format;
    if (opt_sigma->count() > 0) config.sigma_grid = parse_real_list(flags.sigma_grid, "sigma_grid");
    if (opt_target->count() > 0) config.target = parse_target(flags.target);
    if (opt_mdp->count() > 0) config.mdp_in = flags.mdp_in;
    if (opt_mdp_out->count() > 0) config.mdp_out = flags.mdp_out;
    if (opt_ckpt->count() > 0) config.checkpoint = flags.checkpoint;

    // Subcommands pin the task; a contradicting --task or file value is a
    // configuration error rather than a silent override.
    if (subcommand == "evaluate" || subcommand == "robustness" || subcommand == "sweep") {
      if ((opt_task->count() > 0 || !flags.config_path.empty()) && exp.task == Task::kControl) {
        if (subcommand != "sweep") {
          throw ConfigError(subcommand + " runs the evaluation task, but task=control was given");
        }
      } else {
        exp.task = subcommand == "sweep" ? exp.task : Task::kEvaluation;
      }
    } else if (subcommand == "control") {
      if (exp.task == Task::kEvaluation && opt_task->count() > 0) {
        throw ConfigError("control runs the control task, but task=evaluation was given");
      }
      exp.task = Task::kControl;
    }

    check_format(config.format);
    if (subcommand != "generate") validate_config(config.exp);

    return dispatch(std::move(config), subcommand, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << " (replica " << e.replica << ", iteration "
        << e.iteration << ")\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace scmbrl
