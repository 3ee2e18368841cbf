#include "scmbrl/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace scmbrl {

namespace {

using nlohmann::json;

json nested_2d(std::span<const double> flat, int rows, int cols) {
  json out = json::array();
  for (int r = 0; r < rows; ++r) {
    json row = json::array();
    for (int c = 0; c < cols; ++c) row.push_back(flat[static_cast<std::size_t>(r) * cols + c]);
    out.push_back(std::move(row));
  }
  return out;
}

json nested_3d(std::span<const double> flat, int d0, int d1, int d2) {
  json out = json::array();
  for (int i = 0; i < d0; ++i) {
    out.push_back(nested_2d({flat.data() + static_cast<std::size_t>(i) * d1 * d2,
                             static_cast<std::size_t>(d1) * d2},
                            d1, d2));
  }
  return out;
}

void flatten_2d(const json& arr, int rows, int cols, std::vector<double>& out) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != rows) {
    throw std::invalid_argument("expected a nested array with " + std::to_string(rows) + " rows");
  }
  for (int r = 0; r < rows; ++r) {
    const json& row = arr[r];
    if (!row.is_array() || static_cast<int>(row.size()) != cols) {
      throw std::invalid_argument("row has wrong length");
    }
    for (int c = 0; c < cols; ++c) out.push_back(row[c].get<double>());
  }
}

void require_version(const json& j) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer() ||
      j["schema_version"].get<int>() != 1) {
    throw std::invalid_argument("missing or unsupported schema_version");
  }
}

}  // namespace

std::string mdp_to_json(const TabularMdp& mdp, std::uint64_t seed) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "tabular_mdp";
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["discount"] = mdp.discount;
  j["seed"] = seed;
  j["rewards"] = nested_2d(mdp.rewards, mdp.n_states, mdp.n_actions);
  j["transitions"] = nested_3d(mdp.transitions, mdp.n_states, mdp.n_actions, mdp.n_states);
  return j.dump(2) + "\n";
}

TabularMdp mdp_from_json(const std::string& text, std::uint64_t* seed_out) {
  json j = json::parse(text);
  require_version(j);
  if (!j.contains("kind") || j["kind"] != "tabular_mdp") {
    throw std::invalid_argument("not a tabular_mdp document");
  }
  TabularMdp mdp;
  mdp.n_states = j.at("n_states").get<int>();
  mdp.n_actions = j.at("n_actions").get<int>();
  mdp.discount = j.at("discount").get<double>();
  if (seed_out != nullptr) *seed_out = j.at("seed").get<std::uint64_t>();
  mdp.rewards.reserve(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions);
  flatten_2d(j.at("rewards"), mdp.n_states, mdp.n_actions, mdp.rewards);
  const json& transitions = j.at("transitions");
  if (!transitions.is_array() || static_cast<int>(transitions.size()) != mdp.n_states) {
    throw std::invalid_argument("transitions has wrong outer length");
  }
  mdp.transitions.reserve(static_cast<std::size_t>(mdp.n_states) * mdp.n_actions * mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    flatten_2d(transitions[s], mdp.n_actions, mdp.n_states, mdp.transitions);
  }
  validate_mdp(mdp);
  return mdp;
}

std::string model_params_to_json(const ModelParams& params) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "model_params";
  j["n_states"] = params.n_states;
  j["n_actions"] = params.n_actions;
  j["reward_hat"] = nested_2d(params.reward_hat, params.n_states, params.n_actions);
  j["logits"] = nested_3d(params.logits, params.n_states, params.n_actions, params.n_states);
  return j.dump(2) + "\n";
}

ModelParams model_params_from_json(const std::string& text) {
  json j = json::parse(text);
  require_version(j);
  if (!j.contains("kind") || j["kind"] != "model_params") {
    throw std::invalid_argument("not a model_params document");
  }
  ModelParams params;
  params.n_states = j.at("n_states").get<int>();
  params.n_actions = j.at("n_actions").get<int>();
  if (params.n_states < 1 || params.n_actions < 1) {
    throw std::invalid_argument("counts must be positive");
  }
  params.reward_hat.reserve(static_cast<std::size_t>(params.n_states) * params.n_actions);
  flatten_2d(j.at("reward_hat"), params.n_states, params.n_actions, params.reward_hat);
  const json& logits = j.at("logits");
  if (!logits.is_array() || static_cast<int>(logits.size()) != params.n_states) {
    throw std::invalid_argument("logits has wrong outer length");
  }
  for (int s = 0; s < params.n_states; ++s) {
    flatten_2d(logits[s], params.n_actions, params.n_states, params.logits);
  }
  return params;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::string metrics_to_jsonl(std::span<const MetricRecord> records) {
  std::string out;
  for (const MetricRecord& rec : records) {
    json j;
    j["replica"] = rec.replica;
    j["iteration"] = rec.iteration;
    if (rec.value_error) j["value_error"] = *rec.value_error;
    if (rec.normalized_return) j["normalized_return"] = *rec.normalized_return;
    j["sc_loss"] = rec.sc_loss;
    j["model_tv"] = rec.model_tv;
    j["model_reward_err"] = rec.model_reward_err;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string metrics_to_csv(std::span<const MetricRecord> records) {
  std::string out = "replica,iteration,value_error,normalized_return,sc_loss,model_tv,model_reward_err\n";
  for (const MetricRecord& rec : records) {
    out += std::to_string(rec.replica);
    out += ',';
    out += std::to_string(rec.iteration);
    out += ',';
    if (rec.value_error) out += format_real(*rec.value_error);
    out += ',';
    if (rec.normalized_return) out += format_real(*rec.normalized_return);
    out += ',';
    out += format_real(rec.sc_loss);
    out += ',';
    out += format_real(rec.model_tv);
    out += ',';
    out += format_real(rec.model_reward_err);
    out += '\n';
  }
  return out;
}

std::string summary_to_csv(std::span<const SummaryStat> summaries) {
  std::string out = "iteration,mean,ci_lo,ci_hi\n";
  for (const SummaryStat& s : summaries) {
    out += format_real(s.x);
    out += ',';
    out += format_real(s.mean);
    out += ',';
    out += format_real(s.ci_lo);
    out += ',';
    out += format_real(s.ci_hi);
    out += '\n';
  }
  return out;
}

std::string robustness_to_csv(std::span<const RobustnessRow> rows) {
  std::string out = "sigma,auc_mean,auc_ci_lo,auc_ci_hi\n";
  for (const RobustnessRow& r : rows) {
    out += format_real(r.sigma);
    out += ',';
    out += format_real(r.auc.mean);
    out += ',';
    out += format_real(r.auc.ci_lo);
    out += ',';
    out += format_real(r.auc.ci_hi);
    out += '\n';
  }
  return out;
}

std::string sweep_to_csv(std::span<const SweepCell> cells) {
  std::string out = "alpha_td,alpha_model,sc_multiplier,alpha_plan,final_mean,final_ci_lo,final_ci_hi\n";
  for (const SweepCell& c : cells) {
    out += format_real(c.alpha_td);
    out += ',';
    out += format_real(c.alpha_model);
    out += ',';
    out += format_real(c.sc_multiplier);
    out += ',';
    out += format_real(c.alpha_plan);
    out += ',';
    out += format_real(c.final_metric.mean);
    out += ',';
    out += format_real(c.final_metric.ci_lo);
    out += ',';
    out += format_real(c.final_metric.ci_hi);
    out += '\n';
  }
  return out;
}

}  // namespace scmbrl
