#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "scmbrl/experiment.hpp"
#include "scmbrl/mdp.hpp"
#include "scmbrl/model.hpp"

namespace scmbrl {

// Versioned JSON container for a generated MDP; the generator seed round-trips
// bit-exactly and reals round-trip value-exactly.
std::string mdp_to_json(const TabularMdp& mdp, std::uint64_t seed);
TabularMdp mdp_from_json(const std::string& text, std::uint64_t* seed_out = nullptr);

std::string model_params_to_json(const ModelParams& params);
ModelParams model_params_from_json(const std::string& text);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// %.17g rendering, enough digits to reparse the exact double.
std::string format_real(double x);

std::string metrics_to_jsonl(std::span<const MetricRecord> records);
std::string metrics_to_csv(std::span<const MetricRecord> records);
std::string summary_to_csv(std::span<const SummaryStat> summaries);
std::string robustness_to_csv(std::span<const RobustnessRow> rows);
std::string sweep_to_csv(std::span<const SweepCell> cells);

}  // namespace scmbrl
