#pragma once

// JSON experiment configuration. Every section is optional; unknown keys and
// wrong types are rejected with the offending JSON path.
//
// {
//   "schema": "gpfq-experiment/1",
//   "seed": 20211012,
//   "quant":  { "bits": 5, "C": 1.0, "variant": "plain", "lambda": 0.0,
//               "lambda_scale": "absolute" | "relative", "sample_prob": 1.0,
//               "last_layer_unquantized": false, "bias_correction": false,
//               "bias_scope": "last" | "all", "per_layer_bits": [],
//               "reuse_delta": true, "C_grid": [] },
//   "data":   { "distribution": {...}, "m": 16, "N0": 1024 },
//   "trial":  { "bits": 5, "radius": 1.0, "radius_from_weights": false,
//               "variant": "plain", "lambda_steps": 0.0, "exponent": 1.0 },
//   "width_sweep":  { "N0": [64, ...], "trials": 50,
//                     "slope_target": -1.0, "slope_tolerance": 0.25 },
//   "lambda_sweep": { "lambdas": [0, 0.0025], "variants": ["soft", "hard"],
//                     "task": {...}, "train": {...}, "calibration": 256 },
//   "criteria": [1, 2, 3],
//   "output": { "dir": "out" }
// }
//
// Distributions: {"type": "uniform_ball", "radius": r}, {"type": "bernoulli"},
// {"type": "standard_normal", "sigma": s},
// {"type": "clusters", "centers": [[...], ...], "sigma": s, "per_cluster": n},
// {"type": "subspace", "dim": l, "inner": {...}}.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gpfq/acceptance.hpp"
#include "gpfq/datagen.hpp"
#include "gpfq/layers.hpp"
#include "gpfq/synthetic.hpp"
#include "gpfq/verify.hpp"

namespace gpfq {

inline constexpr const char* kConfigSchema = "gpfq-experiment/1";

struct WidthSweepConfig {
  std::vector<std::size_t> widths;
  std::size_t trials = 50;
  double slope_target = -1.0;
  double slope_tolerance = 0.25;
};

struct LambdaSweepConfig {
  std::vector<double> lambdas;
  std::vector<VariantKind> variants{VariantKind::Soft, VariantKind::Hard};
  ClusterTaskSpec task;
  TrainSpec train;
  std::size_t calibration = 256;
};

struct ExperimentConfig {
  std::uint64_t seed = kDefaultMasterSeed;
  QuantConfig quant;
  /// Quantize reuses delta= recorded in an input manifest.
  bool reuse_delta = true;
  /// Values of C tried by the sweep-c command.
  std::vector<double> C_grid;
  std::optional<DistributionSpec> data;
  TrialConfig trial;
  std::optional<WidthSweepConfig> width_sweep;
  std::optional<LambdaSweepConfig> lambda_sweep;
  std::vector<int> criteria;
  std::string output_dir;
};

/// Throws Config with the JSON path of the first problem.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_text(std::string_view text);

DistributionModel parse_distribution(const nlohmann::json& j, const std::string& path);
nlohmann::json distribution_to_json(const DistributionModel& model);

/// Re-seeds every seeded part of the config from `seed`.
void apply_seed(ExperimentConfig& config, std::uint64_t seed);

}  // namespace gpfq
