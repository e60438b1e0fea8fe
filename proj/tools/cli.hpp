#pragma once

#include <cstdint>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lwdepth/distill.hpp"

namespace lwdepth::cli {

inline constexpr int kSchemaVersion = 1;

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct TrainSection {
  double lambda = 0.1;
  int epochs = 20;
  int batch_size = 8;
  OptimizerConfig optimizer;
  bool lambda_weighted_aux = false;
  std::string network = "teacher";  // train: which model to fit
  bool use_aux_labeled = false;      // train: fit on X and U'
  std::string aux_domain = "matched";  // distill: auxiliary set, matched or ood
};

struct InputsSection {
  std::string data_dir;            // output of generate; empty = generate in process
  std::string teacher_checkpoint;  // distill
  std::string predictions;         // evaluate: directory of PFM files
  std::string ground_truth;        // evaluate: dataset manifest
};

struct MatrixSection {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool include_ood = true;
};

struct SweepSection {
  std::vector<double> multiples{0.0, 0.25, 0.5, 1.0, 2.0, 4.0};  // times |X train|
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double tolerance = 0.01;
};

struct HistogramSection {
  int bins = kDefaultHistogramBins;
  double max_depth = kDefaultHistogramMax;
};

struct Config {
  int schema = kSchemaVersion;
  TrainMode mode = TrainMode::kKdMixedUnlabeled;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  DataConfig data = toy_data();
  ModelConfig teacher = toy_teacher();
  ModelConfig student = toy_student();
  TrainSection train;
  InputsSection inputs;
  MatrixSection matrix;
  SweepSection sweep;
  HistogramSection histogram;
};

nlohmann::json to_json(const Config& c);
/// Strict parse: unknown keys and schema mismatches raise ConfigError.
/// Missing keys keep their defaults.
Config config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=VALUE". VALUE is read as JSON when it parses, otherwise
/// as a string. Every path component must already exist.
void apply_override(nlohmann::json& doc, const std::string& assignment);

ExperimentConfig experiment_config(const Config& c);

/// Entry point; returns the process exit code. Errors are reported as one
/// JSON object on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lwdepth::cli
