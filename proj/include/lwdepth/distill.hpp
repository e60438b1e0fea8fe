#pragma once

#include <cstdint>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "lwdepth/datamodel.hpp"
#include "lwdepth/metrics.hpp"
#include "lwdepth/models.hpp"

namespace lwdepth {

enum class TrainMode {
  kSupervised,
  kKdStandard,        // lambda * L(s, t) + (1 - lambda) * L(s, g) over X
  kKdAuxOnly,         // lambda * L(s, t) over unlabeled U only
  kKdMixedUnlabeled,  // kd_standard over X plus L(s, t) over U
  kKdMixedLabeled,    // kd_standard over X and over labeled U'
};

std::string to_string(TrainMode m);
TrainMode train_mode_from_string(const std::string& s);

struct OptimizerConfig {
  double lr0 = 1e-4;
  double weight_decay = 1e-4;  // added to the gradient (coupled)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int lr_drop_every = 5;
  double lr_drop_to = 0.1;
};

struct ExperimentConfig {
  TrainMode mode = TrainMode::kSupervised;
  ModelConfig teacher;
  ModelConfig student;
  double lambda = 0.1;
  int epochs = 20;
  int batch_size = 8;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  bool lambda_weighted_aux = false;
};

void validate(const ExperimentConfig& cfg);
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// Step schedule: lr0 * drop_to^floor(epoch / drop_every).
double lr_schedule(int epoch, double lr0, int drop_every = 5, double drop_to = 0.1);

/// Adam with weight decay folded into the gradient.
class Adam {
 public:
  Adam(std::size_t n, const OptimizerConfig& cfg);
  void step(std::span<float> params, std::span<const float> grads, double lr);
  std::size_t steps() const noexcept { return t_; }

 private:
  OptimizerConfig cfg_;
  std::vector<float> m_, v_;
  std::size_t t_ = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // mean objective over the epoch's steps
  MetricReport eval;
};

struct TrainReport {
  std::string setting;
  TrainMode mode = TrainMode::kSupervised;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::size_t train_samples = 0;
  std::size_t aux_samples = 0;
  std::size_t steps = 0;
  std::vector<EpochRecord> epochs;
  MetricReport final;  // last epoch's held-out metrics
  double wall_seconds = 0.0;
};

/// Full report; wall-clock time only when include_timing is set, so that
/// reruns of a configuration produce byte-identical documents.
nlohmann::json report_json(const TrainReport& r, bool include_timing);
TrainReport report_from_json(const nlohmann::json& j);

/// FNV-1a of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& j);

struct TrainedModel {
  DepthNet<float> net;
  TrainReport report;
};

/// Seed passed to DepthNet::create for a run with experiment seed `seed`.
/// Shared by every setting, so students of one seed start from the same weights.
std::uint64_t model_init_seed(std::uint64_t seed, bool teacher);

using ProgressFn = std::function<void(const std::string& setting, const EpochRecord&)>;

/// Supervised training of cfg.teacher on the union of `train` handles.
/// Every handle must be labeled.
TrainedModel train_teacher(const ExperimentConfig& cfg, const std::vector<DatasetHandle>& train,
                           const DatasetHandle& eval, const std::string& setting = "teacher",
                           const ProgressFn& progress = {});

/// Trains cfg.student with the objective selected by cfg.mode.
///   supervised, kd_standard: x (labeled)
///   kd_aux_only: aux (must be unlabeled); x is not read
///   kd_mixed_unlabeled: x (labeled) and aux (unlabeled)
///   kd_mixed_labeled: x and aux (both labeled)
/// The teacher is only read; it is required by every KD mode.
TrainedModel train_student(const ExperimentConfig& cfg, const DepthNet<float>* teacher,
                           const DatasetHandle& x, const DatasetHandle& aux,
                           const DatasetHandle& eval, const std::string& setting = "student",
                           const ProgressFn& progress = {});

/// Metrics of a model over every sample of a labeled dataset.
MetricReport evaluate_model(const DepthNet<float>& net, const DatasetHandle& ds,
                            int batch_size = 32);

/// Predicted depth maps, one per sample.
std::vector<Image> predict(const DepthNet<float>& net, const DatasetHandle& ds,
                           int batch_size = 32);

// --- experiment drivers -------------------------------------------------------

struct DataConfig {
  std::size_t n_original = 2500;  // X before the held-out split
  std::size_t n_aux = 2500;       // U / U'
  std::size_t n_ood = 2500;       // U_ood
  double holdout_fraction = 0.1;
  DomainOptions domain;
};

void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);

struct ExperimentData {
  DatasetHandle train;          // X without the held-out part
  DatasetHandle eval;           // held-out X
  DatasetHandle aux_unlabeled;  // U
  DatasetHandle aux_labeled;    // U' (same images as U)
  DatasetHandle ood_unlabeled;  // U_ood
};

/// Domains of one experiment seed.
Domains make_domains(const DataConfig& cfg, std::uint64_t seed);
/// Seeded train / held-out split of d.original; auxiliary sets pass through.
ExperimentData make_experiment_data(const Domains& d, double holdout_fraction,
                                    std::uint64_t seed);
/// make_experiment_data(make_domains(cfg, seed), cfg.holdout_fraction, seed).
ExperimentData prepare_data(const DataConfig& cfg, std::uint64_t seed);

/// Setting names used in matrix output.
namespace settings {
inline constexpr const char* kTeacherX = "teacher_x";
inline constexpr const char* kTeacherXU = "teacher_xu";
inline constexpr const char* kStudentSupervised = "student_supervised";
inline constexpr const char* kSetting1 = "kd_setting1";
inline constexpr const char* kSetting2 = "kd_setting2";
inline constexpr const char* kSetting3 = "kd_setting3";
inline constexpr const char* kSetting4 = "kd_setting4";
inline constexpr const char* kSetting2Ood = "kd_setting2_ood";
}  // namespace settings

struct MatrixOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2};
  bool include_ood = true;  // adds kd_setting2_ood
};

/// All runs for every seed. Data is regenerated per seed from
/// derive_seed(seed, ...); base.seed is ignored.
std::vector<TrainReport> run_matrix(const ExperimentConfig& base, const DataConfig& data,
                                    const MatrixOptions& opts, const ProgressFn& progress = {});

struct SweepPoint {
  std::uint64_t seed = 0;
  std::size_t aux_size = 0;
  TrainReport report;
};

/// Setting 3 repeated over auxiliary subset sizes (first n of U). Needs
/// data.n_aux >= max(sizes).
std::vector<SweepPoint> aux_size_sweep(const ExperimentConfig& base, const DataConfig& data,
                                       const std::vector<std::size_t>& sizes,
                                       const std::vector<std::uint64_t>& seeds,
                                       const ProgressFn& progress = {});

// --- desk-scale presets --------------------------------------------------------

/// Encoder widths 8..64 with one conv per stage, compress 4, head width 8.
/// ReLU biases start at 0.1 and the last head conv at zero weights, output
/// bias 3 m; narrow heads otherwise tend to lose every ReLU unit early.
ModelConfig toy_student();
/// Encoder twice as wide and twice as deep as toy_student; compress 8, head width 16,
/// last head conv scaled by 0.01 instead of zeroed.
ModelConfig toy_teacher();
/// toy_student / toy_teacher trained with lr0 1e-3; everything else default.
ExperimentConfig toy_experiment();
/// 2500 X samples split 2000 / 500, 2000 each of U, U' and U_ood.
DataConfig toy_data();

/// Median of a per-seed statistic.
double median(std::vector<double> v);

// CSV with columns setting,seed,epoch,loss,rmse,rel,delta1.
std::string csv_header();
std::string csv_row(const std::string& setting, std::uint64_t seed, const EpochRecord& e);
/// Final epoch of each report.
std::string matrix_csv(const std::vector<TrainReport>& reports);
/// Every epoch of each report.
std::string curves_csv(const std::vector<TrainReport>& reports);

}  // namespace lwdepth
