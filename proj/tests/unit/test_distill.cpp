#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lwdepth/distill.hpp"
#include "lwdepth/error.hpp"

namespace lwdepth {
namespace {

// Small, fast setup shared by the training tests.
struct Fixture {
  ExperimentConfig cfg;
  ExperimentData data;
  DepthNet<float> teacher;

  explicit Fixture(std::uint64_t seed = 0, int epochs = 2) {
    cfg = toy_experiment();
    cfg.epochs = epochs;
    cfg.seed = seed;
    DataConfig d;
    d.n_original = 40;
    d.n_aux = 24;
    d.n_ood = 16;
    d.holdout_fraction = 0.2;
    data = prepare_data(d, seed);
    ExperimentConfig tc = cfg;
    tc.epochs = 1;
    teacher = train_teacher(tc, {data.train}, data.eval).net;
  }

  TrainedModel student(TrainMode mode, double lambda = 0.1) const {
    ExperimentConfig c = cfg;
    c.mode = mode;
    c.lambda = lambda;
    const DatasetHandle& aux = mode == TrainMode::kKdMixedLabeled ? data.aux_labeled
                                                                  : data.aux_unlabeled;
    return train_student(c, mode == TrainMode::kSupervised ? nullptr : &teacher, data.train,
                         aux, data.eval);
  }
};

std::vector<double> losses(const TrainReport& r) {
  std::vector<double> v;
  for (const auto& e : r.epochs) v.push_back(e.loss);
  return v;
}

bool same_weights(const DepthNet<float>& a, const DepthNet<float>& b) {
  return std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin(),
                    b.parameters().end());
}

TEST(LrSchedule, Examples) {
  EXPECT_NEAR(lr_schedule(0, 1e-4), 1e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(4, 1e-4), 1e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(5, 1e-4), 1e-5, 1e-19);
  EXPECT_NEAR(lr_schedule(19, 1e-4), 1e-7, 1e-21);
  EXPECT_THROW(lr_schedule(-1, 1e-4), ContractError);
}

TEST(LrSchedule, PiecewiseConstantWithEpochsOverFiveDrops) {
  for (int epochs : {5, 10, 20, 23}) {
    int drops = 0;
    for (int e = 1; e < epochs; ++e) {
      const double prev = lr_schedule(e - 1, 1e-4), cur = lr_schedule(e, 1e-4);
      if (cur != prev) {
        ++drops;
        EXPECT_NEAR(cur / prev, 0.1, 1e-12);
      }
    }
    EXPECT_EQ(drops, (epochs - 1) / 5) << epochs;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  OptimizerConfig o;
  o.weight_decay = 0.0;
  Adam adam(3, o);
  std::vector<float> p{1.0f, -2.0f, 0.5f};
  const std::vector<float> g{0.3f, -4.0f, 0.0f};
  adam.step(p, g, 1e-2);
  EXPECT_NEAR(p[0], 1.0f - 1e-2f, 1e-6);
  EXPECT_NEAR(p[1], -2.0f + 1e-2f, 1e-6);
  EXPECT_FLOAT_EQ(p[2], 0.5f);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, CoupledWeightDecayActsThroughTheGradient) {
  OptimizerConfig o;
  o.weight_decay = 0.5;
  Adam adam(2, o);
  std::vector<float> p{2.0f, -1.0f};
  const std::vector<float> g{0.0f, 0.0f};
  adam.step(p, g, 1e-2);
  // Normalized step: the decay term alone sets the direction.
  EXPECT_NEAR(p[0], 2.0f - 1e-2f, 1e-6);
  EXPECT_NEAR(p[1], -1.0f + 1e-2f, 1e-6);
}

TEST(Adam, SizeMismatchThrows) {
  Adam adam(2, {});
  std::vector<float> p(3), g(3);
  EXPECT_THROW(adam.step(p, g, 1e-3), DimensionError);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  ExperimentConfig c = toy_experiment();
  c.mode = TrainMode::kKdMixedLabeled;
  c.lambda = 0.25;
  c.seed = 7;
  c.optimizer.beta2 = 0.99;
  const nlohmann::json j = c;
  const ExperimentConfig back = j.get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
}

TEST(ExperimentConfig, RejectsUnknownKeysAndBadValues) {
  nlohmann::json j = toy_experiment();
  j["learning_rate"] = 1.0;
  EXPECT_THROW(j.get<ExperimentConfig>(), ConfigError);
  j = toy_experiment();
  j["optimizer"]["momentum"] = 0.9;
  EXPECT_THROW(j.get<ExperimentConfig>(), ConfigError);
  j = toy_experiment();
  j["mode"] = "distill_everything";
  EXPECT_THROW(j.get<ExperimentConfig>(), ConfigError);

  ExperimentConfig c = toy_experiment();
  c.lambda = 1.5;
  EXPECT_THROW(validate(c), ConfigError);
  c = toy_experiment();
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = toy_experiment();
  c.optimizer.beta1 = 1.0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(TrainMode, StringRoundTrip) {
  for (auto m : {TrainMode::kSupervised, TrainMode::kKdStandard, TrainMode::kKdAuxOnly,
                 TrainMode::kKdMixedUnlabeled, TrainMode::kKdMixedLabeled}) {
    EXPECT_EQ(train_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(train_mode_from_string("kd"), ConfigError);
}

TEST(Presets, TeacherHasAtLeastFourTimesTheStudentParameters) {
  EXPECT_GE(count_parameters(toy_teacher()), 4 * count_parameters(toy_student()));
  const ExperimentConfig c = toy_experiment();
  EXPECT_NO_THROW(validate(c));
  const DataConfig d = toy_data();
  const std::size_t eval = static_cast<std::size_t>(std::lround(d.holdout_fraction * d.n_original));
  EXPECT_GE(d.n_original - eval, 2000u);
  EXPECT_GE(eval, 500u);
}

TEST(ConfigHash, SixteenHexDigitsAndSensitive) {
  const std::string a = config_hash(nlohmann::json{{"a", 1}});
  EXPECT_EQ(a.size(), 16u);
  EXPECT_EQ(a.find_first_not_of("0123456789abcdef"), std::string::npos);
  EXPECT_EQ(a, config_hash(nlohmann::json{{"a", 1}}));
  EXPECT_NE(a, config_hash(nlohmann::json{{"a", 2}}));
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), ContractError);
}

TEST(Csv, HeaderAndRow) {
  EXPECT_EQ(csv_header(), "setting,seed,epoch,loss,rmse,rel,delta1\n");
  EpochRecord e;
  e.epoch = 3;
  e.loss = -0.5;
  e.eval.rmse = 1.25;
  e.eval.rel = 0.125;
  e.eval.delta1 = 0.75;
  EXPECT_EQ(csv_row("kd_setting1", 2, e), "kd_setting1,2,3,-0.5,1.25,0.125,0.75\n");
}

TEST(Training, ZeroEpochsReturnsInitialWeights) {
  Fixture f(0, 0);
  for (auto mode : {TrainMode::kSupervised, TrainMode::kKdMixedUnlabeled}) {
    const TrainedModel m = f.student(mode);
    const auto init = DepthNet<float>::create(f.cfg.student, model_init_seed(f.cfg.seed, false));
    EXPECT_TRUE(same_weights(m.net, init));
    EXPECT_TRUE(m.report.epochs.empty());
    EXPECT_EQ(m.report.steps, 0u);
  }
  ExperimentConfig tc = f.cfg;
  const TrainedModel t = train_teacher(tc, {f.data.train}, f.data.eval);
  EXPECT_TRUE(same_weights(t.net, DepthNet<float>::create(tc.teacher, model_init_seed(0, true))));
}

TEST(Training, SameConfigAndSeedGiveIdenticalCurves) {
  Fixture f;
  for (auto mode : {TrainMode::kKdStandard, TrainMode::kKdMixedUnlabeled}) {
    const TrainedModel a = f.student(mode);
    const TrainedModel b = f.student(mode);
    EXPECT_EQ(losses(a.report), losses(b.report));
    EXPECT_TRUE(same_weights(a.net, b.net));
    EXPECT_EQ(report_json(a.report, false).dump(), report_json(b.report, false).dump());
  }
}

TEST(Training, DifferentSeedsGiveDifferentCurves) {
  Fixture a(0), b(1);
  EXPECT_NE(losses(a.student(TrainMode::kSupervised).report),
            losses(b.student(TrainMode::kSupervised).report));
}

TEST(Training, TeacherIsUnchangedByStudentTraining) {
  Fixture f;
  const std::vector<float> before(f.teacher.parameters().begin(), f.teacher.parameters().end());
  for (auto mode : {TrainMode::kKdStandard, TrainMode::kKdAuxOnly,
                    TrainMode::kKdMixedUnlabeled, TrainMode::kKdMixedLabeled}) {
    f.student(mode);
    EXPECT_TRUE(std::equal(before.begin(), before.end(), f.teacher.parameters().begin(),
                           f.teacher.parameters().end()))
        << to_string(mode);
  }
}

TEST(Training, LambdaZeroKdStandardEqualsSupervised) {
  Fixture f;
  const TrainedModel sup = f.student(TrainMode::kSupervised);
  const TrainedModel kd = f.student(TrainMode::kKdStandard, 0.0);
  EXPECT_EQ(losses(sup.report), losses(kd.report));
  EXPECT_TRUE(same_weights(sup.net, kd.net));
}

TEST(Training, ReportCountsAndEpochRecords) {
  Fixture f(0, 3);
  const TrainedModel m = f.student(TrainMode::kKdMixedUnlabeled);
  const auto& r = m.report;
  EXPECT_EQ(r.train_samples, f.data.train.size());
  EXPECT_EQ(r.aux_samples, f.data.aux_unlabeled.size());
  ASSERT_EQ(r.epochs.size(), 3u);
  const std::size_t per_epoch = (f.data.train.size() + 7) / 8;
  EXPECT_EQ(r.steps, 3 * per_epoch);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(r.epochs[static_cast<std::size_t>(e)].epoch, e);
    EXPECT_DOUBLE_EQ(r.epochs[static_cast<std::size_t>(e)].lr, lr_schedule(e, f.cfg.optimizer.lr0));
  }
  EXPECT_EQ(nlohmann::json(r.final), nlohmann::json(r.epochs.back().eval));
  EXPECT_EQ(nlohmann::json(r.final), nlohmann::json(evaluate_model(m.net, f.data.eval)));
}

TEST(Training, AuxOnlyEpochIsOnePassOverTheAuxiliarySet) {
  Fixture f(0, 1);
  const TrainedModel m = f.student(TrainMode::kKdAuxOnly);
  EXPECT_EQ(m.report.train_samples, f.data.aux_unlabeled.size());
  EXPECT_EQ(m.report.steps, (f.data.aux_unlabeled.size() + 7) / 8);
}

TEST(Training, ReportJsonRoundTrip) {
  Fixture f(0, 1);
  TrainReport r = f.student(TrainMode::kKdStandard).report;
  const nlohmann::json j = report_json(r, true);
  EXPECT_TRUE(j.contains("wall_seconds"));
  EXPECT_FALSE(report_json(r, false).contains("wall_seconds"));
  EXPECT_EQ(report_json(report_from_json(j), true), j);
}

TEST(Training, ModeDatasetContracts) {
  Fixture f(0, 1);
  ExperimentConfig c = f.cfg;
  const auto& d = f.data;
  c.mode = TrainMode::kKdStandard;
  EXPECT_THROW(train_student(c, nullptr, d.train, {}, d.eval), ContractError);
  EXPECT_THROW(train_student(c, &f.teacher, d.aux_unlabeled, {}, d.eval), ContractError);
  c.mode = TrainMode::kKdAuxOnly;
  EXPECT_THROW(train_student(c, &f.teacher, d.train, d.aux_labeled, d.eval), ContractError);
  EXPECT_THROW(train_student(c, &f.teacher, d.train, DatasetHandle{}, d.eval), DataError);
  c.mode = TrainMode::kKdMixedUnlabeled;
  EXPECT_THROW(train_student(c, &f.teacher, d.train, d.aux_labeled, d.eval), ContractError);
  c.mode = TrainMode::kKdMixedLabeled;
  EXPECT_THROW(train_student(c, &f.teacher, d.train, d.aux_unlabeled, d.eval), ContractError);
  c.mode = TrainMode::kSupervised;
  EXPECT_THROW(train_student(c, nullptr, d.train, {}, d.aux_unlabeled), ContractError);
  EXPECT_THROW(train_teacher(c, {d.train, d.aux_unlabeled}, d.eval), ContractError);
  EXPECT_THROW(train_teacher(c, {d.train.head(0)}, d.eval), DataError);
}

TEST(Training, AuxOnlyNeverNeedsLabels) {
  // X is passed unlabeled: a run that touched X ground truth would throw.
  Fixture f(0, 1);
  ExperimentConfig c = f.cfg;
  c.mode = TrainMode::kKdAuxOnly;
  EXPECT_NO_THROW(
      train_student(c, &f.teacher, f.data.train.unlabeled(), f.data.aux_unlabeled, f.data.eval));
}

TEST(Training, DivergenceRaisesNumericError) {
  Fixture f(0, 1);
  ExperimentConfig c = f.cfg;
  c.optimizer.lr0 = 1e30;
  EXPECT_THROW(train_student(c, nullptr, f.data.train, {}, f.data.eval), NumericError);
}

TEST(Training, LossDecreasesOverFirstThreeEpochs) {
  std::vector<double> drop;
  for (std::uint64_t seed : {0, 1, 2}) {
    Fixture f(seed, 3);
    const auto l = losses(f.student(TrainMode::kSupervised).report);
    drop.push_back(l[0] - l[2]);
  }
  EXPECT_GT(median(drop), 0.0);
}

TEST(Training, PrepareDataSplitsAndSizes) {
  DataConfig d;
  d.n_original = 50;
  d.n_aux = 20;
  d.n_ood = 10;
  d.holdout_fraction = 0.2;
  const ExperimentData e = prepare_data(d, 3);
  EXPECT_EQ(e.train.size(), 40u);
  EXPECT_EQ(e.eval.size(), 10u);
  EXPECT_EQ(e.aux_unlabeled.size(), 20u);
  EXPECT_EQ(e.aux_labeled.size(), 20u);
  EXPECT_EQ(e.ood_unlabeled.size(), 10u);
  EXPECT_TRUE(e.train.labeled());
  EXPECT_FALSE(e.aux_unlabeled.labeled());
  EXPECT_FALSE(e.ood_unlabeled.labeled());
  d.holdout_fraction = 0.0;
  EXPECT_THROW(prepare_data(d, 3), ConfigError);
}

TEST(Matrix, RunsEverySettingPerSeed) {
  ExperimentConfig c = toy_experiment();
  c.epochs = 1;
  DataConfig d;
  d.n_original = 20;
  d.n_aux = 8;
  d.n_ood = 8;
  d.holdout_fraction = 0.2;
  MatrixOptions o;
  o.seeds = {4};
  const auto reps = run_matrix(c, d, o);
  const std::vector<std::string> expect{
      settings::kTeacherX, settings::kTeacherXU, settings::kStudentSupervised,
      settings::kSetting1, settings::kSetting2,  settings::kSetting3,
      settings::kSetting4, settings::kSetting2Ood};
  ASSERT_EQ(reps.size(), expect.size());
  for (std::size_t i = 0; i < reps.size(); ++i) {
    EXPECT_EQ(reps[i].setting, expect[i]);
    EXPECT_EQ(reps[i].seed, 4u);
  }
  EXPECT_EQ(reps[1].train_samples, 16u + 8u);
  const std::string csv = matrix_csv(reps);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 8);
}

TEST(Sweep, SizeZeroReducesToSettingOne) {
  ExperimentConfig c = toy_experiment();
  c.epochs = 1;
  DataConfig d;
  d.n_original = 20;
  d.n_aux = 8;
  d.n_ood = 4;
  d.holdout_fraction = 0.2;
  const auto pts = aux_size_sweep(c, d, {0, 8}, {5});
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].aux_size, 0u);
  EXPECT_EQ(pts[1].report.aux_samples, 8u);

  const ExperimentData e = prepare_data(d, 5);
  ExperimentConfig s = c;
  s.seed = 5;
  const auto teacher = train_teacher(s, {e.train}, e.eval);
  s.mode = TrainMode::kKdStandard;
  const auto r1 = train_student(s, &teacher.net, e.train, {}, e.eval);
  EXPECT_EQ(losses(pts[0].report), losses(r1.report));
  EXPECT_THROW(aux_size_sweep(c, d, {9}, {5}), ConfigError);
}

}  // namespace
}  // namespace lwdepth
