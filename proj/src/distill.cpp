#include "lwdepth/distill.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lwdepth/error.hpp"
#include "lwdepth/json_util.hpp"
#include "lwdepth/losses.hpp"
#include "lwdepth/rng.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace lwdepth {

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kSupervised: return "supervised";
    case TrainMode::kKdStandard: return "kd_standard";
    case TrainMode::kKdAuxOnly: return "kd_aux_only";
    case TrainMode::kKdMixedUnlabeled: return "kd_mixed_unlabeled";
    case TrainMode::kKdMixedLabeled: return "kd_mixed_labeled";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
  for (auto m : {TrainMode::kSupervised, TrainMode::kKdStandard, TrainMode::kKdAuxOnly,
                 TrainMode::kKdMixedUnlabeled, TrainMode::kKdMixedLabeled}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown training mode '" + s + "'");
}

void validate(const ExperimentConfig& c) {
  validate(c.teacher);
  validate(c.student);
  if (!(c.lambda >= 0.0 && c.lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  const auto& o = c.optimizer;
  if (!(o.lr0 > 0.0)) throw ConfigError("optimizer.lr0 must be > 0");
  if (!(o.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0) || !(o.beta2 >= 0.0 && o.beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(o.epsilon > 0.0)) throw ConfigError("optimizer.epsilon must be > 0");
  if (o.lr_drop_every < 1) throw ConfigError("optimizer.lr_drop_every must be >= 1");
  if (!(o.lr_drop_to > 0.0 && o.lr_drop_to <= 1.0)) {
    throw ConfigError("optimizer.lr_drop_to must lie in (0, 1]");
  }
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = {{"lr0", c.lr0},
       {"weight_decay", c.weight_decay},
       {"betas", {c.beta1, c.beta2}},
       {"epsilon", c.epsilon},
       {"lr_drop_every", c.lr_drop_every},
       {"lr_drop_to", c.lr_drop_to}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  require_known_keys(j, {"lr0", "weight_decay", "betas", "epsilon", "lr_drop_every", "lr_drop_to"},
                     "optimizer");
  c.lr0 = j.value("lr0", c.lr0);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw ConfigError("optimizer.betas must be [b1, b2]");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  c.epsilon = j.value("epsilon", c.epsilon);
  c.lr_drop_every = j.value("lr_drop_every", c.lr_drop_every);
  c.lr_drop_to = j.value("lr_drop_to", c.lr_drop_to);
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"mode", to_string(c.mode)},
       {"teacher", c.teacher},
       {"student", c.student},
       {"lambda", c.lambda},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"optimizer", c.optimizer},
       {"seed", c.seed},
       {"lambda_weighted_aux", c.lambda_weighted_aux}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  require_known_keys(j,
                     {"mode", "teacher", "student", "lambda", "epochs", "batch_size",
                      "optimizer", "seed", "lambda_weighted_aux"},
                     "train");
  if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("teacher")) j.at("teacher").get_to(c.teacher);
  if (j.contains("student")) j.at("student").get_to(c.student);
  c.lambda = j.value("lambda", c.lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("optimizer")) j.at("optimizer").get_to(c.optimizer);
  c.seed = j.value("seed", c.seed);
  c.lambda_weighted_aux = j.value("lambda_weighted_aux", c.lambda_weighted_aux);
}

double lr_schedule(int epoch, double lr0, int drop_every, double drop_to) {
  if (epoch < 0) throw ContractError("epoch must be >= 0");
  if (drop_every < 1) throw ConfigError("lr_drop_every must be >= 1");
  return lr0 * std::pow(drop_to, epoch / drop_every);
}

Adam::Adam(std::size_t n, const OptimizerConfig& cfg) : cfg_(cfg), m_(n, 0.0f), v_(n, 0.0f) {}

void Adam::step(std::span<float> params, std::span<const float> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DimensionError("optimizer state does not match the parameter count");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float wd = static_cast<float>(cfg_.weight_decay);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  const float eps = static_cast<float>(cfg_.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const float g = grads[i] + wd * params[i];
    m_[i] = fb1 * m_[i] + (1.0f - fb1) * g;
    v_[i] = fb2 * v_[i] + (1.0f - fb2) * g * g;
    params[i] -= step * m_[i] / (std::sqrt(v_[i] * inv_c2) + eps);
  }
}

// --- reports --------------------------------------------------------------------

nlohmann::json report_json(const TrainReport& r, bool include_timing) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"lr", e.lr}, {"loss", e.loss}, {"eval", e.eval}});
  }
  nlohmann::json j{{"setting", r.setting},
                   {"mode", to_string(r.mode)},
                   {"seed", r.seed},
                   {"config_hash", r.config_hash},
                   {"train_samples", r.train_samples},
                   {"aux_samples", r.aux_samples},
                   {"steps", r.steps},
                   {"epochs", epochs},
                   {"final", r.final}};
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

TrainReport report_from_json(const nlohmann::json& j) {
  TrainReport r;
  r.setting = j.at("setting").get<std::string>();
  r.mode = train_mode_from_string(j.at("mode").get<std::string>());
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.train_samples = j.at("train_samples").get<std::size_t>();
  r.aux_samples = j.at("aux_samples").get<std::size_t>();
  r.steps = j.at("steps").get<std::size_t>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord rec;
    rec.epoch = e.at("epoch").get<int>();
    rec.lr = e.at("lr").get<double>();
    rec.loss = e.at("loss").get<double>();
    rec.eval = e.at("eval").get<MetricReport>();
    r.epochs.push_back(rec);
  }
  r.final = j.at("final").get<MetricReport>();
  r.wall_seconds = j.value("wall_seconds", 0.0);
  return r;
}

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// --- training -------------------------------------------------------------------

std::uint64_t model_init_seed(std::uint64_t seed, bool teacher) {
  return derive_seed(seed, teacher ? 0x7eac : 0x5717);
}

namespace {

// Subnormal floats appear once the learning rate has dropped and slow every
// kernel by an order of magnitude; they are flushed to zero while a model
// trains or predicts.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

// Dataset contents as batch-major tensors.
struct TensorSet {
  Tensor<float> rgb;             // N x C x H x W
  Tensor<float> depth;           // N x 1 x h x w, empty when unlabeled
  Tensor<std::uint8_t> mask;     // N x 1 x h x w, empty when unlabeled

  int size() const { return rgb.batch(); }
  bool labeled() const { return !depth.empty(); }
};

TensorSet to_tensors(const std::vector<DatasetHandle>& handles, bool with_labels) {
  std::size_t n = 0;
  for (const auto& h : handles) {
    n += h.size();
    if (with_labels && !h.labeled()) {
      throw ContractError("dataset '" + h.domain_tag() + "' is unlabeled");
    }
  }
  TensorSet ts;
  if (n == 0) return ts;
  const DatasetHandle* first = nullptr;
  for (const auto& h : handles) {
    if (!h.empty()) {
      first = &h;
      break;
    }
  }
  const Image& r0 = first->rgb(0);
  ts.rgb = Tensor<float>(static_cast<int>(n), r0.channels, r0.height, r0.width);
  if (with_labels) {
    const Image& d0 = first->depth(0);
    ts.depth = Tensor<float>(static_cast<int>(n), 1, d0.height, d0.width);
    ts.mask = Tensor<std::uint8_t>(static_cast<int>(n), 1, d0.height, d0.width);
  }
  int k = 0;
  for (const auto& h : handles) {
    for (std::size_t i = 0; i < h.size(); ++i, ++k) {
      const Image& rgb = h.rgb(i);
      if (rgb.height != ts.rgb.height() || rgb.width != ts.rgb.width() ||
          rgb.channels != ts.rgb.channels()) {
        throw DimensionError("training images must share one size");
      }
      for (int c = 0; c < rgb.channels; ++c) {
        float* dst = ts.rgb.plane(k, c);
        for (int y = 0; y < rgb.height; ++y)
          for (int x = 0; x < rgb.width; ++x) dst[y * rgb.width + x] = rgb.at(y, x, c);
      }
      if (with_labels) {
        const Image& d = h.depth(i);
        const Mask& m = h.valid_mask(i);
        if (d.height != ts.depth.height() || d.width != ts.depth.width()) {
          throw DimensionError("depth maps must share one size");
        }
        std::copy(d.pixels.begin(), d.pixels.end(), ts.depth.plane(k, 0));
        std::copy(m.valid.begin(), m.valid.end(), ts.mask.plane(k, 0));
      }
    }
  }
  return ts;
}

template <typename T>
Tensor<T> gather(const Tensor<T>& src, const std::vector<int>& idx) {
  Tensor<T> out(static_cast<int>(idx.size()), src.channels(), src.height(), src.width());
  const std::size_t n = src.sample_size();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(src.sample(idx[i]), n, out.sample(static_cast<int>(i)));
  }
  return out;
}

Tensor<float> forward_all(const DepthNet<float>& net, const Tensor<float>& rgb, int batch) {
  Tensor<float> out;
  for (int b0 = 0; b0 < rgb.batch(); b0 += batch) {
    const int b1 = std::min(rgb.batch(), b0 + batch);
    std::vector<int> idx(static_cast<std::size_t>(b1 - b0));
    for (int i = b0; i < b1; ++i) idx[static_cast<std::size_t>(i - b0)] = i;
    Tensor<float> y = net.forward(gather(rgb, idx));
    if (out.empty()) out = Tensor<float>(rgb.batch(), 1, y.height(), y.width());
    std::copy_n(y.data(), y.size(), out.sample(b0));
  }
  return out;
}

MetricReport evaluate_tensors(const DepthNet<float>& net, const TensorSet& ts) {
  if (!ts.labeled()) throw ContractError("evaluation needs a labeled dataset");
  Tensor<float> pred = forward_all(net, ts.rgb, 32);
  if (!pred.same_shape(ts.depth)) {
    throw DimensionError("prediction " + pred.shape_string() + " vs ground truth " +
                         ts.depth.shape_string());
  }
  return evaluate(pred.span(), ts.depth.span(), ts.mask.span());
}

std::vector<int> permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    std::swap(p[static_cast<std::size_t>(i)], p[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  return p;
}

// Seed streams shared by every setting so that runs with the same
// experiment seed start from the same weights and visit data in the same order.
constexpr std::uint64_t kPrimaryOrder = 0x0de7;
constexpr std::uint64_t kAuxDraw = 0xa0c5;

struct Stream {
  const TensorSet* data = nullptr;
  const Tensor<float>* teacher = nullptr;  // cached teacher predictions
};

TrainedModel run_training(const ExperimentConfig& cfg, const ModelConfig& model_cfg,
                          bool teacher, TrainMode mode, const Stream& primary,
                          const Stream& aux, const TensorSet& eval, const std::string& setting,
                          const ProgressFn& progress) {
  const auto t0 = std::chrono::steady_clock::now();
  TrainedModel out;
  out.net = DepthNet<float>::create(model_cfg, model_init_seed(cfg.seed, teacher));
  auto& net = out.net;
  TrainReport& rep = out.report;
  rep.setting = setting;
  rep.mode = mode;
  rep.seed = cfg.seed;
  rep.train_samples = primary.data ? static_cast<std::size_t>(primary.data->size()) : 0;
  rep.aux_samples = aux.data ? static_cast<std::size_t>(aux.data->size()) : 0;
  {
    nlohmann::json h{{"experiment", cfg},
                     {"model", model_cfg},
                     {"mode", to_string(mode)},
                     {"setting", setting},
                     {"train_samples", rep.train_samples},
                     {"aux_samples", rep.aux_samples}};
    rep.config_hash = config_hash(h);
  }

  Adam adam(net.num_parameters(), cfg.optimizer);
  const float lambda = static_cast<float>(cfg.lambda);
  KdOptions kd_opts;
  kd_opts.lambda_weighted_aux = cfg.lambda_weighted_aux;
  const bool use_aux = mode == TrainMode::kKdMixedUnlabeled || mode == TrainMode::kKdMixedLabeled;
  const bool has_aux = use_aux && aux.data && aux.data->size() > 0;
  const int bs = cfg.batch_size;
  const int n = primary.data ? primary.data->size() : 0;

  ForwardTape<float> tape_x, tape_u;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.optimizer.lr0, cfg.optimizer.lr_drop_every,
                                  cfg.optimizer.lr_drop_to);
    const auto order = permutation(n, derive_seed(cfg.seed, kPrimaryOrder,
                                                  static_cast<std::uint64_t>(epoch)));
    Rng aux_rng(derive_seed(cfg.seed, kAuxDraw, static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t n_steps = 0;
    for (int b0 = 0; b0 < n; b0 += bs) {
      const std::vector<int> idx(order.begin() + b0, order.begin() + std::min(n, b0 + bs));
      const TensorSet& P = *primary.data;
      Tensor<float> rgb = gather(P.rgb, idx);
      Tensor<float> s = net.forward(rgb, tape_x);
      Tensor<float> gs(s.batch(), 1, s.height(), s.width());
      Tensor<float> t, g;
      Tensor<std::uint8_t> m;
      if (primary.teacher) t = gather(*primary.teacher, idx);
      if (P.labeled()) {
        g = gather(P.depth, idx);
        m = gather(P.mask, idx);
      }
      float loss = 0.0f;
      net.zero_grad();
      if (mode == TrainMode::kKdAuxOnly) {
        KdBatch<float> u{&s, &t, nullptr, nullptr};
        loss = kd_unlabeled_only(u, lambda, &gs);
      } else {
        KdBatch<float> x{&s, primary.teacher ? &t : nullptr, &g, &m};
        const float lam = mode == TrainMode::kSupervised ? 0.0f : lambda;
        if (!has_aux) {
          loss = kd_standard(x, lam, &gs);
        } else {
          std::vector<int> aidx(idx.size());
          for (auto& a : aidx) {
            a = static_cast<int>(aux_rng.below(static_cast<std::uint64_t>(aux.data->size())));
          }
          Tensor<float> su = net.forward(gather(aux.data->rgb, aidx), tape_u);
          Tensor<float> gu(su.batch(), 1, su.height(), su.width());
          Tensor<float> tu = gather(*aux.teacher, aidx);
          if (mode == TrainMode::kKdMixedUnlabeled) {
            KdBatch<float> u{&su, &tu, nullptr, nullptr};
            loss = kd_mixed_unlabeled(x, u, lam, &gs, &gu, kd_opts);
          } else {
            Tensor<float> guv = gather(aux.data->depth, aidx);
            Tensor<std::uint8_t> mu = gather(aux.data->mask, aidx);
            KdBatch<float> u{&su, &tu, &guv, &mu};
            loss = kd_mixed_labeled(x, u, lam, &gs, &gu);
          }
          net.backward(tape_u, gu);
        }
      }
      if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss in '" + setting + "' at epoch " +
                           std::to_string(epoch));
      }
      net.backward(tape_x, gs);
      adam.step(net.parameters(), net.gradients(), lr);
      loss_sum += loss;
      ++n_steps;
    }
    for (float v : net.parameters()) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite weights in '" + setting + "' at epoch " +
                           std::to_string(epoch));
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.loss = n_steps ? loss_sum / static_cast<double>(n_steps) : 0.0;
    rec.eval = evaluate_tensors(net, eval);
    rep.epochs.push_back(rec);
    if (progress) progress(setting, rec);
  }
  rep.steps = adam.steps();
  rep.final = rep.epochs.empty() ? evaluate_tensors(net, eval) : rep.epochs.back().eval;
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void check_output_geometry(const ModelConfig& a, const ModelConfig& b) {
  if (a.input_channels != b.input_channels) {
    throw ConfigError("teacher and student must read the same input channels");
  }
}

}  // namespace

TrainedModel train_teacher(const ExperimentConfig& cfg, const std::vector<DatasetHandle>& train,
                           const DatasetHandle& eval, const std::string& setting,
                           const ProgressFn& progress) {
  FlushDenormals ftz;
  validate(cfg);
  for (const auto& h : train) {
    if (!h.labeled()) throw ContractError("teacher training needs labeled data");
  }
  const TensorSet x = to_tensors(train, true);
  if (x.size() == 0) throw DataError("teacher training set is empty");
  const TensorSet ev = to_tensors({eval}, true);
  return run_training(cfg, cfg.teacher, true, TrainMode::kSupervised, {&x, nullptr},
                      {}, ev, setting, progress);
}

TrainedModel train_student(const ExperimentConfig& cfg, const DepthNet<float>* teacher,
                           const DatasetHandle& x, const DatasetHandle& aux,
                           const DatasetHandle& eval, const std::string& setting,
                           const ProgressFn& progress) {
  FlushDenormals ftz;
  validate(cfg);
  const TrainMode mode = cfg.mode;
  if (mode != TrainMode::kSupervised) {
    if (teacher == nullptr) {
      throw ContractError("mode " + to_string(mode) + " needs a teacher");
    }
    check_output_geometry(teacher->config(), cfg.student);
  }
  const TensorSet ev = to_tensors({eval}, true);

  TensorSet xs, us;
  Tensor<float> tx, tu;
  Stream primary, secondary;
  switch (mode) {
    case TrainMode::kSupervised:
    case TrainMode::kKdStandard:
      if (!x.labeled()) throw ContractError(to_string(mode) + " needs labeled training data");
      xs = to_tensors({x}, true);
      primary = {&xs, nullptr};
      break;
    case TrainMode::kKdAuxOnly:
      if (aux.labeled()) throw ContractError("kd_aux_only takes an unlabeled auxiliary set");
      us = to_tensors({aux}, false);
      primary = {&us, nullptr};
      break;
    case TrainMode::kKdMixedUnlabeled:
      if (!x.labeled()) throw ContractError(to_string(mode) + " needs labeled training data");
      if (aux.labeled()) {
        throw ContractError("kd_mixed_unlabeled takes the unlabeled auxiliary set");
      }
      xs = to_tensors({x}, true);
      us = to_tensors({aux}, false);
      primary = {&xs, nullptr};
      secondary = {&us, nullptr};
      break;
    case TrainMode::kKdMixedLabeled:
      if (!x.labeled()) throw ContractError(to_string(mode) + " needs labeled training data");
      if (!aux.empty() && !aux.labeled()) {
        throw ContractError("kd_mixed_labeled needs a labeled auxiliary set");
      }
      xs = to_tensors({x}, true);
      us = to_tensors({aux}, !aux.empty());
      primary = {&xs, nullptr};
      secondary = {&us, nullptr};
      break;
  }
  if (primary.data->size() == 0) throw DataError("training set for '" + setting + "' is empty");
  if (mode != TrainMode::kSupervised) {
    // The teacher is frozen, so its predictions are computed once.
    tx = forward_all(*teacher, primary.data->rgb, 32);
    primary.teacher = &tx;
    if (secondary.data && secondary.data->size() > 0) {
      tu = forward_all(*teacher, secondary.data->rgb, 32);
      secondary.teacher = &tu;
    }
  }
  return run_training(cfg, cfg.student, false, mode, primary, secondary, ev, setting,
                      progress);
}

MetricReport evaluate_model(const DepthNet<float>& net, const DatasetHandle& ds, int batch_size) {
  FlushDenormals ftz;
  const TensorSet ts = to_tensors({ds}, true);
  if (ts.size() == 0) throw DataError("cannot evaluate on an empty dataset");
  Tensor<float> pred = forward_all(net, ts.rgb, batch_size);
  if (!pred.same_shape(ts.depth)) {
    throw DimensionError("prediction " + pred.shape_string() + " vs ground truth " +
                         ts.depth.shape_string());
  }
  return evaluate(pred.span(), ts.depth.span(), ts.mask.span());
}

std::vector<Image> predict(const DepthNet<float>& net, const DatasetHandle& ds, int batch_size) {
  FlushDenormals ftz;
  const TensorSet ts = to_tensors({ds.unlabeled()}, false);
  std::vector<Image> out;
  if (ts.size() == 0) return out;
  Tensor<float> pred = forward_all(net, ts.rgb, batch_size);
  for (int i = 0; i < pred.batch(); ++i) {
    Image img(pred.height(), pred.width(), 1);
    std::copy_n(pred.sample(i), pred.sample_size(), img.pixels.begin());
    out.push_back(std::move(img));
  }
  return out;
}

// --- experiment drivers -----------------------------------------------------------

void to_json(nlohmann::json& j, const DataConfig& c) {
  const auto& d = c.domain;
  j = {{"n_original", c.n_original},
       {"n_aux", c.n_aux},
       {"n_ood", c.n_ood},
       {"holdout_fraction", c.holdout_fraction},
       {"image_size", {d.image_size.height, d.image_size.width}},
       {"depth_size", {d.depth_size.height, d.depth_size.width}},
       {"depth_range", {d.depth_range.min_m, d.depth_range.max_m}},
       {"wall_range", {d.wall_min, d.wall_max}},
       {"max_boxes", d.max_boxes},
       {"matched_scale", {d.matched_scale_min, d.matched_scale_max}},
       {"ood_scale", {d.ood_scale_min, d.ood_scale_max}}};
}

namespace {
std::pair<double, double> read_pair(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 2) {
    throw ConfigError(std::string("data.") + key + " must be a two-element array");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}
}  // namespace

void from_json(const nlohmann::json& j, DataConfig& c) {
  require_known_keys(j,
                     {"n_original", "n_aux", "n_ood", "holdout_fraction", "image_size",
                      "depth_size", "depth_range", "wall_range", "max_boxes", "matched_scale",
                      "ood_scale"},
                     "data");
  auto& d = c.domain;
  c.n_original = j.value("n_original", c.n_original);
  c.n_aux = j.value("n_aux", c.n_aux);
  c.n_ood = j.value("n_ood", c.n_ood);
  c.holdout_fraction = j.value("holdout_fraction", c.holdout_fraction);
  if (j.contains("image_size")) {
    auto [h, w] = read_pair(j, "image_size");
    d.image_size = {static_cast<int>(h), static_cast<int>(w)};
  }
  if (j.contains("depth_size")) {
    auto [h, w] = read_pair(j, "depth_size");
    d.depth_size = {static_cast<int>(h), static_cast<int>(w)};
  }
  if (j.contains("depth_range")) std::tie(d.depth_range.min_m, d.depth_range.max_m) = read_pair(j, "depth_range");
  if (j.contains("wall_range")) std::tie(d.wall_min, d.wall_max) = read_pair(j, "wall_range");
  d.max_boxes = j.value("max_boxes", d.max_boxes);
  if (j.contains("matched_scale")) {
    std::tie(d.matched_scale_min, d.matched_scale_max) = read_pair(j, "matched_scale");
  }
  if (j.contains("ood_scale")) std::tie(d.ood_scale_min, d.ood_scale_max) = read_pair(j, "ood_scale");
  if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) {
    throw ConfigError("data.holdout_fraction must lie in (0, 1)");
  }
}

ExperimentData make_experiment_data(const Domains& d, double holdout_fraction,
                                    std::uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("data.holdout_fraction must lie in (0, 1)");
  }
  auto [train, eval] = d.original.split(holdout_fraction, derive_seed(seed, 0x5e1));
  if (train.empty() || eval.empty()) {
    throw ConfigError("the original set is too small for the held-out split");
  }
  return {train, eval, d.aux_unlabeled, d.aux_labeled, d.ood_unlabeled};
}

Domains make_domains(const DataConfig& cfg, std::uint64_t seed) {
  return make_domains(cfg.n_original, cfg.n_aux, cfg.n_ood, derive_seed(seed, 0xda7a),
                      cfg.domain);
}

ExperimentData prepare_data(const DataConfig& cfg, std::uint64_t seed) {
  return make_experiment_data(make_domains(cfg, seed), cfg.holdout_fraction, seed);
}

std::vector<TrainReport> run_matrix(const ExperimentConfig& base, const DataConfig& data,
                                    const MatrixOptions& opts, const ProgressFn& progress) {
  validate(base);
  std::vector<TrainReport> out;
  for (std::uint64_t seed : opts.seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const ExperimentData d = prepare_data(data, seed);
    auto run = [&](TrainMode mode, const DepthNet<float>* teacher, const DatasetHandle& aux,
                   const char* name) {
      ExperimentConfig c = cfg;
      c.mode = mode;
      out.push_back(train_student(c, teacher, d.train, aux, d.eval, name, progress).report);
    };
    TrainedModel tx = train_teacher(cfg, {d.train}, d.eval, settings::kTeacherX, progress);
    out.push_back(tx.report);
    TrainedModel txu =
        train_teacher(cfg, {d.train, d.aux_labeled}, d.eval, settings::kTeacherXU, progress);
    out.push_back(txu.report);
    run(TrainMode::kSupervised, nullptr, {}, settings::kStudentSupervised);
    run(TrainMode::kKdStandard, &tx.net, {}, settings::kSetting1);
    run(TrainMode::kKdAuxOnly, &tx.net, d.aux_unlabeled, settings::kSetting2);
    run(TrainMode::kKdMixedUnlabeled, &tx.net, d.aux_unlabeled, settings::kSetting3);
    run(TrainMode::kKdMixedLabeled, &txu.net, d.aux_labeled, settings::kSetting4);
    if (opts.include_ood) run(TrainMode::kKdAuxOnly, &tx.net, d.ood_unlabeled, settings::kSetting2Ood);
  }
  return out;
}

std::vector<SweepPoint> aux_size_sweep(const ExperimentConfig& base, const DataConfig& data,
                                       const std::vector<std::size_t>& sizes,
                                       const std::vector<std::uint64_t>& seeds,
                                       const ProgressFn& progress) {
  validate(base);
  for (std::size_t s : sizes) {
    if (s > data.n_aux) {
      throw ConfigError("sweep size " + std::to_string(s) + " exceeds data.n_aux = " +
                        std::to_string(data.n_aux));
    }
  }
  std::vector<SweepPoint> out;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const ExperimentData d = prepare_data(data, seed);
    TrainedModel tx = train_teacher(cfg, {d.train}, d.eval, settings::kTeacherX, progress);
    cfg.mode = TrainMode::kKdMixedUnlabeled;
    for (std::size_t s : sizes) {
      const std::string name = "sweep_aux_" + std::to_string(s);
      auto r = train_student(cfg, &tx.net, d.train, d.aux_unlabeled.head(s), d.eval, name,
                             progress);
      out.push_back({seed, s, std::move(r.report)});
    }
  }
  return out;
}

ModelConfig toy_student() {
  ModelConfig m;
  m.backbone.name = "toy_student";
  m.backbone.channels = {8, 16, 24, 32, 64};
  m.backbone.convs_per_stage = 1;
  m.decoder.compress_channels = 4;
  m.decoder.head_hidden_channels = 8;
  m.output_bias_init = 3.0;
  m.relu_bias_init = 0.1;
  m.output_weight_scale = 0.0;
  return m;
}

ModelConfig toy_teacher() {
  ModelConfig m = toy_student();
  m.backbone.name = "toy_teacher";
  m.backbone.channels = {16, 32, 48, 64, 128};
  m.backbone.convs_per_stage = 2;
  m.decoder.compress_channels = 8;
  m.decoder.head_hidden_channels = 16;
  // a zero last conv let the wider head die within the first steps
  m.output_weight_scale = 0.01;
  return m;
}

ExperimentConfig toy_experiment() {
  ExperimentConfig c;
  c.teacher = toy_teacher();
  c.student = toy_student();
  c.optimizer.lr0 = 1e-3;
  return c;
}

DataConfig toy_data() {
  DataConfig d;
  d.n_original = 2500;
  d.n_aux = 2000;
  d.n_ood = 2000;
  d.holdout_fraction = 0.2;
  return d;
}

double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string csv_header() { return "setting,seed,epoch,loss,rmse,rel,delta1\n"; }

std::string csv_row(const std::string& setting, std::uint64_t seed, const EpochRecord& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%llu,%d,%.9g,%.9g,%.9g,%.9g\n", setting.c_str(),
                static_cast<unsigned long long>(seed), e.epoch, e.loss, e.eval.rmse,
                e.eval.rel, e.eval.delta1);
  return buf;
}

std::string matrix_csv(const std::vector<TrainReport>& reports) {
  std::string s = csv_header();
  for (const auto& r : reports) {
    if (r.epochs.empty()) {
      EpochRecord e;
      e.epoch = -1;
      e.eval = r.final;
      s += csv_row(r.setting, r.seed, e);
    } else {
      s += csv_row(r.setting, r.seed, r.epochs.back());
    }
  }
  return s;
}

std::string curves_csv(const std::vector<TrainReport>& reports) {
  std::string s = csv_header();
  for (const auto& r : reports) {
    for (const auto& e : r.epochs) s += csv_row(r.setting, r.seed, e);
  }
  return s;
}

}  // namespace lwdepth
