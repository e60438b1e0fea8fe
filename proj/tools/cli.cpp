#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "lwdepth/error.hpp"
#include "lwdepth/json_util.hpp"

namespace lwdepth::cli {

namespace fs = std::filesystem;

// --- config -----------------------------------------------------------------------

nlohmann::json to_json(const Config& c) {
  const auto& t = c.train;
  const auto& in = c.inputs;
  return {{"schema", c.schema},
          {"mode", to_string(c.mode)},
          {"output_dir", c.output_dir},
          {"seed", c.seed},
          {"data", c.data},
          {"teacher", c.teacher},
          {"student", c.student},
          {"train",
           {{"lambda", t.lambda},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"optimizer", t.optimizer},
            {"lambda_weighted_aux", t.lambda_weighted_aux},
            {"network", t.network},
            {"use_aux_labeled", t.use_aux_labeled},
            {"aux_domain", t.aux_domain}}},
          {"inputs",
           {{"data_dir", in.data_dir},
            {"teacher_checkpoint", in.teacher_checkpoint},
            {"predictions", in.predictions},
            {"ground_truth", in.ground_truth}}},
          {"matrix", {{"seeds", c.matrix.seeds}, {"include_ood", c.matrix.include_ood}}},
          {"sweep",
           {{"multiples", c.sweep.multiples},
            {"seeds", c.sweep.seeds},
            {"tolerance", c.sweep.tolerance}}},
          {"histogram", {{"bins", c.histogram.bins}, {"max_depth", c.histogram.max_depth}}}};
}

Config config_from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"schema", "mode", "output_dir", "seed", "data", "teacher", "student",
                      "train", "inputs", "matrix", "sweep", "histogram"},
                     "config");
  if (!j.contains("schema")) throw ConfigError("config: missing \"schema\"");
  Config c;
  c.schema = j.at("schema").get<int>();
  if (c.schema != kSchemaVersion) {
    throw ConfigError("config: unsupported schema " + std::to_string(c.schema) +
                      " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (j.contains("mode")) c.mode = train_mode_from_string(j.at("mode").get<std::string>());
  c.output_dir = j.value("output_dir", c.output_dir);
  c.seed = j.value("seed", c.seed);
  if (j.contains("data")) j.at("data").get_to(c.data);
  if (j.contains("teacher")) j.at("teacher").get_to(c.teacher);
  if (j.contains("student")) j.at("student").get_to(c.student);
  if (j.contains("train")) {
    const auto& t = j.at("train");
    require_known_keys(t,
                       {"lambda", "epochs", "batch_size", "optimizer", "lambda_weighted_aux",
                        "network", "use_aux_labeled", "aux_domain"},
                       "train");
    auto& s = c.train;
    s.lambda = t.value("lambda", s.lambda);
    s.epochs = t.value("epochs", s.epochs);
    s.batch_size = t.value("batch_size", s.batch_size);
    if (t.contains("optimizer")) t.at("optimizer").get_to(s.optimizer);
    s.lambda_weighted_aux = t.value("lambda_weighted_aux", s.lambda_weighted_aux);
    s.network = t.value("network", s.network);
    s.use_aux_labeled = t.value("use_aux_labeled", s.use_aux_labeled);
    s.aux_domain = t.value("aux_domain", s.aux_domain);
    if (s.network != "teacher" && s.network != "student") {
      throw ConfigError("train.network must be \"teacher\" or \"student\"");
    }
    if (s.aux_domain != "matched" && s.aux_domain != "ood") {
      throw ConfigError("train.aux_domain must be \"matched\" or \"ood\"");
    }
  }
  if (j.contains("inputs")) {
    const auto& in = j.at("inputs");
    require_known_keys(in, {"data_dir", "teacher_checkpoint", "predictions", "ground_truth"},
                       "inputs");
    auto& s = c.inputs;
    s.data_dir = in.value("data_dir", s.data_dir);
    s.teacher_checkpoint = in.value("teacher_checkpoint", s.teacher_checkpoint);
    s.predictions = in.value("predictions", s.predictions);
    s.ground_truth = in.value("ground_truth", s.ground_truth);
  }
  if (j.contains("matrix")) {
    const auto& m = j.at("matrix");
    require_known_keys(m, {"seeds", "include_ood"}, "matrix");
    if (m.contains("seeds")) c.matrix.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    c.matrix.include_ood = m.value("include_ood", c.matrix.include_ood);
    if (c.matrix.seeds.empty()) throw ConfigError("matrix.seeds must not be empty");
  }
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    require_known_keys(s, {"multiples", "seeds", "tolerance"}, "sweep");
    if (s.contains("multiples")) c.sweep.multiples = s.at("multiples").get<std::vector<double>>();
    if (s.contains("seeds")) c.sweep.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
    c.sweep.tolerance = s.value("tolerance", c.sweep.tolerance);
    if (c.sweep.multiples.empty() || c.sweep.seeds.empty()) {
      throw ConfigError("sweep.multiples and sweep.seeds must not be empty");
    }
    for (double m : c.sweep.multiples) {
      if (!(m >= 0.0) || !std::isfinite(m)) throw ConfigError("sweep.multiples must be >= 0");
    }
  }
  if (j.contains("histogram")) {
    const auto& h = j.at("histogram");
    require_known_keys(h, {"bins", "max_depth"}, "histogram");
    c.histogram.bins = h.value("bins", c.histogram.bins);
    c.histogram.max_depth = h.value("max_depth", c.histogram.max_depth);
    if (c.histogram.bins < 1 || !(c.histogram.max_depth > 0.0)) {
      throw ConfigError("histogram needs bins >= 1 and max_depth > 0");
    }
  }
  if (c.output_dir.empty()) throw ConfigError("output_dir must not be empty");
  validate(experiment_config(c));
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not KEY=VALUE");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  nlohmann::json* node = &doc;
  std::stringstream path(key);
  std::string part;
  while (std::getline(path, part, '.')) {
    if (node->is_object()) {
      if (!node->contains(part)) throw ConfigError("override: unknown key '" + key + "'");
      node = &(*node)[part];
    } else if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(part, &used);
        if (used != part.size()) throw std::invalid_argument(part);
      } catch (const std::exception&) {
        throw ConfigError("override: '" + part + "' in '" + key + "' is not an index");
      }
      if (idx >= node->size()) throw ConfigError("override: index out of range in '" + key + "'");
      node = &(*node)[idx];
    } else {
      throw ConfigError("override: '" + key + "' descends into a scalar");
    }
  }
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *node = std::move(value);
}

ExperimentConfig experiment_config(const Config& c) {
  ExperimentConfig e;
  e.mode = c.mode;
  e.teacher = c.teacher;
  e.student = c.student;
  e.lambda = c.train.lambda;
  e.epochs = c.train.epochs;
  e.batch_size = c.train.batch_size;
  e.optimizer = c.train.optimizer;
  e.seed = c.seed;
  e.lambda_weighted_aux = c.train.lambda_weighted_aux;
  return e;
}

// --- commands ----------------------------------------------------------------------

namespace {

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw DataError("failed writing '" + path.string() + "'");
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

struct Context {
  Config cfg;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;

  ProgressFn progress() const {
    return [this](const std::string& setting, const EpochRecord& e) {
      err << setting << " epoch " << e.epoch << " loss " << e.loss << " delta1 " << e.eval.delta1
          << "\n";
    };
  }
};

Domains load_domains(const fs::path& dir) {
  Domains d;
  d.original = load_dataset(dir / "x" / "manifest.json");
  d.aux_labeled = load_dataset(dir / "u_prime" / "manifest.json");
  d.aux_unlabeled = load_dataset(dir / "u" / "manifest.json").unlabeled();
  d.ood_labeled = load_dataset(dir / "u_ood" / "manifest.json");
  d.ood_unlabeled = d.ood_labeled.unlabeled();
  if (!d.original.labeled() || !d.aux_labeled.labeled()) {
    throw DataError("'" + dir.string() + "': x and u_prime must be labeled");
  }
  return d;
}

Domains domains(const Context& ctx) {
  if (!ctx.cfg.inputs.data_dir.empty()) return load_domains(ctx.cfg.inputs.data_dir);
  return make_domains(ctx.cfg.data, ctx.cfg.seed);
}

// Checkpoint, report, curves and held-out predictions of one run.
void write_run(const Context& ctx, const TrainedModel& m, const DatasetHandle& eval) {
  save_checkpoint(m.net, ctx.out_dir / "model.ckpt");
  write_json(ctx.out_dir / "report.json", report_json(m.report, false));
  write_json(ctx.out_dir / "timing.json", {{"wall_seconds", m.report.wall_seconds}});
  write_text(ctx.out_dir / "curves.csv", curves_csv({m.report}));
  const fs::path eval_manifest = save_dataset(eval, ctx.out_dir / "eval");
  const auto preds = predict(m.net, eval);
  const nlohmann::json manifest = nlohmann::json::parse(std::ifstream(eval_manifest));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string name = manifest.at("samples").at(i).at("depth_path").get<std::string>();
    save_pfm(preds[i], ctx.out_dir / "predictions" / name);
  }
  ctx.out << report_json(m.report, false).at("final").dump() << "\n";
}

int cmd_generate(const Context& ctx) {
  const Domains d = make_domains(ctx.cfg.data, ctx.cfg.seed);
  const fs::path dir = ctx.out_dir / "data";
  nlohmann::json summary;
  for (const auto& [name, ds] : std::vector<std::pair<std::string, const DatasetHandle*>>{
           {"x", &d.original},
           {"u", &d.aux_unlabeled},
           {"u_prime", &d.aux_labeled},
           {"u_ood", &d.ood_labeled}}) {
    summary[name] = {{"samples", ds->size()},
                     {"manifest", fs::relative(save_dataset(*ds, dir / name), ctx.out_dir)}};
  }
  write_json(ctx.out_dir / "generate.json", summary);
  ctx.out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_train(const Context& ctx) {
  const Config& c = ctx.cfg;
  const ExperimentData d = make_experiment_data(domains(ctx), c.data.holdout_fraction, c.seed);
  ExperimentConfig e = experiment_config(c);
  TrainedModel m;
  if (c.train.network == "student") {
    if (c.train.use_aux_labeled) {
      throw ConfigError("train.use_aux_labeled applies to the teacher only");
    }
    e.mode = TrainMode::kSupervised;
    m = train_student(e, nullptr, d.train, {}, d.eval, settings::kStudentSupervised,
                      ctx.progress());
  } else {
    std::vector<DatasetHandle> sets{d.train};
    if (c.train.use_aux_labeled) sets.push_back(d.aux_labeled);
    m = train_teacher(e, sets, d.eval,
                      c.train.use_aux_labeled ? settings::kTeacherXU : settings::kTeacherX,
                      ctx.progress());
  }
  write_run(ctx, m, d.eval);
  return kExitOk;
}

int cmd_distill(const Context& ctx) {
  const Config& c = ctx.cfg;
  if (c.mode == TrainMode::kSupervised) {
    throw ConfigError("distill needs a KD mode; use train for supervised runs");
  }
  if (c.inputs.teacher_checkpoint.empty()) {
    throw ConfigError("distill needs inputs.teacher_checkpoint");
  }
  const DepthNet<float> teacher = load_checkpoint(c.inputs.teacher_checkpoint);
  const ExperimentData d = make_experiment_data(domains(ctx), c.data.holdout_fraction, c.seed);
  DatasetHandle aux;
  switch (c.mode) {
    case TrainMode::kKdAuxOnly:
    case TrainMode::kKdMixedUnlabeled:
      aux = c.train.aux_domain == "ood" ? d.ood_unlabeled : d.aux_unlabeled;
      break;
    case TrainMode::kKdMixedLabeled:
      if (c.train.aux_domain == "ood") {
        throw ConfigError("kd_mixed_labeled has no labeled out-of-domain set");
      }
      aux = d.aux_labeled;
      break;
    default:
      break;
  }
  const ExperimentConfig e = experiment_config(c);
  TrainedModel m = train_student(e, &teacher, d.train, aux, d.eval, to_string(c.mode),
                                 ctx.progress());
  write_run(ctx, m, d.eval);
  return kExitOk;
}

int cmd_evaluate(const Context& ctx) {
  const auto& in = ctx.cfg.inputs;
  if (in.predictions.empty() || in.ground_truth.empty()) {
    throw ConfigError("evaluate needs inputs.predictions and inputs.ground_truth");
  }
  const fs::path gt_manifest(in.ground_truth);
  std::ifstream f(gt_manifest);
  if (!f) throw DataError("cannot open '" + gt_manifest.string() + "'");
  const DatasetHandle gt = load_dataset(gt_manifest);
  if (!gt.labeled()) throw DataError("'" + gt_manifest.string() + "' has no depth");
  const nlohmann::json manifest = nlohmann::json::parse(f);
  MetricAccumulator acc;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::string name = manifest.at("samples").at(i).at("depth_path").get<std::string>();
    const fs::path p = fs::path(in.predictions) / fs::path(name).filename();
    if (!fs::exists(p)) throw DataError("missing prediction '" + p.string() + "'");
    const Image pred = load_pfm(p);
    if (pred.size() != gt.depth(i).size()) {
      throw DimensionError("prediction '" + p.string() + "' does not match the ground truth size");
    }
    acc.add(pred, gt.depth(i), gt.valid_mask(i));
  }
  const nlohmann::json report = acc.report();
  write_json(ctx.out_dir / "metrics.json", report);
  ctx.out << report.dump() << "\n";
  return kExitOk;
}

int cmd_histogram(const Context& ctx) {
  const auto& h = ctx.cfg.histogram;
  const Domains d = domains(ctx);
  const std::vector<std::pair<std::string, const DatasetHandle*>> sets{
      {"x", &d.original}, {"u_prime", &d.aux_labeled}, {"u_ood", &d.ood_labeled}};
  std::map<std::string, DepthHistogram> hist;
  nlohmann::json j{{"bins", h.bins}, {"range", {0.0, h.max_depth}}};
  for (const auto& [name, ds] : sets) {
    if (ds->empty() || !ds->labeled()) continue;
    hist[name] = depth_histogram(*ds, h.bins, 0.0, h.max_depth);
    j["domains"][name] = {{"mass", hist[name].mass}, {"argmax_bin", hist[name].argmax()}};
  }
  for (auto a = hist.begin(); a != hist.end(); ++a) {
    for (auto b = std::next(a); b != hist.end(); ++b) {
      j["similarity"][a->first + "/" + b->first] = histogram_similarity(a->second, b->second);
    }
  }
  write_json(ctx.out_dir / "histogram.json", j);
  ctx.out << j.value("similarity", nlohmann::json::object()).dump() << "\n";
  return kExitOk;
}

nlohmann::json matrix_summary(const std::vector<TrainReport>& reports) {
  std::map<std::string, std::vector<double>> d1;
  for (const auto& r : reports) d1[r.setting].push_back(r.final.delta1);
  nlohmann::json med;
  for (const auto& [k, v] : d1) med[k] = median(v);
  auto get = [&](const char* k) { return med.contains(k) ? med[k].get<double>() : NAN; };
  constexpr double tie = 0.005;
  nlohmann::json orderings{
      {"teacher_over_student", get(settings::kTeacherX) > get(settings::kStudentSupervised)},
      {"teacher_xu_over_teacher_x", get(settings::kTeacherXU) >= get(settings::kTeacherX) - tie},
      {"setting3_over_setting1", get(settings::kSetting3) >= get(settings::kSetting1) - tie},
      {"setting4_over_setting3", get(settings::kSetting4) >= get(settings::kSetting3) - tie}};
  if (med.contains(settings::kSetting2Ood)) {
    orderings["ood_below_matched"] = get(settings::kSetting2Ood) < get(settings::kSetting2);
  }
  return {{"median_delta1", med}, {"orderings", orderings}, {"tie_tolerance", tie}};
}

int cmd_matrix(const Context& ctx) {
  const Config& c = ctx.cfg;
  MatrixOptions o;
  o.seeds = c.matrix.seeds;
  o.include_ood = c.matrix.include_ood;
  const auto reports = run_matrix(experiment_config(c), c.data, o, ctx.progress());
  nlohmann::json all = nlohmann::json::array(), timing = nlohmann::json::array();
  for (const auto& r : reports) {
    all.push_back(report_json(r, false));
    timing.push_back({{"setting", r.setting}, {"seed", r.seed}, {"wall_seconds", r.wall_seconds}});
  }
  write_text(ctx.out_dir / "matrix.csv", matrix_csv(reports));
  write_text(ctx.out_dir / "curves.csv", curves_csv(reports));
  write_json(ctx.out_dir / "reports.json", all);
  write_json(ctx.out_dir / "timing.json", timing);
  const nlohmann::json summary = matrix_summary(reports);
  write_json(ctx.out_dir / "summary.json", summary);
  ctx.out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_sweep(const Context& ctx) {
  const Config& c = ctx.cfg;
  const std::size_t n_train = static_cast<std::size_t>(c.data.n_original) -
                              static_cast<std::size_t>(std::llround(
                                  c.data.holdout_fraction * static_cast<double>(c.data.n_original)));
  std::vector<std::size_t> sizes;
  for (double m : c.sweep.multiples) {
    sizes.push_back(static_cast<std::size_t>(std::llround(m * static_cast<double>(n_train))));
  }
  const auto pts = aux_size_sweep(experiment_config(c), c.data, sizes, c.sweep.seeds,
                                  ctx.progress());
  std::vector<TrainReport> reports;
  for (const auto& p : pts) reports.push_back(p.report);
  write_text(ctx.out_dir / "sweep.csv", matrix_csv(reports));
  write_text(ctx.out_dir / "curves.csv", curves_csv(reports));
  nlohmann::json curve = nlohmann::json::array();
  std::vector<double> med;
  for (std::size_t s : sizes) {
    std::vector<double> v;
    for (const auto& p : pts) {
      if (p.aux_size == s) v.push_back(p.report.final.delta1);
    }
    med.push_back(median(v));
    curve.push_back({{"aux_size", s}, {"median_delta1", med.back()}});
  }
  bool non_decreasing = true;
  for (std::size_t i = 1; i < med.size(); ++i) {
    non_decreasing = non_decreasing && med[i] >= med[i - 1] - c.sweep.tolerance;
  }
  const bool plateau =
      med.size() >= 2 && std::abs(med.back() - med[med.size() - 2]) < c.sweep.tolerance;
  const nlohmann::json summary{{"train_samples", n_train},
                               {"curve", curve},
                               {"tolerance", c.sweep.tolerance},
                               {"non_decreasing", non_decreasing},
                               {"plateau", plateau}};
  write_json(ctx.out_dir / "summary.json", summary);
  ctx.out << summary.dump() << "\n";
  return kExitOk;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig:
    case ErrorKind::kContract:
      return kExitConfig;
    case ErrorKind::kData:
    case ErrorKind::kParse:
    case ErrorKind::kDimension:
      return kExitData;
    case ErrorKind::kNumeric:
      return kExitNumeric;
  }
  return kExitFailure;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kData: return "data";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "error";
}

int report_error(std::ostream& err, const std::string& kind, const std::string& msg, int code) {
  err << nlohmann::json{{"error", {{"kind", kind}, {"message", msg}}}, {"exit_code", code}}.dump()
      << "\n";
  return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lightweight depth network training and distillation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, output_dir;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "experiment seed");
  app.add_option("--output-dir", output_dir, "directory receiving every output");
  app.add_option("--override", overrides, "dotted KEY=VALUE applied after the config file")
      ->allow_extra_args(false);
  const std::map<std::string, int (*)(const Context&)> commands{
      {"generate", &cmd_generate}, {"train", &cmd_train},         {"distill", &cmd_distill},
      {"evaluate", &cmd_evaluate}, {"histogram", &cmd_histogram}, {"matrix", &cmd_matrix},
      {"sweep", &cmd_sweep}};
  const std::map<std::string, std::string> help{
      {"generate", "write X, U, U' and U_ood as PPM/PFM datasets"},
      {"train", "supervised training of the teacher or student"},
      {"distill", "train the student from a teacher checkpoint"},
      {"evaluate", "metrics of a prediction directory against a manifest"},
      {"histogram", "depth histograms and their similarity across domains"},
      {"matrix", "every teacher, student and KD setting over the matrix seeds"},
      {"sweep", "KD with growing unlabeled auxiliary subsets"}};
  for (const auto& [name, fn] : commands) app.add_subcommand(name, help.at(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    return report_error(err, "usage", e.what(), kExitConfig);
  }

  try {
    nlohmann::json doc = to_json(Config{});
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      nlohmann::json file;
      try {
        file = nlohmann::json::parse(f);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + config_path + "': " + e.what());
      }
      doc = to_json(config_from_json(file));
    }
    for (const auto& o : overrides) apply_override(doc, o);
    if (*seed_opt) doc["seed"] = seed;
    if (!output_dir.empty()) doc["output_dir"] = output_dir;
    const Config cfg = config_from_json(doc);

    const std::string name = app.get_subcommands().front()->get_name();
    Context ctx{cfg, fs::path(cfg.output_dir), out, err};
    fs::create_directories(ctx.out_dir);
    write_json(ctx.out_dir / "effective_config.json", to_json(cfg));
    return commands.at(name)(ctx);
  } catch (const Error& e) {
    return report_error(err, kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const nlohmann::json::exception& e) {
    return report_error(err, "config", e.what(), kExitConfig);
  } catch (const fs::filesystem_error& e) {
    return report_error(err, "data", e.what(), kExitData);
  } catch (const std::exception& e) {
    return report_error(err, "internal", e.what(), kExitFailure);
  }
}

}  // namespace lwdepth::cli
