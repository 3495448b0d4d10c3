#include "gpfq/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpfq/acceptance.hpp"
#include "gpfq/config.hpp"
#include "gpfq/error.hpp"
#include "gpfq/io.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/rng.hpp"
#include "gpfq/synthetic.hpp"
#include "gpfq/verify.hpp"

namespace gpfq {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kLambdaCsvVersion = "gpfq-lambda-sweep/1";
inline constexpr const char* kCCsvVersion = "gpfq-c-sweep/1";

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool strict = false;
  std::string out;

  std::string model;
  std::vector<std::string> calibration;
  bool codes = false;
  std::string eval_x;
  std::string eval_y;
  std::string inspect_path;
};

struct Context {
  Options opt;
  ExperimentConfig config;
  std::ostream& out;
  std::ostream& err;

  void log(const std::string& line) const { err << "gpfq: " << line << '\n'; }

  fs::path out_dir() const {
    const std::string dir = !opt.out.empty() ? opt.out : config.output_dir;
    if (dir.empty()) throw Error(ErrorKind::Config, "no output directory (use --out or output.dir)");
    return dir;
  }
};

std::string dump(const json& j) { return j.dump(2) + "\n"; }

const char* scale_name(LambdaScale s) {
  return s == LambdaScale::Absolute ? "absolute" : "relative";
}

json quant_json(const QuantConfig& q) {
  return {{"bits", q.bits},
          {"C", q.C},
          {"variant", to_string(q.variant.kind)},
          {"lambda", q.variant.lambda},
          {"lambda_scale", scale_name(q.lambda_scale)},
          {"sample_prob", q.sample_prob},
          {"last_layer_unquantized", q.last_layer_unquantized},
          {"bias_correction", q.bias_correction},
          {"bias_scope", q.bias_scope == BiasCorrectionScope::LastLayer ? "last" : "all"},
          {"per_layer_bits", q.per_layer_bits}};
}

json layer_report_json(const LayerReport& r) {
  return {{"index", r.index},
          {"kind", r.kind},
          {"quantized", r.quantized},
          {"bits", r.bits},
          {"delta", r.delta},
          {"lambda", r.lambda},
          {"q_max", r.q_max},
          {"samples", r.samples},
          {"neurons", r.neurons},
          {"mean_relative_sq_residual", r.mean_relative_sq_residual},
          {"max_relative_sq_residual", r.max_relative_sq_residual},
          {"mean_residual_sqnorm", r.mean_residual_sqnorm},
          {"sparsity", r.sparsity},
          {"neurons_exceeding_qmax", r.neurons_exceeding_qmax},
          {"bias_corrected", r.bias_corrected}};
}

json units_json() {
  return {{"delta", "weight units"},
          {"lambda", "weight units"},
          {"q_max", "weight units"},
          {"mean_relative_sq_residual", "||Xw - X~q||^2 / ||Xw||^2, dimensionless"},
          {"mean_residual_sqnorm", "squared pre-activation units"},
          {"sparsity", "fraction of zero weights"}};
}

std::vector<Tensor> read_calibration(const std::vector<std::string>& paths) {
  std::vector<Tensor> batches;
  for (const auto& p : paths) {
    if (!fs::exists(p)) throw Error(ErrorKind::Io, "missing file " + p);
    batches.push_back(read_tensor(p));
  }
  return batches;
}

std::vector<int> read_labels(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "missing file " + path);
  const Tensor t = read_tensor(path);
  if (t.rank() != 1) throw Error(ErrorKind::Format, path + ": labels must be a 1-d tensor");
  std::vector<int> labels;
  labels.reserve(t.size());
  for (double v : t.data) {
    if (v != std::floor(v) || v < 0.0 || v > std::numeric_limits<int>::max()) {
      throw Error(ErrorKind::Format, path + ": labels must be non-negative integers");
    }
    labels.push_back(static_cast<int>(v));
  }
  return labels;
}

Matrix read_features(const std::string& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "missing file " + path);
  const Tensor t = read_tensor(path);
  if (t.rank() < 2) throw Error(ErrorKind::Format, path + ": features need a batch dimension");
  return t.flatten_to_matrix();
}

int cmd_quantize(Context& ctx) {
  const LoadedModel loaded = load_model_files(ctx.opt.model);
  const std::vector<Tensor> calibration = read_calibration(ctx.opt.calibration);
  QuantConfig q = ctx.config.quant;
  if (ctx.config.reuse_delta) {
    bool any = false;
    std::vector<double> fixed(loaded.model.size(), 0.0);
    for (std::size_t i = 0; i < fixed.size(); ++i) {
      const auto& extra = loaded.manifest.layers[i].extra;
      if (auto it = extra.find("delta"); it != extra.end()) {
        fixed[i] = std::stod(it->second);
        any = true;
      }
    }
    if (any) {
      q.fixed_delta = std::move(fixed);
      ctx.log("reusing step sizes recorded in " + ctx.opt.model);
    }
  }
  const fs::path dir = ctx.out_dir();
  ctx.log("quantizing " + std::to_string(loaded.model.size()) + " layers");
  const NetworkQuantization nq = quantize_network(loaded.model, calibration, q);

  std::vector<LayerFiles> files(loaded.model.size());
  json layers = json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    const LayerReport& r = nq.report.layers[i];
    LayerFiles& f = files[i];
    if (r.quantized && r.delta > 0.0) {
      f.quantized = true;
      f.delta = r.delta;
      f.lambda = q.variant.kind == VariantKind::Hard ? r.lambda : 0.0;
      f.codes = ctx.opt.codes;
    } else {
      f.weights_dtype = loaded.weight_dtypes[i];
    }
    layers.push_back(layer_report_json(r));
  }

  OutputSet out;
  add_model_files(out, nq.model, files);
  const json report = {{"schema", "gpfq-quant-report/1"},
                       {"seed", ctx.config.seed},
                       {"input", ctx.opt.model},
                       {"config", quant_json(q)},
                       {"units", units_json()},
                       {"sparsity", nq.report.sparsity},
                       {"layers", layers}};
  out.add("report.json", dump(report));
  out.commit(dir);
  ctx.log("wrote " + (dir / "model.gpfq").string());
  return 0;
}

json sweep_json(const SweepResult& s, const WidthSweepConfig& w, bool ok) {
  return {{"N0", s.xs},
          {"median_rel_sq_error", s.medians},
          {"q10_rel_sq_error", s.q10},
          {"q90_rel_sq_error", s.q90},
          {"fitted_slope", s.fitted_slope},
          {"slope_target", w.slope_target},
          {"slope_tolerance", w.slope_tolerance},
          {"slope_within_tolerance", ok},
          {"trials_per_width", w.trials}};
}

struct WidthOutcome {
  SweepResult result;
  bool ok = false;
};

WidthOutcome run_width_sweep(const Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (!c.width_sweep) throw Error(ErrorKind::Config, "$.width_sweep: required");
  if (!c.data) throw Error(ErrorKind::Config, "$.data: required");
  ctx.log("width sweep over " + std::to_string(c.width_sweep->widths.size()) + " widths, " +
          std::to_string(c.width_sweep->trials) + " trials each");
  WidthOutcome o;
  o.result = sweep_width(c.trial, c.width_sweep->widths, c.width_sweep->trials,
                         derive_seed(c.seed, {6}));
  o.ok = std::abs(o.result.fitted_slope - c.width_sweep->slope_target) <=
         c.width_sweep->slope_tolerance;
  ctx.log("fitted slope " + format_double(o.result.fitted_slope) +
          (o.ok ? " (within tolerance)" : " (outside tolerance)"));
  return o;
}

int cmd_sweep_width(Context& ctx) {
  const fs::path dir = ctx.out_dir();
  const WidthOutcome o = run_width_sweep(ctx);
  OutputSet out;
  out.add("trials.csv", to_csv(o.result.records));
  json summary = {{"schema", "gpfq-width-sweep/1"},
                  {"seed", ctx.config.seed},
                  {"distribution", describe(ctx.config.data->model)},
                  {"m", ctx.config.data->m},
                  {"width_sweep", sweep_json(o.result, *ctx.config.width_sweep, o.ok)}};
  out.add("summary.json", dump(summary));
  out.commit(dir);
  return ctx.opt.strict && !o.ok ? 1 : 0;
}

int cmd_verify(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (!c.width_sweep && c.criteria.empty()) {
    throw Error(ErrorKind::Config, "nothing to verify: add width_sweep or criteria");
  }
  const fs::path dir = ctx.out_dir();
  OutputSet out;
  json summary = {{"schema", "gpfq-verify/1"}, {"seed", c.seed}};
  bool all_ok = true;

  if (c.width_sweep) {
    const WidthOutcome o = run_width_sweep(ctx);
    out.add("trials.csv", to_csv(o.result.records));
    summary["width_sweep"] = sweep_json(o.result, *c.width_sweep, o.ok);
    summary["width_sweep"]["distribution"] = describe(c.data->model);
    all_ok = all_ok && o.ok;
  }

  json criteria = json::array();
  if (!c.criteria.empty()) {
    const std::vector<CriterionResult> results = run_acceptance(c.criteria, c.seed);
    for (const CriterionResult& r : results) {
      char line[64];
      std::snprintf(line, sizeof line, "%s criterion %2d (%.2f s): ", r.passed ? "PASS" : "FAIL",
                    r.id, r.seconds);
      ctx.log(line + r.name + ", " + r.detail);
      criteria.push_back({{"id", r.id},
                          {"name", r.name},
                          {"passed", r.passed},
                          {"detail", r.detail},
                          {"budget_seconds", r.budget_seconds}});
      if (!r.csv.empty()) out.add("criterion_" + std::to_string(r.id) + ".csv", r.csv);
      all_ok = all_ok && r.passed;
    }
  }
  summary["criteria"] = criteria;
  summary["passed"] = all_ok;
  out.add("summary.json", dump(summary));
  out.commit(dir);
  return ctx.opt.strict && !all_ok ? 1 : 0;
}

std::string lambda_csv(const LambdaSweep& sweep) {
  std::string s = std::string("# ") + kLambdaCsvVersion + "\nlambda,variant,sparsity,accuracy\n";
  for (const LambdaSweepRow& r : sweep.rows) {
    s += format_double(r.lambda) + "," + to_string(r.variant) + "," + format_double(r.sparsity) +
         "," + format_double(r.accuracy) + "\n";
  }
  return s;
}

int cmd_sweep_lambda(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (!c.lambda_sweep) throw Error(ErrorKind::Config, "$.lambda_sweep: required");
  const LambdaSweepConfig& ls = *c.lambda_sweep;
  const fs::path dir = ctx.out_dir();

  ModelSpec model;
  std::vector<Tensor> calibration;
  Matrix eval_x;
  std::vector<int> eval_y;
  std::string source;
  if (!ctx.opt.model.empty()) {
    if (ctx.opt.calibration.empty() || ctx.opt.eval_x.empty() || ctx.opt.eval_y.empty()) {
      throw Error(ErrorKind::Config, "--model needs --calibration, --eval-x and --eval-y");
    }
    model = load_model(ctx.opt.model);
    calibration = read_calibration(ctx.opt.calibration);
    eval_x = read_features(ctx.opt.eval_x);
    eval_y = read_labels(ctx.opt.eval_y);
    source = ctx.opt.model;
  } else {
    ctx.log("training the synthetic cluster task");
    const ClusterTask task = make_cluster_task(ls.task);
    model = train_mlp(task, ls.train);
    Matrix calib(ls.calibration, task.train_x.cols());
    for (std::size_t r = 0; r < ls.calibration; ++r) {
      for (std::size_t k = 0; k < calib.cols(); ++k) calib(r, k) = task.train_x(r, k);
    }
    calibration.push_back(Tensor::from_matrix(calib));
    eval_x = task.test_x;
    eval_y = task.test_y;
    source = "synthetic";
  }

  ctx.log("sweeping " + std::to_string(ls.lambdas.size()) + " lambdas");
  const LambdaSweep sweep =
      sweep_lambda(model, calibration, eval_x, eval_y, ls.lambdas, ls.variants, c.quant);
  json rows = json::array();
  for (const auto& r : sweep.rows) {
    rows.push_back({{"lambda", r.lambda},
                    {"variant", to_string(r.variant)},
                    {"sparsity", r.sparsity},
                    {"accuracy", r.accuracy}});
  }
  OutputSet out;
  out.add("lambda_sweep.csv", lambda_csv(sweep));
  out.add("summary.json", dump({{"schema", "gpfq-lambda-sweep/1"},
                                {"seed", c.seed},
                                {"source", source},
                                {"lambda_scale", scale_name(c.quant.lambda_scale)},
                                {"config", quant_json(c.quant)},
                                {"reference_accuracy", sweep.reference_accuracy},
                                {"rows", rows}}));
  out.commit(dir);
  return 0;
}

int cmd_sweep_c(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (c.C_grid.empty()) throw Error(ErrorKind::Config, "$.quant.C_grid: required");
  const ModelSpec model = load_model(ctx.opt.model);
  const std::vector<Tensor> calibration = read_calibration(ctx.opt.calibration);
  const bool scored = !ctx.opt.eval_x.empty() || !ctx.opt.eval_y.empty();
  Matrix eval_x;
  std::vector<int> eval_y;
  if (scored) {
    if (ctx.opt.eval_x.empty() || ctx.opt.eval_y.empty()) {
      throw Error(ErrorKind::Config, "--eval-x and --eval-y go together");
    }
    eval_x = read_features(ctx.opt.eval_x);
    eval_y = read_labels(ctx.opt.eval_y);
  }
  const fs::path dir = ctx.out_dir();

  std::vector<double> grid = c.C_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  std::string csv = std::string("# ") + kCCsvVersion +
                    "\nC,mean_relative_sq_residual,sparsity,accuracy\n";
  json rows = json::array();
  std::optional<double> best_c;
  double best_score = 0.0;
  for (double C : grid) {
    QuantConfig q = c.quant;
    q.C = C;
    const NetworkQuantization nq = quantize_network(model, calibration, q);
    double residual = 0.0;
    std::size_t counted = 0;
    for (const LayerReport& r : nq.report.layers) {
      if (!r.quantized) continue;
      residual += r.mean_relative_sq_residual;
      ++counted;
    }
    if (counted > 0) residual /= static_cast<double>(counted);
    json row = {{"C", C}, {"mean_relative_sq_residual", residual}, {"sparsity", nq.report.sparsity}};
    csv += format_double(C) + "," + format_double(residual) + "," +
           format_double(nq.report.sparsity) + ",";
    // Higher accuracy wins when scored; otherwise the smaller residual does.
    double score = -residual;
    if (scored) {
      const double acc = accuracy(nq.model, eval_x, eval_y);
      row["accuracy"] = acc;
      csv += format_double(acc);
      score = acc;
    } else {
      row["accuracy"] = nullptr;
    }
    csv += "\n";
    if (!best_c || score > best_score) {
      best_c = C;
      best_score = score;
    }
    ctx.log("C=" + format_double(C) + " residual " + format_double(residual));
    rows.push_back(row);
  }
  OutputSet out;
  out.add("c_sweep.csv", csv);
  out.add("summary.json", dump({{"schema", "gpfq-c-sweep/1"},
                                {"seed", c.seed},
                                {"selected_by", scored ? "accuracy" : "mean_relative_sq_residual"},
                                {"best_C", *best_c},
                                {"config", quant_json(c.quant)},
                                {"rows", rows}}));
  out.commit(dir);
  return 0;
}

int cmd_gen_data(Context& ctx) {
  const ExperimentConfig& c = ctx.config;
  if (!c.data) throw Error(ErrorKind::Config, "$.data: required");
  const fs::path dir = ctx.out_dir();
  const Matrix X = sample(*c.data);
  const std::vector<double> w = generic_weight(c.data->N0, c.trial.radius, derive_seed(c.seed, {5}));
  OutputSet out;
  out.add("data.gtns", encode_tensor(Tensor::from_matrix(X)));
  out.add("weights.gtns", encode_tensor(Tensor({w.size()}, w)));
  out.add("data.json", dump({{"schema", "gpfq-data/1"},
                             {"seed", c.seed},
                             {"distribution", distribution_to_json(c.data->model)},
                             {"description", describe(c.data->model)},
                             {"m", c.data->m},
                             {"N0", c.data->N0},
                             {"weight_radius", c.trial.radius}}));
  out.commit(dir);
  ctx.log("wrote " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) + " samples");
  return 0;
}

json tensor_stats(const Tensor& t) {
  double lo = 0.0, hi = 0.0, sum = 0.0;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t.data[i];
    lo = i == 0 ? v : std::min(lo, v);
    hi = i == 0 ? v : std::max(hi, v);
    sum += v;
    if (v == 0.0) ++zeros;
  }
  return {{"shape", t.shape},
          {"count", t.size()},
          {"min", lo},
          {"max", hi},
          {"mean", t.size() ? sum / static_cast<double>(t.size()) : 0.0},
          {"zeros", zeros}};
}

// Number of weights that are not exactly one of the recorded levels.
std::size_t off_level_count(const Tensor& w, double delta, double lambda) {
  std::size_t off = 0;
  for (double v : w.data) {
    const double code = level_code(v, delta, lambda);
    double level = 0.0;
    if (code != 0.0) {
      level = lambda > 0.0 ? std::copysign(lambda + (std::abs(code) - 1.0) * delta, code)
                           : code * delta;
    }
    if (level != v) ++off;
  }
  return off;
}

int cmd_inspect(Context& ctx) {
  const fs::path path = ctx.opt.inspect_path;
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "missing file " + path.string());
  const std::string bytes = read_file(path);
  json report;
  if (bytes.compare(0, 8, kTensorMagic) == 0) {
    DType dtype = DType::F64;
    const Tensor t = decode_tensor(bytes, &dtype);
    report = tensor_stats(t);
    report["kind"] = "tensor";
    report["dtype"] = dtype == DType::F32 ? "f32" : "f64";
  } else {
    const LoadedModel loaded = load_model_files(path);
    json layers = json::array();
    for (std::size_t i = 0; i < loaded.model.size(); ++i) {
      const ManifestEntry& e = loaded.manifest.layers[i];
      const Layer& layer = loaded.model.layers[i];
      const Tensor w = std::holds_alternative<DenseLayer>(layer)
                           ? Tensor::from_matrix(std::get<DenseLayer>(layer).weights)
                           : std::get<ConvLayer>(layer).kernels;
      json l = {{"type", e.type},
                {"activation", e.activation},
                {"weights", e.weights},
                {"bias", e.bias},
                {"dtype", loaded.weight_dtypes[i] == DType::F32 ? "f32" : "f64"},
                {"stats", tensor_stats(w)}};
      if (auto it = e.extra.find("delta"); it != e.extra.end()) {
        const double delta = std::stod(it->second);
        const auto lam = e.extra.find("lambda");
        const double lambda = lam == e.extra.end() ? 0.0 : std::stod(lam->second);
        l["delta"] = delta;
        l["lambda"] = lambda;
        l["off_level_weights"] = off_level_count(w, delta, lambda);
      }
      if (auto it = e.extra.find("codes"); it != e.extra.end()) l["codes"] = it->second;
      layers.push_back(l);
    }
    report = {{"kind", "model"}, {"layers", layers}};
  }
  ctx.out << report.dump(2) << '\n';
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Greedy path-following quantization of neural network layers"};
  app.name("gpfq");
  app.require_subcommand(1, 1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "experiment config (JSON)");
  app.add_option("--seed", opt.seed, "master seed (overrides the config)");
  std::optional<unsigned> threads;
  app.add_option("--threads", threads, "worker threads (default: $GPFQ_THREADS, else 1)")
      ->check(CLI::Range(1u, 256u));
  app.add_flag("--strict", opt.strict, "exit nonzero when a check fails");
  app.add_option("--out", opt.out, "output directory");

  auto* quantize = app.add_subcommand("quantize", "quantize a model");
  quantize->add_option("--model", opt.model, "model manifest")->required();
  quantize->add_option("--calibration", opt.calibration, "calibration batch (one, or one per layer)")
      ->required();
  quantize->add_flag("--codes", opt.codes, "also write integer-code files");

  app.add_subcommand("verify", "run the configured width sweep and acceptance criteria");
  app.add_subcommand("sweep-width", "error decay against layer width");

  auto* sweep_l = app.add_subcommand("sweep-lambda", "sparsity and accuracy against lambda");
  sweep_l->add_option("--model", opt.model, "model manifest (default: synthetic task)");
  sweep_l->add_option("--calibration", opt.calibration, "calibration batch");
  sweep_l->add_option("--eval-x", opt.eval_x, "evaluation features");
  sweep_l->add_option("--eval-y", opt.eval_y, "evaluation labels");

  auto* sweep_c = app.add_subcommand("sweep-c", "grid search over the step-size constant C");
  sweep_c->add_option("--model", opt.model, "model manifest")->required();
  sweep_c->add_option("--calibration", opt.calibration, "calibration batch")->required();
  sweep_c->add_option("--eval-x", opt.eval_x, "validation features");
  sweep_c->add_option("--eval-y", opt.eval_y, "validation labels");

  app.add_subcommand("gen-data", "sample the configured data model");

  auto* inspect = app.add_subcommand("inspect", "describe a tensor file or model manifest");
  inspect->add_option("path", opt.inspect_path, "file to describe")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  Context ctx{opt, {}, out, err};
  try {
    if (!opt.config_path.empty()) {
      if (!fs::exists(opt.config_path)) throw Error(ErrorKind::Io, "missing file " + opt.config_path);
      ctx.config = parse_config_text(read_file(opt.config_path));
    }
    if (threads) {
      opt.threads = *threads;
    } else if (const char* env = std::getenv("GPFQ_THREADS"); env && *env) {
      const std::string_view text(env);
      unsigned n = 0;
      const auto res = std::from_chars(text.data(), text.data() + text.size(), n);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size() || n < 1 || n > 256) {
        throw Error(ErrorKind::Config, "GPFQ_THREADS must be an integer in [1, 256]");
      }
      opt.threads = n;
    }
    apply_seed(ctx.config, opt.seed.value_or(ctx.config.seed));
    parallel::set_thread_count(opt.threads);

    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "quantize") return cmd_quantize(ctx);
    if (cmd == "verify") return cmd_verify(ctx);
    if (cmd == "sweep-width") return cmd_sweep_width(ctx);
    if (cmd == "sweep-lambda") return cmd_sweep_lambda(ctx);
    if (cmd == "sweep-c") return cmd_sweep_c(ctx);
    if (cmd == "gen-data") return cmd_gen_data(ctx);
    return cmd_inspect(ctx);
  } catch (const std::exception& e) {
    err << "gpfq: error: " << e.what() << '\n';
    return 1;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace gpfq
