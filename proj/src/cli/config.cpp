#include "gpfq/config.hpp"

#include <cmath>
#include <set>

#include "gpfq/error.hpp"
#include "gpfq/rng.hpp"

namespace gpfq {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorKind::Config, path + ": " + what);
}

// Object reader that rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  const json* get(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  double number(const std::string& key, double fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(path(key), "expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) fail(path(key), "expected a finite number");
    return d;
  }

  std::uint64_t unsigned_int(const std::string& key, std::uint64_t fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
      fail(path(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  int integer(const std::string& key, int fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(path(key), "expected an integer");
    return v->get<int>();
  }

  bool boolean(const std::string& key, bool fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(path(key), "expected true or false");
    return v->get<bool>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const json* v = get(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(path(key), "expected a string");
    return v->get<std::string>();
  }

  const json& array(const std::string& key) {
    const json* v = get(key);
    if (!v || !v->is_array()) fail(path(key), "expected an array");
    return *v;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(path(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

VariantKind variant_from(const std::string& name, const std::string& path) {
  try {
    return parse_variant(name);
  } catch (const Error&) {
    fail(path, "expected \"plain\", \"soft\" or \"hard\"");
  }
}

QuantConfig parse_quant(const json& j, const std::string& path, ExperimentConfig& c) {
  Section s(j, path);
  QuantConfig q;
  c.reuse_delta = s.boolean("reuse_delta", c.reuse_delta);
  if (s.has("C_grid")) {
    const json& arr = s.array("C_grid");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number() || !(arr[i].get<double>() > 0.0)) {
        fail(s.path("C_grid") + "[" + std::to_string(i) + "]", "expected a number > 0");
      }
      c.C_grid.push_back(arr[i].get<double>());
    }
  }
  q.bits = s.integer("bits", q.bits);
  q.C = s.number("C", q.C);
  const VariantKind kind = variant_from(s.string("variant", "plain"), s.path("variant"));
  q.variant = Variant{kind, s.number("lambda", 0.0)};
  const std::string scale = s.string("lambda_scale", "absolute");
  if (scale == "absolute") {
    q.lambda_scale = LambdaScale::Absolute;
  } else if (scale == "relative") {
    q.lambda_scale = LambdaScale::RelativeToQmax;
  } else {
    fail(s.path("lambda_scale"), "expected \"absolute\" or \"relative\"");
  }
  q.sample_prob = s.number("sample_prob", q.sample_prob);
  q.last_layer_unquantized = s.boolean("last_layer_unquantized", q.last_layer_unquantized);
  q.bias_correction = s.boolean("bias_correction", q.bias_correction);
  const std::string scope = s.string("bias_scope", "last");
  if (scope == "last") {
    q.bias_scope = BiasCorrectionScope::LastLayer;
  } else if (scope == "all") {
    q.bias_scope = BiasCorrectionScope::AllLayers;
  } else {
    fail(s.path("bias_scope"), "expected \"last\" or \"all\"");
  }
  if (s.has("per_layer_bits")) {
    const json& arr = s.array("per_layer_bits");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (!arr[i].is_number_integer()) fail(s.path("per_layer_bits") + "[" + std::to_string(i) + "]", "expected an integer");
      q.per_layer_bits.push_back(arr[i].get<int>());
    }
  }
  s.finish();
  if (q.bits < 2 || q.bits > 31) fail(s.path("bits"), "must be in [2, 31]");
  if (!(q.C > 0.0)) fail(s.path("C"), "must be > 0");
  if (q.variant.lambda < 0.0) fail(s.path("lambda"), "must be >= 0");
  if (!(q.sample_prob > 0.0 && q.sample_prob <= 1.0)) fail(s.path("sample_prob"), "must be in (0, 1]");
  return q;
}

DistributionSpec parse_data(const json& j, const std::string& path) {
  Section s(j, path);
  DistributionSpec d;
  const json* dist = s.get("distribution");
  if (!dist) fail(s.path("distribution"), "required");
  d.model = parse_distribution(*dist, s.path("distribution"));
  d.m = s.unsigned_int("m", 16);
  d.N0 = s.unsigned_int("N0", 1024);
  s.finish();
  try {
    validate(d);
  } catch (const Error& e) {
    fail(path, e.what());
  }
  return d;
}

TrialConfig parse_trial(const json& j, const std::string& path) {
  Section s(j, path);
  TrialConfig t;
  t.bits = s.integer("bits", t.bits);
  t.radius = s.number("radius", t.radius);
  t.radius_from_weights = s.boolean("radius_from_weights", t.radius_from_weights);
  const VariantKind kind = variant_from(s.string("variant", "plain"), s.path("variant"));
  t.variant = Variant{kind, s.number("lambda_steps", 0.0)};
  t.lambda_in_steps = true;
  t.exponent = s.number("exponent", t.exponent);
  s.finish();
  if (t.bits < 2 || t.bits > 31) fail(s.path("bits"), "must be in [2, 31]");
  if (!(t.radius > 0.0)) fail(s.path("radius"), "must be > 0");
  if (t.variant.lambda < 0.0) fail(s.path("lambda_steps"), "must be >= 0");
  if (!(t.exponent > 0.0)) fail(s.path("exponent"), "must be > 0");
  return t;
}

WidthSweepConfig parse_width_sweep(const json& j, const std::string& path) {
  Section s(j, path);
  WidthSweepConfig w;
  const json& arr = s.array("N0");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number_unsigned() || arr[i].get<std::uint64_t>() == 0) {
      fail(s.path("N0") + "[" + std::to_string(i) + "]", "expected a positive integer");
    }
    w.widths.push_back(arr[i].get<std::size_t>());
  }
  w.trials = s.unsigned_int("trials", w.trials);
  w.slope_target = s.number("slope_target", w.slope_target);
  w.slope_tolerance = s.number("slope_tolerance", w.slope_tolerance);
  s.finish();
  if (w.trials == 0) fail(s.path("trials"), "must be >= 1");
  if (w.slope_tolerance < 0.0) fail(s.path("slope_tolerance"), "must be >= 0");
  return w;
}

LambdaSweepConfig parse_lambda_sweep(const json& j, const std::string& path) {
  Section s(j, path);
  LambdaSweepConfig l;
  const json& arr = s.array("lambdas");
  if (arr.empty()) fail(s.path("lambdas"), "must not be empty");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number() || !(arr[i].get<double>() >= 0.0)) {
      fail(s.path("lambdas") + "[" + std::to_string(i) + "]", "expected a number >= 0");
    }
    l.lambdas.push_back(arr[i].get<double>());
  }
  if (s.has("variants")) {
    const json& v = s.array("variants");
    l.variants.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string p = s.path("variants") + "[" + std::to_string(i) + "]";
      if (!v[i].is_string()) fail(p, "expected a string");
      l.variants.push_back(variant_from(v[i].get<std::string>(), p));
    }
    if (l.variants.empty()) fail(s.path("variants"), "must not be empty");
  }
  if (const json* t = s.get("task")) {
    Section ts(*t, s.path("task"));
    l.task.classes = ts.unsigned_int("classes", l.task.classes);
    l.task.dim = ts.unsigned_int("dim", l.task.dim);
    l.task.informative = ts.unsigned_int("informative", l.task.informative);
    l.task.train_per_class = ts.unsigned_int("train_per_class", l.task.train_per_class);
    l.task.test_per_class = ts.unsigned_int("test_per_class", l.task.test_per_class);
    l.task.center_scale = ts.number("center_scale", l.task.center_scale);
    l.task.sigma = ts.number("sigma", l.task.sigma);
    ts.finish();
  }
  if (const json* t = s.get("train")) {
    Section ts(*t, s.path("train"));
    l.train.hidden = ts.unsigned_int("hidden", l.train.hidden);
    l.train.epochs = ts.unsigned_int("epochs", l.train.epochs);
    l.train.learning_rate = ts.number("learning_rate", l.train.learning_rate);
    l.train.momentum = ts.number("momentum", l.train.momentum);
    l.train.weight_decay = ts.number("weight_decay", l.train.weight_decay);
    ts.finish();
  }
  l.calibration = s.unsigned_int("calibration", l.calibration);
  s.finish();
  if (l.calibration == 0) fail(s.path("calibration"), "must be >= 1");
  const std::size_t train_rows = l.task.classes * l.task.train_per_class;
  if (l.calibration > train_rows) {
    fail(s.path("calibration"), "exceeds the " + std::to_string(train_rows) + " training rows");
  }
  return l;
}

}  // namespace

DistributionModel parse_distribution(const json& j, const std::string& path) {
  Section s(j, path);
  const std::string type = s.string("type", "");
  DistributionModel model;
  if (type == "uniform_ball") {
    model.kind = UniformBall{s.number("radius", 1.0)};
  } else if (type == "bernoulli") {
    model.kind = SymmetricBernoulli{};
  } else if (type == "standard_normal") {
    model.kind = StandardNormal{s.number("sigma", 1.0)};
  } else if (type == "clusters") {
    GaussianClusters g;
    const json& centers = s.array("centers");
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const std::string p = s.path("centers") + "[" + std::to_string(i) + "]";
      if (!centers[i].is_array()) fail(p, "expected an array of numbers");
      std::vector<double> c;
      for (const json& v : centers[i]) {
        if (!v.is_number()) fail(p, "expected an array of numbers");
        c.push_back(v.get<double>());
      }
      g.centers.push_back(std::move(c));
    }
    g.sigma = s.number("sigma", 1.0);
    g.per_cluster = s.unsigned_int("per_cluster", 1);
    model.kind = std::move(g);
  } else if (type == "subspace") {
    const std::size_t dim = s.unsigned_int("dim", 1);
    const json* inner = s.get("inner");
    if (!inner) fail(s.path("inner"), "required");
    model = make_subspace(dim, parse_distribution(*inner, s.path("inner")));
  } else {
    fail(s.path("type"), "expected uniform_ball, bernoulli, standard_normal, clusters or subspace");
  }
  s.finish();
  return model;
}

json distribution_to_json(const DistributionModel& model) {
  if (const auto* b = std::get_if<UniformBall>(&model.kind)) {
    return {{"type", "uniform_ball"}, {"radius", b->radius}};
  }
  if (std::holds_alternative<SymmetricBernoulli>(model.kind)) return {{"type", "bernoulli"}};
  if (const auto* n = std::get_if<StandardNormal>(&model.kind)) {
    return {{"type", "standard_normal"}, {"sigma", n->sigma}};
  }
  if (const auto* g = std::get_if<GaussianClusters>(&model.kind)) {
    return {{"type", "clusters"}, {"centers", g->centers}, {"sigma", g->sigma},
            {"per_cluster", g->per_cluster}};
  }
  const auto& sub = std::get<Subspace>(model.kind);
  return {{"type", "subspace"}, {"dim", sub.dim}, {"inner", distribution_to_json(*sub.inner)}};
}

ExperimentConfig parse_config(const json& j) {
  Section s(j, "$");
  ExperimentConfig c;
  const std::string schema = s.string("schema", kConfigSchema);
  if (schema != kConfigSchema) {
    fail(s.path("schema"), std::string("unsupported schema (expected ") + kConfigSchema + ")");
  }
  c.seed = s.unsigned_int("seed", c.seed);
  if (const json* q = s.get("quant")) c.quant = parse_quant(*q, s.path("quant"), c);
  if (const json* d = s.get("data")) c.data = parse_data(*d, s.path("data"));
  if (const json* t = s.get("trial")) c.trial = parse_trial(*t, s.path("trial"));
  if (const json* w = s.get("width_sweep")) c.width_sweep = parse_width_sweep(*w, s.path("width_sweep"));
  if (const json* l = s.get("lambda_sweep")) c.lambda_sweep = parse_lambda_sweep(*l, s.path("lambda_sweep"));
  if (const json* cr = s.get("criteria")) {
    if (!cr->is_array()) fail(s.path("criteria"), "expected an array");
    for (std::size_t i = 0; i < cr->size(); ++i) {
      const json& v = (*cr)[i];
      if (!v.is_number_integer() || v.get<int>() < 1 || v.get<int>() > 11) {
        fail(s.path("criteria") + "[" + std::to_string(i) + "]", "expected an integer in [1, 11]");
      }
      c.criteria.push_back(v.get<int>());
    }
  }
  if (const json* o = s.get("output")) {
    Section os(*o, s.path("output"));
    c.output_dir = os.string("dir", "");
    os.finish();
  }
  s.finish();
  if (c.data) {
    c.trial.model = c.data->model;
    c.trial.m = c.data->m;
    c.trial.N0 = c.data->N0;
  }
  if (c.width_sweep && !c.data) fail("$.width_sweep", "needs a data section");
  apply_seed(c, c.seed);
  return c;
}

ExperimentConfig parse_config_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Config, std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

void apply_seed(ExperimentConfig& config, std::uint64_t seed) {
  config.seed = seed;
  config.quant.seed = derive_seed(seed, {1});
  if (config.data) config.data->seed = derive_seed(seed, {2});
  if (config.lambda_sweep) {
    config.lambda_sweep->task.seed = derive_seed(seed, {3});
    config.lambda_sweep->train.seed = derive_seed(seed, {4});
  }
}

}  // namespace gpfq
