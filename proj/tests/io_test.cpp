#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "gpfq/config.hpp"
#include "gpfq/error.hpp"
#include "gpfq/io.hpp"
#include "test_support.hpp"

using namespace gpfq;

namespace {

ErrorKind decode_error(const std::string& bytes) {
  try {
    decode_tensor(bytes);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::Io;
}

ErrorKind config_error(const std::string& text, std::string* what = nullptr) {
  try {
    parse_config_text(text);
  } catch (const Error& e) {
    if (what) *what = e.what();
    return e.kind();
  }
  return ErrorKind::Io;
}

void write(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

}  // namespace

TEST_CASE("tensor files round-trip bit-exactly") {
  Tensor t({2, 3, 1});
  t.data = {0.1, -0.0, 5e-324, -1.7976931348623157e308, 1.0 / 3.0, 42.0};
  DType dtype = DType::F32;
  const Tensor back = decode_tensor(encode_tensor(t), &dtype);
  CHECK(dtype == DType::F64);
  CHECK(back.shape == t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    CHECK(std::bit_cast<std::uint64_t>(back.data[i]) == std::bit_cast<std::uint64_t>(t.data[i]));
  }

  Tensor f({4}, std::vector<double>{0.5, -2.25, 1e-3, 3.0});
  const std::string bytes = encode_tensor(f, DType::F32);
  CHECK(bytes.size() == 8 + 4 + 1 + 1 + 8 + 4 * 4);
  const Tensor fb = decode_tensor(bytes, &dtype);
  CHECK(dtype == DType::F32);
  CHECK(fb.data[0] == 0.5);
  CHECK(fb.data[2] == static_cast<double>(static_cast<float>(1e-3)));
  CHECK(encode_tensor(fb, DType::F32) == bytes);
}

TEST_CASE("tensor header layout is little-endian") {
  const std::string b = encode_tensor(Tensor({2}, std::vector<double>{1.0, 2.0}));
  CHECK(b.substr(0, 8) == "GPFQTNSR");
  CHECK(static_cast<unsigned char>(b[8]) == 1);
  CHECK(b[9] == 0);
  CHECK(static_cast<unsigned char>(b[12]) == 1);
  CHECK(static_cast<unsigned char>(b[13]) == 1);
  CHECK(static_cast<unsigned char>(b[14]) == 2);
  CHECK(b.size() == 22 + 16);
}

TEST_CASE("malformed tensor files are rejected") {
  const std::string good = encode_tensor(Tensor({3}, std::vector<double>{1, 2, 3}));
  std::string bad = good;
  bad[0] = 'X';
  CHECK(decode_error(bad) == ErrorKind::Format);
  bad = good;
  bad[8] = 2;
  CHECK(decode_error(bad) == ErrorKind::Format);
  bad = good;
  bad[12] = 7;
  CHECK(decode_error(bad) == ErrorKind::Format);
  CHECK(decode_error(good.substr(0, good.size() - 1)) == ErrorKind::Format);
  CHECK(decode_error(good + "x") == ErrorKind::Format);
  CHECK(decode_error(good.substr(0, 10)) == ErrorKind::Format);
  const std::string nan = encode_tensor(Tensor({1}, std::vector<double>{0.0}));
  std::string with_nan = nan;
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(with_nan.data() + with_nan.size() - 8, &q, 8);
  CHECK(decode_error(with_nan) == ErrorKind::Format);
}

TEST_CASE("manifest parsing") {
  const Manifest m = parse_manifest(
      "# gpfq-model v1\n"
      "# a comment\n"
      "layer dense weights=w.gtns bias=none activation=relu dims=4x3\n"
      "\n"
      "layer conv weights=k.gtns bias=b.gtns activation=identity dims=2x1x3x3 delta=0.5\n");
  REQUIRE(m.layers.size() == 2);
  CHECK(m.layers[0].type == "dense");
  CHECK(m.layers[0].dims == std::vector<std::size_t>{4, 3});
  CHECK(m.layers[1].extra.at("delta") == "0.5");
  CHECK(parse_manifest(render_manifest(m)).layers[1].dims == m.layers[1].dims);

  CHECK_THROWS_AS(parse_manifest("layer dense weights=w.gtns bias=none activation=relu dims=4x3\n"), Error);
  CHECK_THROWS_AS(parse_manifest("# gpfq-model v1\nlayer dense weights=w.gtns colour=red\n"), Error);
  CHECK_THROWS_AS(parse_manifest("# gpfq-model v1\nlayer pool weights=w.gtns bias=none activation=relu dims=1\n"), Error);
}

TEST_CASE("load_model resolves files relative to the manifest") {
  const test::TempDir dir("io");
  write(dir / "w.gtns", encode_tensor(Tensor({4, 3}, 0.5)));
  write(dir / "m.gpfq", "# gpfq-model v1\nlayer dense weights=w.gtns bias=none activation=relu dims=4x3\n");
  const ModelSpec model = load_model(dir / "m.gpfq");
  REQUIRE(model.size() == 1);
  CHECK(std::get<DenseLayer>(model.layers[0]).bias == std::vector<double>(3, 0.0));

  write(dir / "bad_dims.gpfq", "# gpfq-model v1\nlayer dense weights=w.gtns bias=none activation=relu dims=3x4\n");
  try {
    load_model(dir / "bad_dims.gpfq");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompatibleModel);
  }
  write(dir / "missing.gpfq", "# gpfq-model v1\nlayer dense weights=nope.gtns bias=none activation=relu dims=4x3\n");
  try {
    load_model(dir / "missing.gpfq");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
  write(dir / "chain.gpfq",
        "# gpfq-model v1\n"
        "layer dense weights=w.gtns bias=none activation=relu dims=4x3\n"
        "layer dense weights=w.gtns bias=none activation=relu dims=4x3\n");
  CHECK_THROWS_AS(load_model(dir / "chain.gpfq"), Error);
}

TEST_CASE("output sets write everything or nothing") {
  const test::TempDir dir("out");
  OutputSet out;
  out.add("a.txt", "alpha");
  out.add("b.txt", "beta");
  out.commit(dir / "run");
  CHECK(read_file(dir / "run" / "a.txt") == "alpha");
  CHECK(read_file(dir / "run" / "b.txt") == "beta");

  OutputSet bad;
  bad.add("ok.txt", "fine");
  bad.add("sub/missing/x.txt", "cannot land");
  std::filesystem::create_directories(dir / "blocked");
  write(dir / "blocked" / "sub", "a file where a directory is needed");
  CHECK_THROWS_AS(bad.commit(dir / "blocked"), Error);
  CHECK_FALSE(std::filesystem::exists(dir / "blocked" / "ok.txt"));
}

TEST_CASE("integer codes") {
  CHECK(level_code(0.75, 0.25, 0.0) == 3.0);
  CHECK(level_code(-0.5, 0.25, 0.0) == -2.0);
  CHECK(level_code(0.0, 0.25, 0.1) == 0.0);
  CHECK(level_code(0.1, 0.25, 0.1) == 1.0);
  CHECK(level_code(-0.6, 0.25, 0.1) == -3.0);
}

TEST_CASE("experiment config parsing") {
  const ExperimentConfig c = parse_config_text(R"({
    "schema": "gpfq-experiment/1",
    "seed": 9,
    "quant": {"bits": 4, "C": 1.5, "variant": "hard", "lambda": 0.1, "lambda_scale": "relative",
              "bias_correction": true, "bias_scope": "all", "per_layer_bits": [3, 5]},
    "data": {"distribution": {"type": "subspace", "dim": 2,
                              "inner": {"type": "uniform_ball", "radius": 2}}, "m": 8, "N0": 32},
    "trial": {"bits": 3, "variant": "soft", "lambda_steps": 0.5},
    "width_sweep": {"N0": [16, 32, 64, 256], "trials": 3},
    "lambda_sweep": {"lambdas": [0, 0.0025, 0.005, 0.0075, 0.01, 0.0125], "variants": ["soft"]},
    "criteria": [1, 2],
    "output": {"dir": "out"}
  })");
  CHECK(c.seed == 9);
  CHECK(c.quant.bits == 4);
  CHECK(c.quant.variant.kind == VariantKind::Hard);
  CHECK(c.quant.lambda_scale == LambdaScale::RelativeToQmax);
  CHECK(c.quant.bias_scope == BiasCorrectionScope::AllLayers);
  CHECK(c.quant.per_layer_bits == std::vector<int>{3, 5});
  REQUIRE(c.data);
  CHECK(c.data->m == 8);
  CHECK(c.trial.m == 8);
  CHECK(c.trial.N0 == 32);
  CHECK(c.trial.variant.kind == VariantKind::Soft);
  CHECK(c.width_sweep->widths.size() == 4);
  CHECK(c.lambda_sweep->lambdas.size() == 6);
  CHECK(c.criteria == std::vector<int>{1, 2});
  CHECK(c.output_dir == "out");
  CHECK(describe(c.data->model) == describe(parse_distribution(distribution_to_json(c.data->model), "$")));

  ExperimentConfig d = c;
  apply_seed(d, 9);
  CHECK(d.quant.seed == c.quant.seed);
  apply_seed(d, 10);
  CHECK(d.quant.seed != c.quant.seed);
  CHECK(d.data->seed != c.data->seed);
}

TEST_CASE("config errors name the offending path") {
  std::string what;
  CHECK(config_error(R"({"quant": {"bits": "five"}})", &what) == ErrorKind::Config);
  CHECK(what.find("$.quant.bits") != std::string::npos);
  CHECK(config_error(R"({"quant": {"bitz": 5}})", &what) == ErrorKind::Config);
  CHECK(what.find("$.quant.bitz") != std::string::npos);
  CHECK(config_error(R"({"data": {"distribution": {"type": "cauchy"}}})", &what) == ErrorKind::Config);
  CHECK(what.find("$.data.distribution.type") != std::string::npos);
  CHECK(config_error(R"({"lambda_sweep": {"lambdas": [0, -1]}})", &what) == ErrorKind::Config);
  CHECK(what.find("$.lambda_sweep.lambdas[1]") != std::string::npos);
  CHECK(config_error(R"({"schema": "other/2"})") == ErrorKind::Config);
  CHECK(config_error(R"({"criteria": [12]})") == ErrorKind::Config);
  CHECK(config_error("{not json") == ErrorKind::Config);
  CHECK(config_error(R"({"width_sweep": {"N0": [1, 2, 3, 4]}})") == ErrorKind::Config);
  CHECK(config_error(R"({"data": {"distribution": {"type": "uniform_ball", "radius": -1}}})") ==
        ErrorKind::Config);
}
