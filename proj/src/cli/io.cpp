#include "gpfq/io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gpfq/error.hpp"

namespace gpfq {
namespace fs = std::filesystem;
namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_le(std::string_view in, std::size_t offset, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return v;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
  std::vector<std::size_t> dims;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('x', start), text.size());
    const std::string part = text.substr(start, end - start);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw Error(ErrorKind::Format, "bad dims '" + text + "'");
    }
    dims.push_back(std::stoull(part));
    start = end + 1;
  }
  return dims;
}

std::string render_dims(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s;
}

std::string render_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Tensor load_entry_tensor(const fs::path& base, const std::string& name, DType* dtype = nullptr) {
  const fs::path p = base / name;
  if (!fs::exists(p)) throw Error(ErrorKind::Io, "missing file " + p.string());
  return read_tensor(p, dtype);
}

}  // namespace

std::string encode_tensor(const Tensor& tensor, DType dtype) {
  if (tensor.shape.size() > 255) throw Error(ErrorKind::Format, "more than 255 dimensions");
  if (element_count(tensor.shape) != tensor.data.size()) {
    throw Error(ErrorKind::ShapeMismatch, "tensor data does not match its shape");
  }
  std::string out(kTensorMagic, 8);
  put_le(out, kTensorVersion, 4);
  out.push_back(static_cast<char>(dtype));
  out.push_back(static_cast<char>(tensor.shape.size()));
  for (std::size_t d : tensor.shape) put_le(out, d, 8);
  out.reserve(out.size() + tensor.data.size() * (dtype == DType::F64 ? 8 : 4));
  for (double v : tensor.data) {
    if (dtype == DType::F64) {
      put_le(out, std::bit_cast<std::uint64_t>(v), 8);
    } else {
      put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    }
  }
  return out;
}

Tensor decode_tensor(std::string_view bytes, DType* dtype_out) {
  if (bytes.size() < 14 || bytes.substr(0, 8) != std::string_view(kTensorMagic, 8)) {
    throw Error(ErrorKind::Format, "not a tensor file (bad magic)");
  }
  const auto version = get_le(bytes, 8, 4);
  if (version != kTensorVersion) {
    throw Error(ErrorKind::Format, "unsupported tensor version " + std::to_string(version));
  }
  const auto code = static_cast<unsigned char>(bytes[12]);
  if (code > 1) throw Error(ErrorKind::Format, "unknown dtype " + std::to_string(code));
  const DType dtype = static_cast<DType>(code);
  const std::size_t ndim = static_cast<unsigned char>(bytes[13]);
  std::size_t offset = 14;
  if (bytes.size() < offset + 8 * ndim) throw Error(ErrorKind::Format, "truncated header");

  Tensor t;
  std::size_t count = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    const std::uint64_t d = get_le(bytes, offset, 8);
    offset += 8;
    if (d != 0 && count > (std::uint64_t{1} << 60) / d) {
      throw Error(ErrorKind::Format, "tensor too large");
    }
    count *= d;
    t.shape.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t width = dtype == DType::F64 ? 8 : 4;
  if (bytes.size() - offset != count * width) {
    throw Error(ErrorKind::Format, "payload is " + std::to_string(bytes.size() - offset) +
                                       " bytes, expected " + std::to_string(count * width));
  }
  t.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += width) {
    const double v = dtype == DType::F64
                         ? std::bit_cast<double>(get_le(bytes, offset, 8))
                         : static_cast<double>(std::bit_cast<float>(
                               static_cast<std::uint32_t>(get_le(bytes, offset, 4))));
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::Format, "non-finite value at index " + std::to_string(i));
    }
    t.data[i] = v;
  }
  if (dtype_out) *dtype_out = dtype;
  return t;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return ss.str();
}

Tensor read_tensor(const fs::path& path, DType* dtype) {
  try {
    return decode_tensor(read_file(path), dtype);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Format) {
      throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
    throw;
  }
}

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header) {
      if (line != kManifestHeader) {
        throw Error(ErrorKind::Format, std::string("manifest must start with '") + kManifestHeader + "'");
      }
      header = true;
      continue;
    }
    const auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    const std::string where = "manifest line " + std::to_string(lineno) + ": ";
    if (tokens[0] != "layer" || tokens.size() < 2) {
      throw Error(ErrorKind::Format, where + "expected 'layer <type> key=value...'");
    }
    ManifestEntry e;
    e.type = tokens[1];
    if (e.type != "dense" && e.type != "conv") {
      throw Error(ErrorKind::Format, where + "unknown layer type '" + e.type + "'");
    }
    for (std::size_t i = 2; i < tokens.size(); ++i) {
      const auto eq = tokens[i].find('=');
      if (eq == std::string::npos || eq == 0) {
        throw Error(ErrorKind::Format, where + "expected key=value, got '" + tokens[i] + "'");
      }
      const std::string key = tokens[i].substr(0, eq);
      const std::string value = tokens[i].substr(eq + 1);
      if (key == "weights") {
        e.weights = value;
      } else if (key == "bias") {
        e.bias = value;
      } else if (key == "activation") {
        e.activation = value;
      } else if (key == "dims") {
        e.dims = parse_dims(value);
      } else if (key == "delta" || key == "lambda" || key == "codes") {
        e.extra[key] = value;
      } else {
        throw Error(ErrorKind::Format, where + "unknown key '" + key + "'");
      }
    }
    if (e.weights.empty()) throw Error(ErrorKind::Format, where + "missing weights=");
    if (e.bias.empty()) e.bias = "none";
    if (e.activation.empty()) e.activation = "identity";
    m.layers.push_back(std::move(e));
  }
  if (!header) throw Error(ErrorKind::Format, "empty manifest");
  return m;
}

std::string render_manifest(const Manifest& manifest) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const ManifestEntry& e : manifest.layers) {
    out += "layer " + e.type + " weights=" + e.weights + " bias=" + e.bias +
           " activation=" + e.activation;
    if (!e.dims.empty()) out += " dims=" + render_dims(e.dims);
    for (const auto& [k, v] : e.extra) out += " " + k + "=" + v;
    out += "\n";
  }
  return out;
}

LoadedModel load_model_files(const fs::path& manifest_path) {
  LoadedModel loaded;
  loaded.manifest = parse_manifest(read_file(manifest_path));
  const Manifest& manifest = loaded.manifest;
  ModelSpec& model = loaded.model;
  const fs::path base = manifest_path.parent_path();
  for (std::size_t i = 0; i < manifest.layers.size(); ++i) {
    const ManifestEntry& e = manifest.layers[i];
    DType dtype = DType::F64;
    Tensor w = load_entry_tensor(base, e.weights, &dtype);
    loaded.weight_dtypes.push_back(dtype);
    if (!e.dims.empty() && e.dims != w.shape) {
      throw Error(ErrorKind::IncompatibleModel,
                  "layer " + std::to_string(i) + ": dims=" + render_dims(e.dims) +
                      " but weights are " + shape_string(w.shape));
    }
    const Activation act = parse_activation(e.activation);
    std::vector<double> bias;
    if (e.bias != "none") bias = load_entry_tensor(base, e.bias).data;
    if (e.type == "dense") {
      if (w.rank() != 2) {
        throw Error(ErrorKind::IncompatibleModel, "layer " + std::to_string(i) + ": dense weights must be 2-D");
      }
      if (bias.empty()) bias.assign(w.shape[1], 0.0);
      model.layers.push_back(DenseLayer{w.flatten_to_matrix(), std::move(bias), act});
    } else {
      if (w.rank() != 4) {
        throw Error(ErrorKind::IncompatibleModel, "layer " + std::to_string(i) + ": conv weights must be 4-D");
      }
      if (bias.empty()) bias.assign(w.shape[0], 0.0);
      model.layers.push_back(ConvLayer{std::move(w), std::move(bias), act});
    }
  }
  try {
    model.validate();
  } catch (const Error& err) {
    throw Error(ErrorKind::IncompatibleModel, err.what());
  }
  return loaded;
}

ModelSpec load_model(const fs::path& manifest_path) {
  return load_model_files(manifest_path).model;
}

void OutputSet::add(std::string name, std::string contents) {
  for (auto& [n, c] : files_) {
    if (n == name) {
      c = std::move(contents);
      return;
    }
  }
  files_.emplace_back(std::move(name), std::move(contents));
}

void OutputSet::commit(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (const auto& [name, contents] : files_) {
    const fs::path p = dir / name;
    const fs::path tmp = dir / (name + ".partial");
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.close();
    if (!out) {
      fs::remove(tmp, ec);
      for (const fs::path& w : written) fs::remove(w, ec);
      throw Error(ErrorKind::Io, "cannot write " + p.string());
    }
    written.push_back(tmp);
  }
  for (std::size_t i = 0; i < files_.size(); ++i) {
    const fs::path p = dir / files_[i].first;
    fs::rename(written[i], p, ec);
    if (ec) {
      for (std::size_t j = 0; j < files_.size(); ++j) {
        std::error_code ignored;
        fs::remove(j < i ? dir / files_[j].first : written[j], ignored);
      }
      throw Error(ErrorKind::Io, "cannot finalize " + p.string());
    }
  }
}

double level_code(double q, double delta, double lambda) noexcept {
  if (q == 0.0) return 0.0;
  if (lambda > 0.0) {
    const double k = std::round((std::abs(q) - lambda) / delta) + 1.0;
    return q > 0.0 ? k : -k;
  }
  return std::round(q / delta);
}

void add_model_files(OutputSet& out, const ModelSpec& model, const std::vector<LayerFiles>& files,
                     const std::string& manifest_name) {
  Manifest manifest;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    ManifestEntry e;
    const std::string stem = "layer" + std::to_string(i);
    Tensor weights;
    std::vector<double> bias;
    Activation act = Activation::Identity;
    if (const auto* d = std::get_if<DenseLayer>(&model.layers[i])) {
      e.type = "dense";
      weights = Tensor::from_matrix(d->weights);
      bias = d->bias;
      act = d->activation;
    } else {
      const auto& c = std::get<ConvLayer>(model.layers[i]);
      e.type = "conv";
      weights = c.kernels;
      bias = c.bias;
      act = c.activation;
    }
    e.weights = stem + "_weights.gtns";
    e.bias = stem + "_bias.gtns";
    e.activation = to_string(act);
    e.dims = weights.shape;
    const LayerFiles opts = i < files.size() ? files[i] : LayerFiles{};
    out.add(e.weights, encode_tensor(weights, opts.weights_dtype));
    out.add(e.bias, encode_tensor(Tensor({bias.size()}, bias)));
    if (opts.quantized) {
      e.extra["delta"] = render_double(opts.delta);
      e.extra["lambda"] = render_double(opts.lambda);
    }
    if (opts.quantized && opts.codes) {
      Tensor code_tensor = weights;
      for (double& v : code_tensor.data) v = level_code(v, opts.delta, opts.lambda);
      e.extra["codes"] = stem + "_codes.gtns";
      out.add(e.extra["codes"], encode_tensor(code_tensor, DType::F32));
    }
    manifest.layers.push_back(std::move(e));
  }
  out.add(manifest_name, render_manifest(manifest));
}

}  // namespace gpfq
