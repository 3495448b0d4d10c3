#pragma once

// File formats.
//
// Tensor file, all integers little-endian:
//   offset 0   8 bytes  magic "GPFQTNSR"
//   offset 8   u32      version (1)
//   offset 12  u8       dtype (0 = f32, 1 = f64)
//   offset 13  u8       ndim
//   offset 14  u64 x ndim  dims
//   then       product(dims) values, row-major, IEEE-754 little-endian
//
// Model manifest, UTF-8 text, one layer per line after the header:
//   # gpfq-model v1
//   layer dense weights=w0.gtns bias=b0.gtns activation=relu dims=784x128
//   layer conv weights=w1.gtns bias=none activation=identity dims=16x3x3x3
// Paths are relative to the manifest. `bias=none` means zeros. Quantized
// models may also carry delta=, lambda= and codes= (integer-code sidecar).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "gpfq/layers.hpp"
#include "gpfq/tensor.hpp"

namespace gpfq {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

inline constexpr char kTensorMagic[9] = "GPFQTNSR";
inline constexpr std::uint32_t kTensorVersion = 1;
inline constexpr const char* kManifestHeader = "# gpfq-model v1";

std::string encode_tensor(const Tensor& tensor, DType dtype = DType::F64);
/// Throws Format on bad magic, version, dtype, length or non-finite values.
Tensor decode_tensor(std::string_view bytes, DType* dtype = nullptr);

std::string read_file(const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path, DType* dtype = nullptr);

struct ManifestEntry {
  std::string type;  // dense | conv
  std::string weights;
  std::string bias;  // "none" for zeros
  std::string activation;
  std::vector<std::size_t> dims;
  std::map<std::string, std::string> extra;  // delta, lambda, codes
};

struct Manifest {
  std::vector<ManifestEntry> layers;
};

/// Throws Format on syntax errors.
Manifest parse_manifest(std::string_view text);
std::string render_manifest(const Manifest& manifest);

struct LoadedModel {
  ModelSpec model;
  Manifest manifest;
  std::vector<DType> weight_dtypes;  // one per layer, as stored
};

/// Loads every referenced file and checks shapes against dims and the
/// layer chain. Throws Io for missing files, Format or IncompatibleModel otherwise.
LoadedModel load_model_files(const std::filesystem::path& manifest_path);
ModelSpec load_model(const std::filesystem::path& manifest_path);

/// A set of output files held in memory until commit(), so a failed command
/// leaves nothing behind. commit() removes whatever it wrote if a write fails.
class OutputSet {
 public:
  void add(std::string name, std::string contents);
  bool empty() const noexcept { return files_.empty(); }
  const std::vector<std::pair<std::string, std::string>>& files() const noexcept { return files_; }
  /// Writes every file under dir (created if needed). Throws Io.
  void commit(const std::filesystem::path& dir) const;

 private:
  std::vector<std::pair<std::string, std::string>> files_;
};

struct LayerFiles {
  DType weights_dtype = DType::F64;
  /// Records delta= and lambda= in the manifest.
  bool quantized = false;
  double delta = 0.0;
  double lambda = 0.0;  // > 0 for threshold alphabets
  /// Also writes an f32 integer-code file.
  bool codes = false;
};

/// Adds the manifest and tensor files for `model` to `out`. Layers past the
/// end of `files` use the defaults.
void add_model_files(OutputSet& out, const ModelSpec& model, const std::vector<LayerFiles>& files,
                     const std::string& manifest_name = "model.gpfq");

/// Integer code of a level: q / delta for midtread alphabets, and
/// sign(q) (1 + (|q| - lambda) / delta) for threshold alphabets (0 stays 0).
double level_code(double q, double delta, double lambda) noexcept;

}  // namespace gpfq
