#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "funface/atlas.hpp"
#include "funface/experiment.hpp"
#include "funface/synth.hpp"
#include "funface/trainer.hpp"

namespace funface {

struct AblateConfig {
  std::vector<double> lambdas{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<std::uint64_t> seeds{1};
  bool include_adaface = true;
};

struct BenchConfig {
  int batch_size = 256;
  int repetitions = 300;
  int warmup = 20;
  std::vector<Variant> variants{Variant::kArc, Variant::kAdaFace, Variant::kFunFace};
};

/// One document driving every subcommand. `seed` feeds both data generation
/// and training.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "funface_out";
  std::string dataset;     // optional dataset file for train; generated when empty
  std::string checkpoint;  // checkpoint for eval/edc/density; <output_dir>/checkpoint.bin when empty
  SynthConfig synth;
  TrainConfig train;
  EvalConfig eval;
  AtlasConfig atlas = AtlasConfig::defaults();
  AblateConfig ablate;
  BenchConfig bench;

  void validate() const;
  SynthConfig resolved_synth() const;
  TrainConfig resolved_train() const;
  /// Atlas margins taken from the `margin` section (FunFace and AdaFace).
  AtlasConfig resolved_atlas() const;
};

/// Strict parse: unknown keys, wrong types and invalid values throw
/// InvalidInput naming the offending key. Missing keys keep their defaults.
RunConfig parse_config(std::string_view json_text);
std::string serialize_config(const RunConfig& config);

/// Parses `text` (may be empty), then applies `key.path=value` overrides in
/// order. Values are read as JSON when possible, otherwise as strings.
RunConfig resolve_config(std::string_view text, const std::vector<std::string>& overrides);
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides);

/// Every leaf key of the default document with its default value.
std::vector<std::pair<std::string, std::string>> config_keys();

}  // namespace funface
