// Command-line front end: generate / train / eval / edc / atlas / density /
// ablate / bench-loss, all driven by one JSON config plus key=value overrides.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "funface/atlas.hpp"
#include "funface/config.hpp"
#include "funface/eval.hpp"
#include "funface/experiment.hpp"
#include "funface/synth.hpp"
#include "funface/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace funface;

namespace {

constexpr const char* kOutputEnv = "FUNFACE_OUTPUT_DIR";

struct Invocation {
  std::string config_path;
  std::vector<std::string> overrides;
};

std::string keys_footer() {
  std::ostringstream os;
  os << "\nConfig keys (override with key=value; " << kOutputEnv << " overrides output_dir):\n";
  for (const auto& [key, value] : config_keys()) os << "  " << key << " = " << value << "\n";
  return os.str();
}

RunConfig resolve(const Invocation& inv) {
  std::optional<fs::path> path;
  if (!inv.config_path.empty()) path = inv.config_path;
  std::vector<std::string> overrides = inv.overrides;
  if (const char* env = std::getenv(kOutputEnv); env && *env)
    overrides.push_back(std::string("output_dir=") + env);
  return load_config(path, overrides);
}

fs::path output_dir(const RunConfig& cfg) {
  fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInput("output_dir: cannot create '" + dir.string() + "': " + ec.message());
  return dir;
}

json config_echo(const RunConfig& cfg) { return json::parse(serialize_config(cfg)); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open output file: " + path.string());
  os << text;
  if (!os) throw InvalidInput("failed writing output file: " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

/// Numbers printed so that they parse back to the same double.
std::string num(double v) { return json(v).dump(); }

fs::path checkpoint_path(const RunConfig& cfg) {
  return cfg.checkpoint.empty() ? fs::path(cfg.output_dir) / "checkpoint.bin" : fs::path(cfg.checkpoint);
}

Checkpoint load_matching_checkpoint(const RunConfig& cfg) {
  Checkpoint ck = load_checkpoint(checkpoint_path(cfg));
  if (ck.seed != cfg.seed)
    throw InvalidInput("checkpoint: trained with seed " + std::to_string(ck.seed) + " but config seed is " +
                       std::to_string(cfg.seed));
  return ck;
}

json tar_json(const std::vector<TarAtFar>& tars) {
  json a = json::array();
  for (const auto& t : tars) {
    json e{{"far", t.far_target}, {"attainable", t.attainable}};
    if (t.attainable) {
      e["threshold"] = t.threshold;
      e["tar"] = t.tar;
    }
    a.push_back(e);
  }
  return a;
}

json metrics_json(const BenchmarkMetrics& m) {
  json id{{"num_probes", m.degraded_identification.num_probes},
          {"num_excluded", m.degraded_identification.num_excluded}};
  for (std::size_t i = 0; i < m.degraded_identification.ranks.size(); ++i)
    id["rank" + std::to_string(m.degraded_identification.ranks[i])] = m.degraded_identification.rates[i];
  return json{{"clean_verification_accuracy", m.clean_accuracy},
              {"mixed_verification_accuracy", m.mixed_accuracy},
              {"mixed_tar_at_far", tar_json(m.mixed_tar)},
              {"degraded_identification", id},
              {"mean_norm_by_tier", m.mean_norm_by_tier}};
}

int cmd_generate(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const SynthData data = generate(cfg.resolved_synth(), 0);
  write_dataset(dir / "dataset.bin", data.dataset);
  json tiers = json::array();
  for (int t = 0; t < static_cast<int>(cfg.synth.quality_tiers.size()); ++t)
    tiers.push_back(data.dataset.tier_indices(t).size());
  write_json(dir / "dataset.json", json{{"samples", data.dataset.size()},
                                        {"input_dim", data.dataset.input_dim()},
                                        {"classes", data.dataset.num_classes},
                                        {"samples_per_tier", tiers},
                                        {"config", config_echo(cfg)}});
  std::cout << "wrote " << (dir / "dataset.bin").string() << " (" << data.dataset.size() << " samples)\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Dataset data = cfg.dataset.empty() ? generate(cfg.resolved_synth(), 0).dataset : read_dataset(cfg.dataset);
  const TrainResult r = train(data, cfg.resolved_train());
  save_checkpoint(dir / "checkpoint.bin", r.checkpoint);

  std::ostringstream csv;
  std::size_t tiers = r.metrics.empty() ? 0 : r.metrics.front().mean_norm_by_tier.size();
  csv << "epoch,lr,mean_loss,mean_norm,mean_cr,clamp_rate";
  for (std::size_t t = 0; t < tiers; ++t) csv << ",mean_norm_tier" << t;
  csv << "\n";
  for (const auto& m : r.metrics) {
    csv << m.epoch << ',' << num(m.lr) << ',' << num(m.mean_loss) << ',' << num(m.mean_norm) << ','
        << num(m.mean_cr) << ',' << num(m.clamp_rate);
    for (double v : m.mean_norm_by_tier) csv << ',' << num(v);
    csv << "\n";
  }
  write_text(dir / "epochs.csv", csv.str());

  const auto& last = r.metrics.back();
  const NormalizerState& st = r.checkpoint.stats;
  write_json(dir / "train.json",
             json{{"epochs", r.checkpoint.epoch},
                  {"steps", r.checkpoint.step},
                  {"final_mean_loss", last.mean_loss},
                  {"final_mean_norm", last.mean_norm},
                  {"final_mean_cr", last.mean_cr},
                  {"final_clamp_rate", last.clamp_rate},
                  {"stats", {{"mu_z", st.mu_z}, {"sigma_z", st.sigma_z}, {"mu_cr", st.mu_cr}, {"sigma_cr", st.sigma_cr}}},
                  {"config", config_echo(cfg)}});
  std::cout << "trained " << r.checkpoint.epoch << " epochs, final mean loss " << last.mean_loss << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Checkpoint ck = load_matching_checkpoint(cfg);
  const SynthData eval_data = evaluation_split(cfg.resolved_synth(), cfg.eval);
  const BenchmarkMetrics m = evaluate(ck, eval_data.dataset, cfg.eval);
  json out = metrics_json(m);
  out["config"] = config_echo(cfg);
  write_json(dir / "metrics.json", out);
  std::cout << "clean accuracy " << m.clean_accuracy << ", degraded rank-" << m.degraded_identification.ranks.front()
            << " " << m.degraded_identification.rates.front() << "\n";
  return 0;
}

int cmd_edc(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Checkpoint ck = load_matching_checkpoint(cfg);
  const SynthData eval_data = evaluation_split(cfg.resolved_synth(), cfg.eval);
  const EDCCurve curve = edc_benchmark(ck, eval_data.dataset, cfg.eval, cfg.train.margin.epsilon, cfg.eval.edc_quality);
  std::ostringstream csv;
  csv << "discard_fraction,fnmr\n";
  for (std::size_t i = 0; i < curve.fnmr_values.size(); ++i)
    csv << num(curve.discard_fractions[i]) << ',' << num(curve.fnmr_values[i]) << "\n";
  if (curve.truncated) csv << "# truncated: no mated pairs left beyond this point\n";
  write_text(dir / ("edc_" + curve.quality_source + ".csv"), csv.str());
  write_json(dir / ("edc_" + curve.quality_source + ".json"),
             json{{"quality_source", curve.quality_source},
                  {"fmr_target", curve.fmr_target},
                  {"threshold", curve.threshold},
                  {"discard_fractions", curve.discard_fractions},
                  {"fnmr", curve.fnmr_values},
                  {"truncated", curve.truncated},
                  {"config", config_echo(cfg)}});
  std::cout << "EDC (" << curve.quality_source << "): FNMR " << curve.fnmr_values.front() << " -> "
            << curve.fnmr_values.back() << "\n";
  return 0;
}

int cmd_atlas(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const auto slices = difference_map(cfg.resolved_atlas());
  json summary = json::array();
  for (const auto& s : slices) {
    const fs::path file = dir / ("atlas_" + s.name + ".csv");
    write_atlas_csv(file, s);
    const double band = band_mean_difference(s);
    summary.push_back(json{{"snapshot", s.name},
                           {"file", file.filename().string()},
                           {"band_mean_difference", std::isnan(band) ? json(nullptr) : json(band)},
                           {"b0_points", s.fun.boundary_b0.size()},
                           {"b1_points", s.fun.boundary_b1.size()}});
    std::cout << s.name << ": band mean difference " << band << "\n";
  }
  write_json(dir / "atlas.json", json{{"slices", summary}, {"config", config_echo(cfg)}});
  return 0;
}

int cmd_density(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const Checkpoint ck = load_matching_checkpoint(cfg);
  const SynthData eval_data = evaluation_split(cfg.resolved_synth(), cfg.eval);
  const Dataset& ds = eval_data.dataset;
  const MatrixD emb = embed(ck, ds.inputs);
  const DensityMap map = norm_utility_map(emb, ds.labels, ck.prototypes, ck.stats, cfg.train.margin.epsilon,
                                          cfg.train.margin.h, cfg.eval.density_norm_bins, cfg.eval.density_cr_bins);
  std::ostringstream samples;
  samples << "norm,cr,norm_hat,cr_hat,tier,label\n";
  for (std::size_t i = 0; i < map.norms.size(); ++i)
    samples << num(map.norms[i]) << ',' << num(map.crs[i]) << ',' << num(map.norm_hats[i]) << ','
            << num(map.cr_hats[i]) << ',' << ds.tier[i] << ',' << ds.labels[i] << "\n";
  write_text(dir / "density_samples.csv", samples.str());

  std::ostringstream grid;
  grid << "norm_bin,cr_bin,norm_lo,norm_hi,cr_lo,cr_hi,count\n";
  const int nb = static_cast<int>(map.counts.rows()), cb = static_cast<int>(map.counts.cols());
  const double nw = (map.norm_hi - map.norm_lo) / nb, cw = (map.cr_hi - map.cr_lo) / cb;
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < cb; ++b)
      grid << a << ',' << b << ',' << num(map.norm_lo + a * nw) << ',' << num(map.norm_lo + (a + 1) * nw) << ','
           << num(map.cr_lo + b * cw) << ',' << num(map.cr_lo + (b + 1) * cw) << ',' << map.counts(a, b) << "\n";
  write_text(dir / "density_grid.csv", grid.str());
  write_json(dir / "density.json", json{{"samples", map.norms.size()},
                                        {"norm_range", {map.norm_lo, map.norm_hi}},
                                        {"cr_range", {map.cr_lo, map.cr_hi}},
                                        {"config", config_echo(cfg)}});
  std::cout << "density over " << map.norms.size() << " samples\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const auto rows = ablate(cfg.resolved_synth(), cfg.resolved_train(), cfg.eval, cfg.ablate.lambdas,
                           cfg.ablate.seeds, cfg.ablate.include_adaface);
  std::ostringstream csv;
  csv << "variant,lambda,seed,final_loss,clean_accuracy,mixed_accuracy";
  for (int r : cfg.eval.ranks) csv << ",degraded_rank" << r;
  csv << "\n";
  json arr = json::array();
  for (const auto& row : rows) {
    csv << row.variant << ',' << (row.variant == "funface" ? num(row.lambda) : "") << ',' << row.seed << ','
        << num(row.final_loss) << ',' << num(row.metrics.clean_accuracy) << ','
        << num(row.metrics.mixed_accuracy);
    for (double v : row.metrics.degraded_identification.rates) csv << ',' << num(v);
    csv << "\n";
    json j = metrics_json(row.metrics);
    j["variant"] = row.variant;
    if (row.variant == "funface") j["lambda"] = row.lambda;
    j["seed"] = row.seed;
    j["final_loss"] = row.final_loss;
    arr.push_back(j);
  }
  write_text(dir / "ablate.csv", csv.str());
  write_json(dir / "ablate.json", json{{"rows", arr}, {"config", config_echo(cfg)}});
  std::cout << csv.str();
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const fs::path dir = output_dir(cfg);
  const auto timings = bench_loss(cfg.train.margin, cfg.bench.variants, cfg.bench.batch_size,
                                  cfg.synth.num_identities, cfg.train.embedding_dim, cfg.bench.repetitions,
                                  cfg.bench.warmup, cfg.seed);
  std::ostringstream csv;
  csv << "variant,mean_seconds,median_seconds,repetitions\n";
  json arr = json::array();
  for (const auto& t : timings) {
    csv << t.variant << ',' << num(t.mean) << ',' << num(t.median) << ',' << t.seconds.size() << "\n";
    arr.push_back(json{{"variant", t.variant}, {"mean_seconds", t.mean}, {"median_seconds", t.median},
                       {"repetitions", t.seconds.size()}});
  }
  write_text(dir / "bench.csv", csv.str());
  write_json(dir / "bench.json", json{{"timings", arr}, {"config", config_echo(cfg)}});
  std::cout << csv.str();
  return 0;
}

void error_json(const char* kind, const std::string& message) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-margin loss laboratory"};
  app.require_subcommand(1);
  app.footer(keys_footer());

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"generate", "Write the synthetic training dataset", cmd_generate},
      {"train", "Train the toy encoder and class centers; writes a checkpoint and per-epoch CSV", cmd_train},
      {"eval", "Verification and identification metrics for a trained checkpoint", cmd_eval},
      {"edc", "Error-versus-discard curve for a trained checkpoint", cmd_edc},
      {"atlas", "Gradient-scale fields and FunFace-minus-AdaFace difference maps", cmd_atlas},
      {"density", "Feature norm versus certainty ratio samples and histogram", cmd_density},
      {"ablate", "Train and evaluate once per mixing factor and seed", cmd_ablate},
      {"bench-loss", "Time loss forward and backward per variant", cmd_bench},
  };

  Invocation inv;
  bool print_config = false;
  const Command* chosen = nullptr;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("-c,--config", inv.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
    sub->add_option("overrides", inv.overrides, "key=value overrides, e.g. margin.lambda=0.3");
    sub->footer(keys_footer());
    sub->callback([&chosen, &c] { chosen = &c; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig cfg = resolve(inv);
    if (print_config) {
      std::cout << serialize_config(cfg);
      return 0;
    }
    return chosen->run(cfg);
  } catch (const InvalidInput& e) {
    error_json("invalid_input", e.what());
    return 2;
  } catch (const NumericalError& e) {
    error_json("numerical", e.what());
    return 3;
  } catch (const std::exception& e) {
    error_json("internal", e.what());
    return 1;
  }
}
