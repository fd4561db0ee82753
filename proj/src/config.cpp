#include "funface/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace funface {

using json = nlohmann::ordered_json;

namespace {

[[noreturn]] void type_error(const std::string& key, const char* expected) {
  throw InvalidInput("config: " + key + ": expected " + expected);
}

void read(const json& j, const std::string& key, double& out) {
  if (!j.is_number()) type_error(key, "a number");
  out = j.get<double>();
}

void read(const json& j, const std::string& key, int& out) {
  if (!j.is_number_integer()) type_error(key, "an integer");
  const auto v = j.get<long long>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    type_error(key, "an integer in int range");
  out = static_cast<int>(v);
}

void read(const json& j, const std::string& key, std::uint64_t& out) {
  if (j.is_number_unsigned()) {
    out = j.get<std::uint64_t>();
    return;
  }
  if (j.is_number_integer() && j.get<long long>() >= 0) {
    out = static_cast<std::uint64_t>(j.get<long long>());
    return;
  }
  type_error(key, "a non-negative integer");
}

void read(const json& j, const std::string& key, bool& out) {
  if (!j.is_boolean()) type_error(key, "true or false");
  out = j.get<bool>();
}

void read(const json& j, const std::string& key, std::string& out) {
  if (!j.is_string()) type_error(key, "a string");
  out = j.get<std::string>();
}

void read(const json& j, const std::string& key, Variant& out) {
  if (!j.is_string()) type_error(key, "a variant name");
  try {
    out = parse_variant(j.get<std::string>());
  } catch (const InvalidInput& e) {
    std::string msg = e.what();
    const auto colon = msg.find(": ");
    throw InvalidInput("config: " + key + msg.substr(colon == std::string::npos ? 0 : colon));
  }
}

template <typename T>
void read(const json& j, const std::string& key, std::vector<T>& out) {
  if (!j.is_array()) type_error(key, "a list");
  std::vector<T> v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) read(j[i], key + "[" + std::to_string(i) + "]", v[i]);
  out = std::move(v);
}

/// Object reader that remembers which keys were consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) type_error(path_.empty() ? std::string("<root>") : path_, "an object");
  }

  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (auto it = j_.find(key); it != j_.end()) read(*it, name(key), out);
  }

  /// Sub-object, or an empty one when absent.
  Section sub(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? empty : *it, name(key));
  }

  const json* list(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    if (!it->is_array()) type_error(name(key), "a list");
    return &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw InvalidInput("config: unknown key '" + name(k) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json variants_json(const std::vector<Variant>& vs) {
  json a = json::array();
  for (Variant v : vs) a.push_back(std::string(to_string(v)));
  return a;
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] = c.dataset;
  j["checkpoint"] = c.checkpoint;

  json& s = j["synth"];
  s["num_identities"] = c.synth.num_identities;
  s["samples_per_identity"] = c.synth.samples_per_identity;
  s["input_dim"] = c.synth.input_dim;
  s["quality_tiers"] = json::array();
  for (const auto& t : c.synth.quality_tiers)
    s["quality_tiers"].push_back(json{{"fraction", t.fraction}, {"noise_sigma", t.noise_sigma}});

  const TrainConfig& tc = c.train;
  json& t = j["train"];
  t["epochs"] = tc.epochs;
  t["batch_size"] = tc.batch_size;
  t["lr"] = tc.lr;
  t["weight_decay"] = tc.weight_decay;
  t["momentum"] = tc.momentum;
  t["lr_drop_epochs"] = tc.lr_drop_epochs;
  t["lr_drop_factor"] = tc.lr_drop_factor;
  t["embedding_dim"] = tc.embedding_dim;
  t["hidden_dim"] = tc.hidden_dim;
  t["encoder_init_gain"] = tc.encoder_init_gain;
  t["ema_momentum"] = tc.ema_momentum;
  t["augment"] = tc.augment;

  const MarginConfig& mc = tc.margin;
  json& m = j["margin"];
  m["variant"] = std::string(to_string(mc.variant));
  m["m"] = mc.m;
  m["m_sph"] = mc.m_sph;
  m["m_arc"] = mc.m_arc;
  m["m_cos"] = mc.m_cos;
  m["s"] = mc.s;
  m["h"] = mc.h;
  m["lambda"] = mc.lambda;
  m["epsilon"] = mc.epsilon;

  const AugmentConfig& ac = tc.augment_config;
  json& a = j["augment"];
  a["p_noise"] = ac.p_noise;
  a["p_affine"] = ac.p_affine;
  a["p_mask"] = ac.p_mask;
  a["p_gray"] = ac.p_gray;
  a["noise_weight"] = ac.noise_weight;
  a["affine_max_angle"] = ac.affine_max_angle;
  a["affine_max_shift"] = ac.affine_max_shift;
  a["mask_fraction"] = ac.mask_fraction;

  const EvalConfig& ec = c.eval;
  json& e = j["eval"];
  e["samples_per_identity"] = ec.samples_per_identity;
  e["protocol_per_identity"] = ec.protocol_per_identity;
  e["far_targets"] = ec.far_targets;
  e["ranks"] = ec.ranks;
  e["fmr_target"] = ec.fmr_target;
  e["discard_fractions"] = ec.discard_fractions;
  e["edc_quality"] = ec.edc_quality;
  e["density_norm_bins"] = ec.density_norm_bins;
  e["density_cr_bins"] = ec.density_cr_bins;

  const AtlasConfig& at = c.atlas;
  json& g = j["atlas"];
  g["grid_resolution"] = at.grid_resolution;
  g["angle_between_centers"] = at.angle_between_centers;
  g["feature_norm_values"] = at.feature_norm_values;
  g["norm_lo"] = at.norm_lo;
  g["norm_hi"] = at.norm_hi;
  g["snapshots"] = json::array();
  for (const auto& snap : at.snapshots)
    g["snapshots"].push_back(json{{"name", snap.name},
                                  {"mu_z", snap.stats.mu_z},
                                  {"sigma_z", snap.stats.sigma_z},
                                  {"mu_cr", snap.stats.mu_cr},
                                  {"sigma_cr", snap.stats.sigma_cr}});

  json& ab = j["ablate"];
  ab["lambdas"] = c.ablate.lambdas;
  ab["seeds"] = c.ablate.seeds;
  ab["include_adaface"] = c.ablate.include_adaface;

  json& b = j["bench"];
  b["batch_size"] = c.bench.batch_size;
  b["repetitions"] = c.bench.repetitions;
  b["warmup"] = c.bench.warmup;
  b["variants"] = variants_json(c.bench.variants);
  return j;
}

RunConfig from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.get("dataset", c.dataset);
  root.get("checkpoint", c.checkpoint);

  {
    Section s = root.sub("synth");
    s.get("num_identities", c.synth.num_identities);
    s.get("samples_per_identity", c.synth.samples_per_identity);
    s.get("input_dim", c.synth.input_dim);
    if (const json* tiers = s.list("quality_tiers")) {
      c.synth.quality_tiers.clear();
      for (std::size_t i = 0; i < tiers->size(); ++i) {
        Section t((*tiers)[i], s.name("quality_tiers") + "[" + std::to_string(i) + "]");
        QualityTier q;
        t.get("fraction", q.fraction);
        t.get("noise_sigma", q.noise_sigma);
        t.finish();
        c.synth.quality_tiers.push_back(q);
      }
    }
    s.finish();
  }
  {
    TrainConfig& tc = c.train;
    Section t = root.sub("train");
    t.get("epochs", tc.epochs);
    t.get("batch_size", tc.batch_size);
    t.get("lr", tc.lr);
    t.get("weight_decay", tc.weight_decay);
    t.get("momentum", tc.momentum);
    t.get("lr_drop_epochs", tc.lr_drop_epochs);
    t.get("lr_drop_factor", tc.lr_drop_factor);
    t.get("embedding_dim", tc.embedding_dim);
    t.get("hidden_dim", tc.hidden_dim);
    t.get("encoder_init_gain", tc.encoder_init_gain);
    t.get("ema_momentum", tc.ema_momentum);
    t.get("augment", tc.augment);
    t.finish();
  }
  {
    MarginConfig& mc = c.train.margin;
    Section m = root.sub("margin");
    m.get("variant", mc.variant);
    m.get("m", mc.m);
    m.get("m_sph", mc.m_sph);
    m.get("m_arc", mc.m_arc);
    m.get("m_cos", mc.m_cos);
    m.get("s", mc.s);
    m.get("h", mc.h);
    m.get("lambda", mc.lambda);
    m.get("epsilon", mc.epsilon);
    m.finish();
  }
  {
    AugmentConfig& ac = c.train.augment_config;
    Section a = root.sub("augment");
    a.get("p_noise", ac.p_noise);
    a.get("p_affine", ac.p_affine);
    a.get("p_mask", ac.p_mask);
    a.get("p_gray", ac.p_gray);
    a.get("noise_weight", ac.noise_weight);
    a.get("affine_max_angle", ac.affine_max_angle);
    a.get("affine_max_shift", ac.affine_max_shift);
    a.get("mask_fraction", ac.mask_fraction);
    a.finish();
  }
  {
    EvalConfig& ec = c.eval;
    Section e = root.sub("eval");
    e.get("samples_per_identity", ec.samples_per_identity);
    e.get("protocol_per_identity", ec.protocol_per_identity);
    e.get("far_targets", ec.far_targets);
    e.get("ranks", ec.ranks);
    e.get("fmr_target", ec.fmr_target);
    e.get("discard_fractions", ec.discard_fractions);
    e.get("edc_quality", ec.edc_quality);
    e.get("density_norm_bins", ec.density_norm_bins);
    e.get("density_cr_bins", ec.density_cr_bins);
    e.finish();
  }
  {
    AtlasConfig& at = c.atlas;
    Section g = root.sub("atlas");
    g.get("grid_resolution", at.grid_resolution);
    g.get("angle_between_centers", at.angle_between_centers);
    g.get("feature_norm_values", at.feature_norm_values);
    g.get("norm_lo", at.norm_lo);
    g.get("norm_hi", at.norm_hi);
    if (const json* snaps = g.list("snapshots")) {
      at.snapshots.clear();
      for (std::size_t i = 0; i < snaps->size(); ++i) {
        Section s((*snaps)[i], g.name("snapshots") + "[" + std::to_string(i) + "]");
        StageSnapshot snap;
        snap.stats.initialized = true;
        s.get("name", snap.name);
        s.get("mu_z", snap.stats.mu_z);
        s.get("sigma_z", snap.stats.sigma_z);
        s.get("mu_cr", snap.stats.mu_cr);
        s.get("sigma_cr", snap.stats.sigma_cr);
        s.finish();
        if (snap.stats.sigma_z < 0 || snap.stats.sigma_cr < 0)
          throw InvalidInput("config: " + s.name("sigma") + ": standard deviations must be >= 0");
        at.snapshots.push_back(std::move(snap));
      }
    }
    g.finish();
  }
  {
    Section a = root.sub("ablate");
    a.get("lambdas", c.ablate.lambdas);
    a.get("seeds", c.ablate.seeds);
    a.get("include_adaface", c.ablate.include_adaface);
    a.finish();
  }
  {
    Section b = root.sub("bench");
    b.get("batch_size", c.bench.batch_size);
    b.get("repetitions", c.bench.repetitions);
    b.get("warmup", c.bench.warmup);
    b.get("variants", c.bench.variants);
    b.finish();
  }
  root.finish();
  c.validate();
  return c;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, out);
    return;
  }
  out.emplace_back(prefix, j.dump());
}

}  // namespace

void RunConfig::validate() const {
  if (output_dir.empty()) throw InvalidInput("config: output_dir: must not be empty");
  resolved_synth().validate();
  resolved_train().validate();
  eval.validate();
  resolved_atlas().validate();
  for (double l : ablate.lambdas)
    if (!(l >= 0.0 && l <= 1.0)) throw InvalidInput("config: ablate.lambdas: entries must lie in [0, 1]");
  if (ablate.seeds.empty()) throw InvalidInput("config: ablate.seeds: must not be empty");
  if (bench.batch_size < 1) throw InvalidInput("config: bench.batch_size: must be >= 1");
  if (bench.repetitions < 1) throw InvalidInput("config: bench.repetitions: must be >= 1");
  if (bench.warmup < 0) throw InvalidInput("config: bench.warmup: must be >= 0");
  if (bench.variants.empty()) throw InvalidInput("config: bench.variants: must not be empty");
}

SynthConfig RunConfig::resolved_synth() const {
  SynthConfig s = synth;
  s.seed = seed;
  return s;
}

TrainConfig RunConfig::resolved_train() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

AtlasConfig RunConfig::resolved_atlas() const {
  AtlasConfig a = atlas;
  a.margin_fun = train.margin;
  a.margin_fun.variant = Variant::kFunFace;
  a.margin_ada = train.margin;
  a.margin_ada.variant = Variant::kAdaFace;
  return a;
}

RunConfig parse_config(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text.begin(), json_text.end());
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config: malformed JSON: ") + e.what());
  }
  return from_json(j);
}

std::string serialize_config(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig resolve_config(std::string_view text, const std::vector<std::string>& overrides) {
  RunConfig base = text.find_first_not_of(" \t\r\n") == std::string_view::npos ? RunConfig{} : parse_config(text);
  if (overrides.empty()) return base;

  json tree = to_json(base);
  for (const std::string& ov : overrides) {
    const auto eq = ov.find('=');
    if (eq == std::string::npos || eq == 0)
      throw InvalidInput("config: override '" + ov + "' is not of the form key=value");
    const std::string key = ov.substr(0, eq);
    const std::string value = ov.substr(eq + 1);
    json* node = &tree;
    std::istringstream parts(key);
    std::string part, walked;
    while (std::getline(parts, part, '.')) {
      walked += walked.empty() ? part : "." + part;
      if (!node->is_object() || !node->contains(part))
        throw InvalidInput("config: unknown key '" + walked + "'");
      node = &(*node)[part];
    }
    if (node->is_object())
      throw InvalidInput("config: override '" + key + "' names a section, not a value");
    if (node->is_string()) {
      *node = value;
    } else {
      try {
        *node = json::parse(value);
      } catch (const json::parse_error&) {
        *node = value;  // surfaces as a type error naming the key
      }
    }
  }
  return from_json(tree);
}

RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const std::vector<std::string>& overrides) {
  std::string text;
  if (path) {
    std::ifstream is(*path);
    if (!is) throw InvalidInput("config: file not found: " + path->string());
    std::ostringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  return resolve_config(text, overrides);
}

std::vector<std::pair<std::string, std::string>> config_keys() {
  std::vector<std::pair<std::string, std::string>> out;
  flatten(to_json(RunConfig{}), "", out);
  return out;
}

}  // namespace funface
