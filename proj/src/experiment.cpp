#include "rfmia/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "rfmia/checkpoint.hpp"
#include "rfmia/complexity.hpp"
#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "size_t fields are read as uint64");

// Reads one JSON object, remembering which keys were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + "expected an object");
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) out = as_uint(*v, key);
  }
  void get(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(where(key) + "expected a number");
      out = v->get<double>();
    }
  }
  void get(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(where(key) + "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(where(key) + "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(where(key) + "expected an array");
      out.clear();
      for (const auto& e : *v) out.push_back(static_cast<std::size_t>(as_uint(e, key)));
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + where_name(it.key()) + "'");
    }
  }

  std::string child_path(const std::string& key) const { return where_name(key); }

 private:
  std::uint64_t as_uint(const json& v, const std::string& key) const {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    throw ConfigError(where(key) + "expected a non-negative integer");
  }
  std::string where_name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where(const std::string& key = {}) const {
    return (key.empty() ? (path_.empty() ? std::string("config") : path_) : where_name(key)) + ": ";
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::string skip_name(SkipKind k) { return k == SkipKind::Isotropic ? "isotropic" : "none"; }

SkipKind parse_skip(const std::string& s) {
  if (s == "isotropic") return SkipKind::Isotropic;
  if (s == "none") return SkipKind::None;
  throw ConfigError("model.skip: expected 'none' or 'isotropic', got '" + s + "'");
}

std::string path_name(PathKind k) { return k == PathKind::OtCfm ? "otcfm" : "rf"; }

PathKind parse_path(const std::string& s) {
  if (s == "rf") return PathKind::RectifiedFlow;
  if (s == "otcfm") return PathKind::OtCfm;
  throw ConfigError("training.path.kind: expected 'rf' or 'otcfm', got '" + s + "'");
}

std::string sampler_name(SamplerKind k) { return k == SamplerKind::SymExp ? "symexp" : "uniform"; }

SamplerKind parse_sampler(const std::string& s) {
  if (s == "uniform") return SamplerKind::Uniform;
  if (s == "symexp") return SamplerKind::SymExp;
  throw ConfigError("sampler kind: expected 'uniform' or 'symexp', got '" + s + "'");
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  generator().validate();
  if (model.hidden.empty()) throw ConfigError("model.hidden: need at least one hidden layer");
  for (std::size_t w : model.hidden)
    if (w == 0) throw ConfigError("model.hidden: widths must be positive");
  if (!std::isfinite(model.output_gain) || model.output_gain < 0.0) {
    throw ConfigError("model.output_gain: must be finite and non-negative");
  }
  if (training.checkpoints == 0) throw ConfigError("training.checkpoints must be positive");
  if (training.steps % training.checkpoints != 0) {
    throw ConfigError("training.checkpoints must divide training.steps");
  }
  if (training.samplers.empty()) throw ConfigError("training.samplers: need at least one variant");
  std::set<std::string> names;
  for (const auto& v : training.samplers) {
    if (v.name.empty()) throw ConfigError("training.samplers: empty variant name");
    for (char c : v.name) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')) {
        throw ConfigError("training.samplers: variant name '" + v.name + "' must be [A-Za-z0-9_-]");
      }
    }
    if (!names.insert(v.name).second) throw ConfigError("training.samplers: duplicate name '" + v.name + "'");
    train_config(v).validate();
  }
  if (attack.attacks.empty()) throw ConfigError("attack.attacks: need at least one attack");
  for (const auto& a : attack.attacks) attack_config(a.statistic, a.t, a.n_mc).validate();
  if (attack.t_grid_points < 2) throw ConfigError("attack.t_grid_points must be >= 2");
  if (attack.n_mc_list.empty()) throw ConfigError("attack.n_mc_list must not be empty");
  for (std::size_t n : attack.n_mc_list)
    if (n == 0) throw ConfigError("attack.n_mc_list: entries must be >= 1");
  if (analysis.gap_draws == 0) throw ConfigError("analysis.gap_draws must be >= 1");
  likelihood_config().validate();
  if (analysis.mmd_samples < 2) throw ConfigError("analysis.mmd_samples must be >= 2");
  if (analysis.mmd_steps == 0) throw ConfigError("analysis.mmd_steps must be >= 1");
  if (analysis.mmd_reference < 2) throw ConfigError("analysis.mmd_reference must be >= 2");
}

json ExperimentConfig::to_json() const {
  json samplers = json::array();
  for (const auto& v : training.samplers) {
    json s = {{"name", v.name}, {"kind", sampler_name(v.sampler.kind)}};
    if (v.sampler.kind == SamplerKind::SymExp) s["alpha"] = v.sampler.alpha;
    samplers.push_back(s);
  }
  json attacks = json::array();
  for (const auto& a : attack.attacks) {
    attacks.push_back({{"statistic", statistic_name(a.statistic)}, {"t", a.t}, {"n_mc", a.n_mc}});
  }
  return {
      {"seed", seed},
      {"output_dir", output_dir},
      {"dataset",
       {{"n_per_split", dataset.n_per_split},
        {"patch", dataset.patch},
        {"f_lo", dataset.f_lo},
        {"f_hi", dataset.f_hi},
        {"noise_floor", dataset.noise_floor},
        {"amplitude", dataset.amplitude},
        {"base_level", dataset.base_level}}},
      {"model", {{"hidden", model.hidden}, {"output_gain", model.output_gain}, {"skip", skip_name(model.skip)}}},
      {"training",
       {{"steps", training.steps},
        {"batch_size", training.batch_size},
        {"lr", training.lr},
        {"log_interval", training.log_interval},
        {"checkpoints", training.checkpoints},
        {"path", {{"kind", path_name(training.path.kind)}, {"sigma_min", training.path.sigma_min}}},
        {"samplers", samplers}}},
      {"attack", {{"attacks", attacks}, {"t_grid_points", attack.t_grid_points}, {"n_mc_list", attack.n_mc_list}}},
      {"analysis",
       {{"lmmse", analysis.lmmse},
        {"gap_draws", analysis.gap_draws},
        {"likelihood", analysis.likelihood},
        {"likelihood_steps", analysis.likelihood_steps},
        {"likelihood_probes", analysis.likelihood_probes},
        {"mmd", analysis.mmd},
        {"mmd_reference", analysis.mmd_reference},
        {"mmd_samples", analysis.mmd_samples},
        {"mmd_steps", analysis.mmd_steps}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);

  if (const json* d = root.find("dataset")) {
    Section s(*d, "dataset");
    s.get("n_per_split", c.dataset.n_per_split);
    s.get("patch", c.dataset.patch);
    s.get("f_lo", c.dataset.f_lo);
    s.get("f_hi", c.dataset.f_hi);
    s.get("noise_floor", c.dataset.noise_floor);
    s.get("amplitude", c.dataset.amplitude);
    s.get("base_level", c.dataset.base_level);
    s.finish();
  }
  if (const json* m = root.find("model")) {
    Section s(*m, "model");
    s.get("hidden", c.model.hidden);
    s.get("output_gain", c.model.output_gain);
    std::string skip = skip_name(c.model.skip);
    s.get("skip", skip);
    c.model.skip = parse_skip(skip);
    s.finish();
  }
  if (const json* t = root.find("training")) {
    Section s(*t, "training");
    s.get("steps", c.training.steps);
    s.get("batch_size", c.training.batch_size);
    s.get("lr", c.training.lr);
    s.get("log_interval", c.training.log_interval);
    s.get("checkpoints", c.training.checkpoints);
    if (const json* p = s.find("path")) {
      Section ps(*p, "training.path");
      std::string kind = path_name(c.training.path.kind);
      ps.get("kind", kind);
      c.training.path.kind = parse_path(kind);
      ps.get("sigma_min", c.training.path.sigma_min);
      ps.finish();
    }
    if (const json* list = s.find("samplers")) {
      if (!list->is_array()) throw ConfigError("training.samplers: expected an array");
      c.training.samplers.clear();
      for (std::size_t i = 0; i < list->size(); ++i) {
        Section vs((*list)[i], "training.samplers[" + std::to_string(i) + "]");
        SamplerVariant v;
        vs.get("name", v.name);
        std::string kind = "uniform";
        vs.get("kind", kind);
        v.sampler.kind = parse_sampler(kind);
        vs.get("alpha", v.sampler.alpha);
        vs.finish();
        c.training.samplers.push_back(std::move(v));
      }
    }
    s.finish();
  }
  if (const json* a = root.find("attack")) {
    Section s(*a, "attack");
    if (const json* list = s.find("attacks")) {
      if (!list->is_array()) throw ConfigError("attack.attacks: expected an array");
      c.attack.attacks.clear();
      for (std::size_t i = 0; i < list->size(); ++i) {
        Section as((*list)[i], "attack.attacks[" + std::to_string(i) + "]");
        AttackSpec spec;
        std::string stat = statistic_name(spec.statistic);
        as.get("statistic", stat);
        try {
          spec.statistic = parse_statistic(stat);
        } catch (const Error& e) {
          throw ConfigError(as.child_path("statistic") + ": " + e.what());
        }
        as.get("t", spec.t);
        as.get("n_mc", spec.n_mc);
        as.finish();
        c.attack.attacks.push_back(spec);
      }
    }
    s.get("t_grid_points", c.attack.t_grid_points);
    s.get("n_mc_list", c.attack.n_mc_list);
    s.finish();
  }
  if (const json* a = root.find("analysis")) {
    Section s(*a, "analysis");
    s.get("lmmse", c.analysis.lmmse);
    s.get("gap_draws", c.analysis.gap_draws);
    s.get("likelihood", c.analysis.likelihood);
    s.get("likelihood_steps", c.analysis.likelihood_steps);
    s.get("likelihood_probes", c.analysis.likelihood_probes);
    s.get("mmd", c.analysis.mmd);
    s.get("mmd_reference", c.analysis.mmd_reference);
    s.get("mmd_samples", c.analysis.mmd_samples);
    s.get("mmd_steps", c.analysis.mmd_steps);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return hex16(io::fnv1a(j.dump()));
}

GeneratorConfig ExperimentConfig::generator() const {
  GeneratorConfig g = dataset;
  g.seed = derive_seed(seed, "dataset");
  return g;
}

MlpConfig ExperimentConfig::mlp_config() const {
  MlpConfig m;
  m.data_dim = dataset.dim();
  m.hidden = model.hidden;
  m.seed = derive_seed(seed, "model");
  m.output_gain = model.output_gain;
  if (model.skip == SkipKind::Isotropic) m.linear_skip = isotropic_skip(m.data_dim);
  return m;
}

TrainConfig ExperimentConfig::train_config(const SamplerVariant& variant) const {
  TrainConfig t;
  t.steps = training.steps;
  t.batch_size = training.batch_size;
  t.lr = training.lr;
  t.seed = derive_seed(seed, "train");
  t.path = training.path;
  t.sampler = variant.sampler;
  t.log_interval = training.log_interval;
  t.checkpoint_interval = checkpoint_interval();
  return t;
}

AttackConfig ExperimentConfig::attack_config(Statistic statistic, double t, std::size_t n_mc) const {
  AttackConfig a;
  a.statistic = statistic;
  a.t = t;
  a.n_mc = n_mc;
  a.seed = derive_seed(seed, "attack");
  return a;
}

LikelihoodConfig ExperimentConfig::likelihood_config() const {
  LikelihoodConfig l;
  l.n_steps = analysis.likelihood_steps;
  l.k = analysis.likelihood_probes;
  l.seed = derive_seed(seed, "likelihood");
  return l;
}

std::vector<double> ExperimentConfig::t_grid() const { return default_t_grid(attack.t_grid_points); }

std::uint64_t ExperimentConfig::checkpoint_interval() const {
  return training.checkpoints == 0 ? training.steps : training.steps / training.checkpoints;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

void apply_override(json& tree, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &tree;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    if (!node->is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

ExperimentConfig smoke_config() {
  ExperimentConfig c;
  c.output_dir = "rfmia-smoke";
  c.dataset.n_per_split = 32;
  c.dataset.patch = 4;
  c.dataset.f_hi = 2.0;
  c.model.hidden = {64, 64};
  c.training.steps = 500;
  c.training.batch_size = 32;
  c.training.log_interval = 50;
  c.training.checkpoints = 5;
  c.attack.t_grid_points = 11;
  c.analysis.likelihood_steps = 16;
  c.analysis.mmd_samples = 64;
  c.analysis.mmd_reference = 64;
  c.analysis.mmd_steps = 16;
  return c;
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  std::filesystem::path dir(cfg.output_dir);
  if (dir.is_relative()) {
    if (const char* root = std::getenv(std::string(kOutputRootEnv).c_str()); root && *root) {
      return std::filesystem::path(root) / dir;
    }
  }
  return dir;
}

std::string provenance_line(const ExperimentConfig& cfg) {
  return "# rfmia " + std::string(kToolkitVersion) + " config=" + cfg.hash();
}

// -------------------------------------------------------------- analyses

std::string NmcTable::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "n_mc,auc_mc,auc_mc_cal,t\n";
  for (const auto& r : rows) {
    os << r.n_mc << ',' << io::fmt_double(r.auc_mc) << ',' << io::fmt_double(r.auc_mc_cal) << ','
       << io::fmt_double(t) << '\n';
  }
  return os.str();
}

NmcTable sweep_nmc(const ExperimentConfig& cfg, const VelocityField& model, const PatchDataset& ds, double t) {
  NmcTable out;
  out.t = t;
  for (std::size_t n : cfg.attack.n_mc_list) {
    NmcRow row;
    row.n_mc = n;
    row.auc_mc = auc(score_dataset(model, ds, cfg.attack_config(Statistic::Mc, t, n)));
    row.auc_mc_cal = auc(score_dataset(model, ds, cfg.attack_config(Statistic::McCal, t, n)));
    out.rows.push_back(row);
  }
  return out;
}

double model_mmd(const ExperimentConfig& cfg, const VelocityField& model, const PatchDataset& ds) {
  // Fresh draws from the generator, past the indices used by the dataset, so
  // that copying members is not rewarded as fidelity.
  std::vector<std::vector<double>> reference;
  const std::uint64_t first = 2 * ds.config.n_per_split;
  for (std::uint64_t k = 0; k < cfg.analysis.mmd_reference; ++k)
    reference.push_back(ds.standardization.apply(generate_raw_patch(ds.config, first + k, nullptr)));
  // One bandwidth per dataset keeps values comparable across models.
  const double h = median_heuristic_bandwidth(reference, {});
  const auto generated =
      generate_samples(model, cfg.analysis.mmd_samples, cfg.analysis.mmd_steps, derive_seed(cfg.seed, "mmd"));
  return mmd_fidelity(generated, reference, h);
}

namespace {

std::size_t calibrated_nmc(const ExperimentConfig& cfg) {
  for (const auto& a : cfg.attack.attacks)
    if (a.statistic == Statistic::McCal) return a.n_mc;
  return 5;
}

}  // namespace

VariantSeries dynamics_series(const ExperimentConfig& cfg, const PatchDataset& ds, const SamplerVariant& variant,
                              const TrainResult& run) {
  VariantSeries series;
  series.name = variant.name;
  series.sampler = variant.sampler.descriptor();
  const auto grid = cfg.t_grid();
  const auto attack = cfg.attack_config(Statistic::McCal, 0.5, calibrated_nmc(cfg));
  for (const auto& [step, model] : run.checkpoints) {
    const auto sweep = sweep_auc_over_t(model, ds, attack, grid);
    DynamicsPoint p;
    p.step = step;
    p.peak_auc = sweep.best().auc;
    p.peak_t = sweep.best().t;
    p.mmd = cfg.analysis.mmd ? model_mmd(cfg, model, ds) : std::numeric_limits<double>::quiet_NaN();
    series.points.push_back(p);
  }
  return series;
}

std::string SamplerComparison::to_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "variant,sampler,step,peak_auc,peak_t,mmd\n";
  for (const auto& v : variants) {
    for (const auto& p : v.points) {
      os << v.name << ',' << v.sampler << ',' << p.step << ',' << io::fmt_double(p.peak_auc) << ','
         << io::fmt_double(p.peak_t) << ',' << io::fmt_double(p.mmd) << '\n';
    }
  }
  return os.str();
}

std::string SamplerComparison::mmd_csv(std::string_view header_comment) const {
  std::ostringstream os;
  if (!header_comment.empty()) os << header_comment << '\n';
  os << "variant,step,mmd\n";
  for (const auto& v : variants)
    for (const auto& p : v.points) os << v.name << ',' << p.step << ',' << io::fmt_double(p.mmd) << '\n';
  return os.str();
}

SamplerComparison compare_samplers(std::vector<VariantSeries> series) {
  if (series.size() < 2) throw ConfigError("compare_samplers: need at least two sampler variants");
  auto steps_of = [](const VariantSeries& v) {
    std::vector<std::uint64_t> s;
    for (const auto& p : v.points) s.push_back(p.step);
    return s;
  };
  const auto reference = steps_of(series.front());
  for (const auto& v : series) {
    if (steps_of(v) != reference) {
      throw ConfigError("compare_samplers: variant '" + v.name + "' uses a different step grid than '" +
                        series.front().name + "'");
    }
  }
  return SamplerComparison{std::move(series)};
}

// -------------------------------------------------------------- pipeline

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Data: return "gen-data";
    case Stage::Train: return "train";
    case Stage::Attack: return "attack";
    case Stage::SweepT: return "sweep-t";
    case Stage::SweepNmc: return "sweep-nmc";
    case Stage::LmmseGap: return "lmmse-gap";
    case Stage::Likelihood: return "likelihood";
    case Stage::CompareSamplers: return "compare-samplers";
    case Stage::Report: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::Data, Stage::Train, Stage::Attack, Stage::SweepT, Stage::SweepNmc, Stage::LmmseGap,
                  Stage::Likelihood, Stage::CompareSamplers, Stage::Report}) {
    if (stage_name(s) == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

namespace {

json roc_json(const RocReport& r) {
  json tpr = json::object();
  for (const auto& [level, value] : r.tpr_at_fpr) tpr[io::fmt_double(level)] = value;
  return {{"auc", r.auc},
          {"tpr_at_fpr", tpr},
          {"n_members", r.n_members},
          {"n_nonmembers", r.n_nonmembers},
          {"member_mean", r.member_mean},
          {"nonmember_mean", r.nonmember_mean},
          {"orientation", r.orientation}};
}

std::string sweep_file(const AttackSpec& a) {
  return "sweep_" + statistic_name(a.statistic) + "_n" + std::to_string(a.n_mc) + ".csv";
}

class Pipeline {
 public:
  Pipeline(const ExperimentConfig& cfg, const RunOptions& opts)
      : cfg_(cfg), opts_(opts), dir_(resolve_output_dir(cfg)), hash_(cfg.hash()), comment_(provenance_line(cfg)) {}

  ExperimentReport run() {
    cfg_.validate();
    std::filesystem::create_directories(dir_ / "stages");
    report_.dir = dir_;
    io::write_text(dir_ / "config.json", cfg_.to_json().dump(2) + "\n");

    const std::set<Stage> wanted = closure(opts_.until);
    struct Step {
      Stage stage;
      std::string name;
      std::function<json()> body;
      bool enabled;
    };
    std::vector<Step> steps;
    steps.push_back({Stage::Data, "gen-data", [&] { return stage_data(); }, true});
    for (const auto& v : cfg_.training.samplers) {
      steps.push_back({Stage::Train, "train:" + v.name, [&, v] { return stage_train(v); }, true});
    }
    steps.push_back({Stage::Attack, "attack", [&] { return stage_attack(); }, true});
    steps.push_back({Stage::SweepT, "sweep-t", [&] { return stage_sweep_t(); }, true});
    steps.push_back({Stage::SweepNmc, "sweep-nmc", [&] { return stage_sweep_nmc(); }, true});
    steps.push_back({Stage::LmmseGap, "lmmse-gap", [&] { return stage_gap(); }, cfg_.analysis.lmmse});
    steps.push_back({Stage::Likelihood, "likelihood", [&] { return stage_likelihood(); }, cfg_.analysis.likelihood});
    steps.push_back({Stage::CompareSamplers, "compare-samplers", [&] { return stage_compare(); },
                     cfg_.training.samplers.size() >= 2});

    for (const auto& step : steps) {
      StageStatus st;
      st.name = step.name;
      if (report_.failed_stage) {
        st.status = "not-run";
      } else if (!step.enabled) {
        st.status = "skipped";
      } else if (!wanted.count(step.stage)) {
        // Not requested; report it only if a valid record already exists.
        if (auto rec = load_record(step.name)) {
          st.status = "resumed";
          st.files = (*rec)["files"].get<std::vector<std::string>>();
          results_[step.name] = (*rec)["data"];
        } else {
          st.status = "not-run";
        }
      } else {
        current_files_.clear();
        try {
          if (auto rec = opts_.force ? std::nullopt : load_record(step.name)) {
            st.status = "resumed";
            resuming_ = true;
            resume_record_ = *rec;
            results_[step.name] = step.body();
            st.files = (*rec)["files"].get<std::vector<std::string>>();
          } else {
            st.status = "ran";
            resuming_ = false;
            results_[step.name] = step.body();
            st.files = current_files_;
            write_record(step.name, results_[step.name], st.files);
          }
        } catch (const std::exception& e) {
          st.status = "failed";
          st.error = e.what();
          st.files = current_files_;
          report_.failed_stage = step.name;
        }
      }
      report_.stages.push_back(st);
    }
    report_.summary = summary();
    const auto problems = validate_summary(report_.summary);
    if (!problems.empty()) throw InternalError("summary does not match its schema: " + problems.front());
    io::write_text(dir_ / "summary.json", report_.summary.dump(2) + "\n");
    io::write_text(dir_ / "summary.schema.json", summary_schema().dump(2) + "\n");
    return report_;
  }

 private:
  static std::set<Stage> closure(Stage until) {
    std::map<Stage, std::vector<Stage>> deps = {
        {Stage::Data, {}},
        {Stage::Train, {Stage::Data}},
        {Stage::Attack, {Stage::Train}},
        {Stage::SweepT, {Stage::Train}},
        {Stage::SweepNmc, {Stage::SweepT}},
        {Stage::LmmseGap, {Stage::Train}},
        {Stage::Likelihood, {Stage::Train}},
        {Stage::CompareSamplers, {Stage::Train}},
        {Stage::Report,
         {Stage::Attack, Stage::SweepT, Stage::SweepNmc, Stage::LmmseGap, Stage::Likelihood,
          Stage::CompareSamplers}},
    };
    std::set<Stage> out;
    std::vector<Stage> todo{until};
    while (!todo.empty()) {
      const Stage s = todo.back();
      todo.pop_back();
      if (!out.insert(s).second) continue;
      for (Stage d : deps[s]) todo.push_back(d);
    }
    return out;
  }

  std::filesystem::path record_path(const std::string& stage) const {
    std::string file = stage;
    std::replace(file.begin(), file.end(), ':', '_');
    return dir_ / "stages" / (file + ".json");
  }

  std::optional<json> load_record(const std::string& stage) const {
    const auto path = record_path(stage);
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path);
    json rec = json::parse(in, nullptr, false);
    if (rec.is_discarded() || !rec.is_object() || rec.value("config_hash", "") != hash_) return std::nullopt;
    if (!rec.contains("files") || !rec["files"].is_array() || !rec.contains("data")) return std::nullopt;
    for (const auto& f : rec["files"]) {
      if (!f.is_string() || !std::filesystem::exists(dir_ / f.get<std::string>())) return std::nullopt;
    }
    return rec;
  }

  void write_record(const std::string& stage, const json& data, const std::vector<std::string>& files) const {
    const json rec = {{"stage", stage},
                      {"toolkit_version", std::string(kToolkitVersion)},
                      {"config_hash", hash_},
                      {"files", files},
                      {"data", data}};
    io::write_text(record_path(stage), rec.dump(2) + "\n");
  }

  void emit_text(const std::string& rel, const std::string& text) {
    io::write_text(dir_ / rel, text);
    current_files_.push_back(rel);
  }

  // Stages return the data recorded for the summary. When resuming they
  // only reload what later stages need and return the stored data.

  json stage_data() {
    const std::string file = "dataset.bin";
    if (resuming_) {
      ds_ = load_dataset(dir_ / file);
      return resume_record_["data"];
    }
    PatchDataset ds = generate(cfg_.generator());
    fill_complexity(ds);
    save_dataset(ds, dir_ / file);
    current_files_.push_back(file);
    ds_ = std::move(ds);
    std::uint32_t lo = UINT32_MAX, hi = 0;
    for (const auto* split : {&ds_->members, &ds_->nonmembers})
      for (const auto& s : *split) lo = std::min(lo, s.complexity), hi = std::max(hi, s.complexity);
    return {{"n_members", ds_->members.size()},
            {"n_nonmembers", ds_->nonmembers.size()},
            {"dim", ds_->dim()},
            {"complexity_min", lo},
            {"complexity_max", hi},
            {"codec", std::string(kCodecId)}};
  }

  json stage_train(const SamplerVariant& v) {
    const std::string sub = "train_" + v.name;
    if (resuming_) {
      TrainResult r{load_checkpoint(dir_ / sub / "model.bin"), {}, {}};
      for (const auto& step : resume_record_["data"]["checkpoint_steps"]) {
        const auto s = step.get<std::uint64_t>();
        r.checkpoints.emplace_back(s, load_checkpoint(dir_ / sub / ("ckpt_" + std::to_string(s) + ".bin")));
      }
      runs_.insert_or_assign(v.name, std::move(r));
      return resume_record_["data"];
    }
    TrainHooks hooks;
    hooks.checkpoint_dir = dir_ / sub;
    std::filesystem::create_directories(hooks.checkpoint_dir);
    TrainResult r = train(dataset(), MlpVelocityModel::initialized(cfg_.mlp_config()), cfg_.train_config(v), hooks);
    save_checkpoint(r.model, dir_ / sub / "model.bin");
    current_files_.push_back(sub + "/model.bin");
    json steps = json::array();
    for (const auto& [s, m] : r.checkpoints) {
      current_files_.push_back(sub + "/ckpt_" + std::to_string(s) + ".bin");
      steps.push_back(s);
    }
    emit_text(sub + "/dynamics.csv", r.log.to_csv(comment_));
    const auto& last = r.log.rows.back();
    json data = {{"sampler", v.sampler.descriptor()},
                 {"path", cfg_.training.path.descriptor()},
                 {"final_step", last.step},
                 {"final_train_loss", last.train_loss},
                 {"final_val_loss", last.val_loss},
                 {"checkpoint_steps", steps}};
    runs_.insert_or_assign(v.name, std::move(r));
    return data;
  }

  json stage_attack() {
    if (resuming_) return resume_record_["data"];
    const auto& model = primary();
    json out = json::array();
    for (std::size_t i = 0; i < cfg_.attack.attacks.size(); ++i) {
      const auto& a = cfg_.attack.attacks[i];
      const auto table = score_dataset(model, dataset(), cfg_.attack_config(a.statistic, a.t, a.n_mc));
      emit_text("scores_" + std::to_string(i) + "_" + statistic_name(a.statistic) + ".csv", table.to_csv(comment_));
      const double levels[] = {0.01, 0.1};
      out.push_back({{"statistic", statistic_name(a.statistic)},
                     {"t", a.t},
                     {"n_mc", a.n_mc},
                     {"roc", roc_json(roc_report(table, levels))}});
    }
    return out;
  }

  json stage_sweep_t() {
    if (resuming_) return resume_record_["data"];
    const auto& model = primary();
    const auto grid = cfg_.t_grid();
    json out = json::object();
    std::set<std::string> done;
    for (const auto& a : cfg_.attack.attacks) {
      const std::string file = sweep_file(a);
      if (!done.insert(file).second) continue;
      const auto sweep = sweep_auc_over_t(model, dataset(), cfg_.attack_config(a.statistic, a.t, a.n_mc), grid);
      emit_text(file, sweep.to_csv(comment_));
      const auto& b = sweep.best();
      out[file.substr(6, file.size() - 10)] = {{"statistic", statistic_name(a.statistic)},
                                              {"n_mc", a.n_mc},
                                              {"best_t", b.t},
                                              {"best_auc", b.auc},
                                              {"best_tpr_at_1pct", b.tpr_at_1pct}};
    }
    return out;
  }

  json stage_sweep_nmc() {
    if (resuming_) return resume_record_["data"];
    double t = -1.0;
    if (auto it = results_.find("sweep-t"); it != results_.end()) {
      for (const auto& [key, entry] : it->second.items()) {
        if (entry["statistic"] == "mc_cal") {
          t = entry["best_t"].get<double>();
          break;
        }
      }
    }
    if (t < 0.0) {
      const auto sweep = sweep_auc_over_t(primary(), dataset(),
                                          cfg_.attack_config(Statistic::McCal, 0.5, calibrated_nmc(cfg_)),
                                          cfg_.t_grid());
      t = sweep.best().t;
    }
    const auto table = sweep_nmc(cfg_, primary(), dataset(), t);
    emit_text("nmc_sweep.csv", table.to_csv(comment_));
    json rows = json::array();
    for (const auto& r : table.rows) rows.push_back({{"n_mc", r.n_mc}, {"auc_mc", r.auc_mc}, {"auc_mc_cal", r.auc_mc_cal}});
    return {{"t", t}, {"rows", rows}};
  }

  json stage_gap() {
    if (resuming_) return resume_record_["data"];
    const auto moments = estimate_moments(dataset().members);
    const auto profile = gap_profile(primary(), moments, dataset(), cfg_.t_grid(), derive_seed(cfg_.seed, "attack"),
                                     cfg_.analysis.gap_draws);
    emit_text("gap_profile.csv", profile.to_csv(comment_));
    const auto& best = profile.max_separation();
    return {{"max_separation_t", best.t}, {"max_separation", best.separation()}, {"draws", cfg_.analysis.gap_draws}};
  }

  json stage_likelihood() {
    if (resuming_) return resume_record_["data"];
    const auto study = likelihood_complexity_study(primary(), dataset(), cfg_.likelihood_config());
    emit_text("likelihood.csv", study.to_csv(comment_));
    return {{"n", study.rows.size()},
            {"pearson_logp_complexity", study.pearson},
            {"spearman_logp_complexity", study.spearman},
            {"n_steps", cfg_.analysis.likelihood_steps},
            {"probes", cfg_.analysis.likelihood_probes},
            {"probe_reuse", LikelihoodConfig::kProbeReuse}};
  }

  json stage_compare() {
    if (resuming_) return resume_record_["data"];
    std::vector<VariantSeries> series;
    for (const auto& v : cfg_.training.samplers) series.push_back(dynamics_series(cfg_, dataset(), v, run(v.name)));
    const auto cmp = compare_samplers(std::move(series));
    emit_text("sampler_comparison.csv", cmp.to_csv(comment_));
    emit_text("mmd_series.csv", cmp.mmd_csv(comment_));
    json out = json::object();
    for (const auto& v : cmp.variants) {
      json points = json::array();
      for (const auto& p : v.points) {
        points.push_back({{"step", p.step},
                          {"peak_auc", p.peak_auc},
                          {"peak_t", p.peak_t},
                          {"mmd", std::isfinite(p.mmd) ? json(p.mmd) : json(nullptr)}});
      }
      out[v.name] = {{"sampler", v.sampler}, {"series", points}};
    }
    return out;
  }

  const PatchDataset& dataset() {
    if (!ds_) ds_ = load_dataset(dir_ / "dataset.bin");
    return *ds_;
  }

  const TrainResult& run(const std::string& name) {
    auto it = runs_.find(name);
    if (it == runs_.end()) throw StateError("no trained model for variant '" + name + "'");
    return it->second;
  }

  const MlpVelocityModel& primary() { return run(cfg_.training.samplers.front().name).model; }

  json summary() const {
    json stages = json::array();
    for (const auto& s : report_.stages) {
      stages.push_back({{"name", s.name}, {"status", s.status}, {"error", s.error}, {"files", s.files}});
    }
    json results = json::object();
    for (const auto& [k, v] : results_) results[k] = v;
    return {{"toolkit_version", std::string(kToolkitVersion)},
            {"config_hash", hash_},
            {"seed", cfg_.seed},
            {"codec", std::string(kCodecId)},
            {"orientation", "lower score => member"},
            {"noise_policy", "t_naive: one eps per sample; t_mc: n_mc fresh eps per sample from a per-sample seed"},
            {"probe_reuse", LikelihoodConfig::kProbeReuse},
            {"stages", stages},
            {"failed_stage", report_.failed_stage ? json(*report_.failed_stage) : json(nullptr)},
            {"config", cfg_.to_json()},
            {"results", results}};
  }

  const ExperimentConfig& cfg_;
  RunOptions opts_;
  std::filesystem::path dir_;
  std::string hash_;
  std::string comment_;
  ExperimentReport report_;
  std::map<std::string, json> results_;
  std::optional<PatchDataset> ds_;
  std::map<std::string, TrainResult> runs_;
  std::vector<std::string> current_files_;
  bool resuming_ = false;
  json resume_record_;
};

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  return Pipeline(cfg, opts).run();
}

// ---------------------------------------------------------------- schema

const json& summary_schema() {
  static const json schema = json::parse(R"({
    "type": "object",
    "required": ["toolkit_version", "config_hash", "seed", "codec", "orientation", "noise_policy",
                 "probe_reuse", "stages", "failed_stage", "config", "results"],
    "properties": {
      "toolkit_version": {"type": "string"},
      "config_hash": {"type": "string"},
      "seed": {"type": "integer"},
      "codec": {"type": "string"},
      "orientation": {"type": "string"},
      "noise_policy": {"type": "string"},
      "probe_reuse": {"type": "boolean"},
      "failed_stage": {"type": ["string", "null"]},
      "config": {"type": "object"},
      "results": {"type": "object"},
      "stages": {
        "type": "array",
        "items": {
          "type": "object",
          "required": ["name", "status", "error", "files"],
          "properties": {
            "name": {"type": "string"},
            "status": {"enum": ["ran", "resumed", "skipped", "failed", "not-run"]},
            "error": {"type": "string"},
            "files": {"type": "array", "items": {"type": "string"}}
          }
        }
      }
    }
  })");
  return schema;
}

namespace {

bool has_type(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer();
  if (type == "boolean") return v.is_boolean();
  if (type == "null") return v.is_null();
  return false;
}

void check(const json& v, const json& schema, const std::string& at, std::vector<std::string>& problems) {
  if (auto it = schema.find("type"); it != schema.end()) {
    bool ok = false;
    if (it->is_string()) {
      ok = has_type(v, it->get<std::string>());
    } else {
      for (const auto& t : *it) ok = ok || has_type(v, t.get<std::string>());
    }
    if (!ok) {
      problems.push_back(at + ": expected type " + it->dump());
      return;
    }
  }
  if (auto it = schema.find("enum"); it != schema.end()) {
    if (std::find(it->begin(), it->end(), v) == it->end()) problems.push_back(at + ": value not allowed");
  }
  if (auto it = schema.find("required"); it != schema.end() && v.is_object()) {
    for (const auto& key : *it) {
      if (!v.contains(key.get<std::string>())) problems.push_back(at + ": missing '" + key.get<std::string>() + "'");
    }
  }
  if (auto it = schema.find("properties"); it != schema.end() && v.is_object()) {
    for (const auto& [key, sub] : it->items()) {
      if (v.contains(key)) check(v[key], sub, at + "." + key, problems);
    }
  }
  if (auto it = schema.find("items"); it != schema.end() && v.is_array()) {
    for (std::size_t i = 0; i < v.size(); ++i) check(v[i], *it, at + "[" + std::to_string(i) + "]", problems);
  }
}

}  // namespace

std::vector<std::string> validate_summary(const json& summary) {
  std::vector<std::string> problems;
  check(summary, summary_schema(), "summary", problems);
  return problems;
}

}  // namespace rfmia
