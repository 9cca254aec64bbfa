#include "rfmia/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rfmia/complexity.hpp"
#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"
#include "rfmia/rng.hpp"

namespace rfmia {

namespace {

struct Frequency {
  int u;
  int v;
  double radius;
};

// One representative of each conjugate pair on the P x P DFT grid.
std::vector<Frequency> half_plane_frequencies(std::size_t patch) {
  const int p = static_cast<int>(patch);
  std::vector<Frequency> out;
  for (int v = 0; v <= p / 2; ++v) {
    for (int u = -(p - 1) / 2; u <= p / 2; ++u) {
      if (v == 0 && u < 0) continue;
      out.push_back({u, v, std::hypot(static_cast<double>(u), static_cast<double>(v))});
    }
  }
  return out;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_per_split < 32) throw ConfigError("generator: n_per_split must be >= 32");
  if (patch < 2) throw ConfigError("generator: patch side must be >= 2");
  if (!(f_lo >= 0.0) || !(f_lo <= f_hi)) throw ConfigError("generator: need 0 <= f_lo <= f_hi");
  if (f_hi > nyquist()) throw ConfigError("generator: f_hi above Nyquist");
  if (!(noise_floor > 0.0)) throw ConfigError("generator: noise floor must be positive");
  if (!(amplitude > 0.0)) throw ConfigError("generator: amplitude must be positive");
}

std::vector<double> Standardization::apply(std::span<const double> raw) const {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mean[i]) / scale[i];
  return out;
}

std::vector<double> Standardization::invert(std::span<const double> z) const {
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] * scale[i] + mean[i];
  return out;
}

std::vector<double> generate_raw_patch(const GeneratorConfig& cfg, std::uint64_t index, double* cutoff) {
  Rng rng(derive_seed(derive_seed(cfg.seed, "dataset"), index));
  const double c = rng.uniform(cfg.f_lo, cfg.f_hi);
  if (cutoff) *cutoff = c;
  const std::size_t p = cfg.patch;
  std::vector<double> signal(p * p, 0.0);
  for (const Frequency& f : half_plane_frequencies(p)) {
    if (f.radius > c) continue;
    const double a = rng.normal();
    const double b = f.radius == 0.0 ? 0.0 : rng.normal();
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        const double phase = 2.0 * M_PI *
                             (f.u * static_cast<double>(i) + f.v * static_cast<double>(j)) /
                             static_cast<double>(p);
        signal[i * p + j] += a * std::cos(phase) + b * std::sin(phase);
      }
    }
  }
  for (double& s : signal) s = cfg.base_level + cfg.amplitude * s + cfg.noise_floor * rng.normal();
  return signal;
}

PatchDataset generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_per_split;
  const std::size_t d = cfg.dim();

  std::vector<std::vector<double>> raw(2 * n);
  std::vector<double> cutoffs(2 * n);
  for (std::size_t k = 0; k < 2 * n; ++k) raw[k] = generate_raw_patch(cfg, k, &cutoffs[k]);

  // Matched-pair split: neighbours in cutoff order form a pair and a seeded
  // coin decides which one becomes the member.
  std::vector<std::uint64_t> order(2 * n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint64_t a, std::uint64_t b) { return cutoffs[a] < cutoffs[b]; });
  Rng split_rng(derive_seed(cfg.seed, "split"));
  std::vector<std::uint64_t> member_ids, nonmember_ids;
  for (std::size_t p = 0; p < n; ++p) {
    const bool first_is_member = split_rng.below(2) == 0;
    member_ids.push_back(order[2 * p + (first_is_member ? 0 : 1)]);
    nonmember_ids.push_back(order[2 * p + (first_is_member ? 1 : 0)]);
  }
  std::sort(member_ids.begin(), member_ids.end());
  std::sort(nonmember_ids.begin(), nonmember_ids.end());

  PatchDataset ds;
  ds.config = cfg;
  auto& st = ds.standardization;
  st.mean.assign(d, 0.0);
  st.scale.assign(d, 0.0);
  for (auto id : member_ids)
    for (std::size_t j = 0; j < d; ++j) st.mean[j] += raw[id][j];
  for (double& m : st.mean) m /= static_cast<double>(n);
  for (auto id : member_ids)
    for (std::size_t j = 0; j < d; ++j) st.scale[j] += (raw[id][j] - st.mean[j]) * (raw[id][j] - st.mean[j]);
  for (double& s : st.scale) {
    s = std::sqrt(s / static_cast<double>(n - 1));
    if (!(s > 1e-12)) s = 1.0;
  }

  auto make = [&](std::uint64_t id) {
    return Sample{id, st.apply(raw[id]), cutoffs[id], 0};
  };
  for (auto id : member_ids) ds.members.push_back(make(id));
  for (auto id : nonmember_ids) ds.nonmembers.push_back(make(id));
  return ds;
}

void fill_complexity(PatchDataset& ds) {
  const ComplexityMeter meter(ds.standardization);
  for (auto* split : {&ds.members, &ds.nonmembers})
    for (Sample& s : *split) s.complexity = meter(s.x);
}

namespace {
constexpr std::string_view kMagic = "RFMIADS1";
}

std::vector<std::uint8_t> encode_dataset(const PatchDataset& ds) {
  const auto& c = ds.config;
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(c.patch));
  w.u32(static_cast<std::uint32_t>(ds.dim()));
  w.u64(ds.members.size());
  w.u64(ds.nonmembers.size());
  w.u64(c.seed);
  w.u64(c.n_per_split);
  for (double v : {c.f_lo, c.f_hi, c.noise_floor, c.amplitude, c.base_level}) w.f64(v);
  w.f64s(ds.standardization.mean);
  w.f64s(ds.standardization.scale);
  for (const auto* split : {&ds.members, &ds.nonmembers}) {
    for (const Sample& s : *split) {
      w.u64(s.id);
      w.f64(s.cutoff);
      w.u32(s.complexity);
      w.f64s(s.x);
    }
  }
  w.seal();
  return w.buffer();
}

PatchDataset decode_dataset(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.verify_seal("dataset");
  r.expect_magic(kMagic, "dataset");
  const auto version_at = r.offset();
  if (const auto version = r.u32(); version != kDatasetVersion) {
    throw FormatError("dataset version " + std::to_string(version) + " not supported (expected " +
                          std::to_string(kDatasetVersion) + ")",
                      version_at);
  }
  PatchDataset ds;
  auto& c = ds.config;
  c.patch = r.u32();
  const auto dim_at = r.offset();
  const std::size_t d = r.u32();
  if (d != c.patch * c.patch) throw FormatError("dimension does not match patch side", dim_at);
  const std::size_t n_mem = r.u64();
  const std::size_t n_non = r.u64();
  c.seed = r.u64();
  c.n_per_split = r.u64();
  c.f_lo = r.f64();
  c.f_hi = r.f64();
  c.noise_floor = r.f64();
  c.amplitude = r.f64();
  c.base_level = r.f64();
  ds.standardization.mean = r.f64s(d);
  ds.standardization.scale = r.f64s(d);
  for (auto [split, count] : {std::pair{&ds.members, n_mem}, std::pair{&ds.nonmembers, n_non}}) {
    for (std::size_t i = 0; i < count; ++i) {
      Sample s;
      s.id = r.u64();
      s.cutoff = r.f64();
      s.complexity = r.u32();
      s.x = r.f64s(d);
      split->push_back(std::move(s));
    }
  }
  r.expect_end("dataset");
  return ds;
}

void save_dataset(const PatchDataset& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_dataset(ds));
}

PatchDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

}  // namespace rfmia
