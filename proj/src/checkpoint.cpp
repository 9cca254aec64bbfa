#include "rfmia/checkpoint.hpp"

#include "rfmia/errors.hpp"
#include "rfmia/io.hpp"

namespace rfmia {

namespace {
constexpr std::string_view kMagic = "RFMIACKP";
constexpr std::uint32_t kMaxWidth = 1u << 20;
constexpr std::uint32_t kMaxLayers = 64;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const MlpVelocityModel& model) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.embed_width()));
  w.u32(static_cast<std::uint32_t>(model.widths().size()));
  for (std::size_t width : model.widths()) w.u32(static_cast<std::uint32_t>(width));
  w.u64(model.seed);
  w.u64(model.train_step);
  w.str(model.sampler_descriptor);
  w.u32(model.linear_skip ? 1 : 0);
  if (model.linear_skip) {
    w.f64(model.linear_skip->ridge);
    w.f64s(model.linear_skip->mean);
    w.f64s(model.linear_skip->eigenvalues);
    w.f64s(model.linear_skip->eigenvectors);
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    w.u64(model.weight(l).size());
    w.f64s(model.weight(l).data());
    w.u64(model.bias(l).size());
    w.f64s(model.bias(l).data());
  }
  w.seal();
  return w.buffer();
}

MlpVelocityModel decode_checkpoint(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.verify_seal("checkpoint");
  r.expect_magic(kMagic, "checkpoint");
  const auto version_at = r.offset();
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const std::uint32_t embed = r.u32();
  const auto count_at = r.offset();
  const std::uint32_t n_widths = r.u32();
  if (n_widths < 2 || n_widths > kMaxLayers) {
    throw FormatError("implausible layer count " + std::to_string(n_widths), count_at);
  }
  std::vector<std::size_t> widths;
  for (std::uint32_t i = 0; i < n_widths; ++i) {
    const auto at = r.offset();
    const std::uint32_t width = r.u32();
    if (width == 0 || width > kMaxWidth) throw FormatError("invalid layer width", at);
    widths.push_back(width);
  }
  if (widths.front() != widths.back() + embed) {
    throw FormatError("declared input width " + std::to_string(widths.front()) +
                          " does not match data dim " + std::to_string(widths.back()) +
                          " + embedding " + std::to_string(embed),
                      count_at);
  }
  MlpVelocityModel model(widths, embed);
  model.seed = r.u64();
  model.train_step = r.u64();
  model.sampler_descriptor = r.str();
  const auto flags_at = r.offset();
  const std::uint32_t flags = r.u32();
  if (flags > 1) throw FormatError("unknown model flags " + std::to_string(flags), flags_at);
  if (flags == 1) {
    const std::size_t d = model.data_dim();
    LinearSkip skip;
    skip.ridge = r.f64();
    skip.mean = r.f64s(d);
    skip.eigenvalues = r.f64s(d);
    skip.eigenvectors = r.f64s(d * d);
    model.linear_skip = std::move(skip);
  }
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    for (Tensor* p : {&model.weight(l), &model.bias(l)}) {
      const auto at = r.offset();
      const std::uint64_t n = r.u64();
      if (n != p->size()) {
        throw FormatError("layer " + std::to_string(l) + " holds " + std::to_string(n) +
                              " values, declared widths imply " + std::to_string(p->size()),
                          at);
      }
      const auto values = r.f64s(n);
      std::copy(values.begin(), values.end(), p->data().begin());
    }
  }
  r.expect_end("checkpoint");
  return model;
}

void save_checkpoint(const MlpVelocityModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(model));
}

MlpVelocityModel load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace rfmia
