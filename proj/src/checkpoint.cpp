#include "clarifid/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "clarifid/errors.hpp"

namespace clarifid {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw LoadError("checkpoint truncated reading " + what);
  return v;
}

Tensor meta_value(double v) { return Tensor::from({1}, {v}); }

}  // namespace

void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, kMagicLen);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    const auto data = t.data();
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

NamedTensors read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) || std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    throw LoadError(path.string() + " is not a CLFD1 checkpoint");
  }
  NamedTensors out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto len = get_u32(in, "name length");
    if (len == 0 || len > 4096) throw LoadError("checkpoint record has a bad name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw LoadError("checkpoint truncated reading a name");
    const auto rank = get_u32(in, name + " rank");
    if (rank == 0 || rank > 8) throw LoadError("checkpoint tensor " + name + " has rank " + std::to_string(rank));
    numerics::Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(get_u32(in, name + " dims"));
    std::vector<double> values(numerics::shape_size(shape));
    if (!in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
      throw LoadError("checkpoint truncated in payload of " + name);
    }
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  NamedTensors all = {{"meta.heads", meta_value(static_cast<double>(model.config.heads))},
                      {"meta.max_len", meta_value(static_cast<double>(model.config.max_len))}};
  for (auto& entry : model.named_parameters()) all.push_back(std::move(entry));
  write_tensors(path, all);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::map<std::string, Tensor> stored;
  for (auto& [name, t] : read_tensors(path)) {
    if (!stored.emplace(name, t).second) throw LoadError("duplicate checkpoint record " + name);
  }
  auto need = [&](const std::string& name) -> const Tensor& {
    auto it = stored.find(name);
    if (it == stored.end()) throw LoadError("checkpoint is missing " + name);
    return it->second;
  };
  ModelConfig cfg;
  cfg.heads = static_cast<std::size_t>(need("meta.heads").item());
  cfg.max_len = static_cast<std::size_t>(need("meta.max_len").item());
  const auto& embed = need("policy.token_embedding");
  cfg.vocab_size = embed.dim(0);
  cfg.d_model = embed.dim(1);
  cfg.feature_dim = need("encoder.w1").dim(0);
  cfg.ffn_mult = need("policy.layers.0.ff1_w").dim(1) / cfg.d_model;
  auto count_layers = [&](const std::string& prefix) {
    std::size_t n = 0;
    while (stored.count(prefix + "layers." + std::to_string(n) + ".wq")) ++n;
    return n;
  };
  cfg.policy_layers = count_layers("policy.");
  cfg.value_layers = count_layers("value.");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint describes an invalid model: ") + e.what());
  }

  Model model = Model::init(cfg, 0);
  std::size_t used = 2;
  for (auto& [name, t] : model.named_parameters()) {
    const auto& src = need(name);
    if (src.shape() != t.shape()) {
      throw LoadError("checkpoint tensor " + name + " has shape " + numerics::shape_string(src.shape()) +
                      ", expected " + numerics::shape_string(t.shape()));
    }
    auto dst = t.mutable_data();
    const auto s = src.data();
    std::copy(s.begin(), s.end(), dst.begin());
    ++used;
  }
  if (used != stored.size()) throw LoadError("checkpoint has records the model does not use");
  return model;
}

}  // namespace clarifid
