#include "epo/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace epo::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::uint32_t kKindNetwork = 1;
constexpr std::uint32_t kKindPolicy = 2;

struct Header {
  std::uint32_t kind = 0;
  std::uint32_t activation = 0;
  std::vector<int> layer_sizes;
  std::uint32_t extra = 0;
  std::uint64_t count = 0;
};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw CheckpointError("truncated checkpoint: " + path.string());
  }
  return value;
}

std::string sizes_string(const std::vector<int>& sizes) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < sizes.size(); ++i) os << (i ? "," : "") << sizes[i];
  os << ']';
  return os.str();
}

void write(const std::filesystem::path& path, std::uint32_t kind, const Mlp& net, const ParamVector& params,
           std::uint32_t extra) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, kind);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.activation()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes().size()));
  for (int n : net.layer_sizes()) put<std::uint32_t>(out, static_cast<std::uint32_t>(n));
  put<std::uint32_t>(out, extra);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(params.size()));
  out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size() * sizeof(double)));
  if (!out) throw CheckpointError("failed writing checkpoint: " + path.string());
}

std::pair<Header, ParamVector> read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic): " + path.string());
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  Header h;
  h.kind = get<std::uint32_t>(in, path);
  h.activation = get<std::uint32_t>(in, path);
  if (h.activation != static_cast<std::uint32_t>(Activation::Tanh)) {
    throw CheckpointError("unknown activation tag " + std::to_string(h.activation));
  }
  const auto layers = get<std::uint32_t>(in, path);
  if (layers < 2 || layers > 64) throw CheckpointError("implausible layer count in " + path.string());
  for (std::uint32_t i = 0; i < layers; ++i) h.layer_sizes.push_back(static_cast<int>(get<std::uint32_t>(in, path)));
  h.extra = get<std::uint32_t>(in, path);
  h.count = get<std::uint64_t>(in, path);
  Mlp probe(h.layer_sizes);
  if (h.count != probe.parameter_count() + h.extra) {
    throw CheckpointError("parameter count does not match layer_sizes " + sizes_string(h.layer_sizes));
  }
  ParamVector params(static_cast<Eigen::Index>(h.count));
  if (!in.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(h.count * sizeof(double)))) {
    throw CheckpointError("truncated parameter block: " + path.string());
  }
  return {std::move(h), std::move(params)};
}

}  // namespace

void save_network(const std::filesystem::path& path, const Mlp& net) {
  write(path, kKindNetwork, net, net.flatten(), 0);
}

Mlp load_network(const std::filesystem::path& path) {
  auto [h, params] = read(path);
  if (h.kind != kKindNetwork) throw CheckpointError("checkpoint is not a bare network: " + path.string());
  Mlp net(h.layer_sizes);
  net.unflatten(params);
  return net;
}

void save_policy(const std::filesystem::path& path, const GaussianPolicy& policy) {
  write(path, kKindPolicy, policy.mean_net(), policy.flatten(), static_cast<std::uint32_t>(policy.action_dim()));
}

GaussianPolicy load_policy(const std::filesystem::path& path, const GaussianPolicy& like) {
  auto [h, params] = read(path);
  if (h.kind != kKindPolicy) throw CheckpointError("checkpoint is not a policy: " + path.string());
  if (h.layer_sizes != like.mean_net().layer_sizes()) {
    throw CheckpointError("architecture mismatch: checkpoint layer_sizes " + sizes_string(h.layer_sizes) +
                          " vs configured " + sizes_string(like.mean_net().layer_sizes()));
  }
  GaussianPolicy out = like;
  out.unflatten(params);
  return out;
}

}  // namespace epo::nn
