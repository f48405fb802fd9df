#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "epo/nn/gaussian_policy.hpp"

namespace epo::nn {

// Binary layout, all integers and floats little-endian:
//   char[8]   magic "EPOCKPT\0"
//   u32       format version (1)
//   u32       kind (1 = bare network, 2 = Gaussian policy)
//   u32       activation tag (1 = tanh hidden / identity output)
//   u32       number of layer sizes L, then L x u32 layer sizes
//   u32       extra parameter count (policy: log_std entries; network: 0)
//   u64       total parameter count P
//   f64 x P   parameters in flatten() order
inline constexpr char kCheckpointMagic[8] = {'E', 'P', 'O', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

void save_network(const std::filesystem::path& path, const Mlp& net);
Mlp load_network(const std::filesystem::path& path);

void save_policy(const std::filesystem::path& path, const GaussianPolicy& policy);
/// Loads parameters into a copy of `like`; the stored layer sizes must match exactly.
GaussianPolicy load_policy(const std::filesystem::path& path, const GaussianPolicy& like);

}  // namespace epo::nn
