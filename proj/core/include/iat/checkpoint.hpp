#pragma once

#include <optional>
#include <string>

#include "iat/inverse.hpp"
#include "iat/model.hpp"

namespace iat {

// Checkpoint file layout (all integers little-endian, floats IEEE-754 LE):
//   8 bytes   magic "IATCKPT1"
//   u64       descriptor length, then that many UTF-8 bytes; the descriptor
//             is NetworkSpec::descriptor() plus ";seed=<init seed>"
//   per parameter tensor, in spec order:
//     u64 rank, u64 dims[rank], f32 data[numel]
//   optionally, a universal-perturbation section:
//     5 bytes "UBANK", u64 class count, u64 bank seed, f32 epsilon,
//     then one tensor record per class (same encoding as parameters)
struct Checkpoint {
  NetworkState state;
  std::optional<UniversalBank> bank;
};

void save_checkpoint(const std::string& path, const NetworkState& state,
                     const UniversalBank* bank = nullptr);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace iat
