#pragma once

#include <string>

#include "minikd/optimizer.hpp"
#include "minikd/transformer.hpp"

namespace minikd {

/// Raised on bad magic, version, manifest, or checksum.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadedCheckpoint {
  ModelConfig config;
  TransformerWeights weights;
  bool has_optimizer_state = false;
  AdamState optimizer_state;
};

/// Binary format: magic + version, config block, tensor manifest
/// (name/shape/offset), little-endian f64 payload, optional optimizer
/// state, trailing CRC32 of everything before it. Save -> load -> save is
/// byte-identical.
void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const TransformerWeights& weights, const AdamState* optimizer_state = nullptr);

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Deep copy: fresh buffers, same values and requires_grad flags.
TransformerWeights clone_weights(const TransformerWeights& weights);

}  // namespace minikd
