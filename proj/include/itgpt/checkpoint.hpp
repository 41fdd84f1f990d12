#pragma once

#include <string>

#include "itgpt/config.hpp"

namespace itgpt {

// Self-describing binary container: magic + version, the full resolved
// TrainConfig and dataset schema as text blocks, then each parameter as
// path, shape and row-major float64 payload. Numbers are written
// little-endian regardless of host, so files are byte-stable across
// platforms.
struct Checkpoint {
    TrainConfig config;
    DatasetSchema schema;
    ParamStore params;
    std::string manifest_hash;  // hex of the producing run manifest, may be empty
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace itgpt
