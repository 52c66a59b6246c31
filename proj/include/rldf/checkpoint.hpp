#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   magic        8 bytes  "RLDFCKPT"
//   version      u32      (kCheckpointVersion)
//   vocab_size   u32
//   embed_dim    u32
//   n_layers     u32
//   n_heads      u32
//   ff_dim       u32
//   max_len      u32
//   mask_id      u32
//   seed         u64
//   init_std     f64
//   param_ver    u64      ParamStore::version
//   n_tensors    u32
//   per tensor:
//     name_len   u32, name bytes (no terminator)
//     rank       u32, dims u64[rank]
//     values     f64[prod(dims)], row-major
//
// Files are written to "<path>.tmp" and renamed into place, so a reader sees
// either the previous file or the complete new one.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <ostream>

#include "rldf/model.hpp"

namespace rldf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ParamStore params;
};

void write_checkpoint(std::ostream& out, const ModelConfig& cfg, const ParamStore& params);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ParamStore& params);
// Throws VersionError on a version mismatch and FormatError on malformed input.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rldf
