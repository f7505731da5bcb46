#pragma once

// Model checkpoints. A checkpoint stores the full network configuration plus
// every parameter tensor, so a saved model can be reconstructed without the
// code that created it knowing anything beyond the file path.
//
// Layout (all integers little-endian):
//   magic   "PMPK" (4 bytes)
//   version u32 (currently 1)
//   config  u64 byte length + that many bytes of key=value text
//   count   u64 number of tensors
//   per tensor:
//     u64 name length + name bytes
//     u32 rank, then rank x u64 dims
//     numel x f64 values
//
// save_checkpoint also writes "<path>.manifest.txt", a human-readable listing
// of the stored tensors (name and shape per line) plus the config block.

#include <string>

#include "pmp/net.hpp"

namespace pmp {

void save_checkpoint(const std::string& path, const PmpNet& net);

// Rebuilds the network from the stored config, then loads every parameter.
// Throws std::runtime_error on I/O problems, corrupt files, or when the
// stored tensors do not match the architecture the config describes.
PmpNet load_checkpoint(const std::string& path);

}  // namespace pmp
