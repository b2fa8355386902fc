#pragma once

#include <string>

#include "sosvae/trainers.hpp"

namespace sosvae {

// Checkpoint layout: magic "SOSVAE1", little-endian u64 header length, JSON
// header (format version, architecture descriptors, parameter manifest,
// optimizer state counters, config snapshot, seed), then raw little-endian
// f64 blocks in manifest order. save(load(p)) reproduces the bytes of p.
// Training history is not stored; it lives in the run's history CSV.
void save_checkpoint(const ModelBundle& bundle, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

inline constexpr int kCheckpointVersion = 1;

}  // namespace sosvae
