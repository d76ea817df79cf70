#pragma once

#include "angio/feature_refine.hpp"

namespace angio {

struct Checkpoint {
    EncoderWeights encoder;
    GcnWeights gcn;
    uint64_t seed = 0;
};

/// JSON header (configs, shapes, seed) followed by one little-endian f64 blob
/// holding every parameter in canonical order.
void save_checkpoint(const std::string& path, EncoderWeights& enc, GcnWeights& gcn,
                     uint64_t seed);

/// Validates every shape against the header before accepting the blob.
Checkpoint load_checkpoint(const std::string& path);

} // namespace angio
