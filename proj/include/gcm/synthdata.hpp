#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcm/core.hpp"

namespace gcm {

// Generator settings. Features are noisy blends of per-class prototype
// directions, weighted by each proposal's overlap with its source instance,
// which stands in for pooled video features over external proposals.
struct SynthConfig {
    uint64_t seed = 7;
    std::string split = "train";
    int stream = 0; // 0 = rgb, 1 = flow; same intervals, different prototype basis
    int videos = 100;
    int classes = 5;
    int feature_dim = 16;
    double duration_min = 80.0;
    double duration_max = 120.0;
    double instances_mean = 3.0;
    double instance_len_min = 5.0;
    double instance_len_max = 15.0;
    int proposals_per_video = 20;
    double jitter = 0.15;              // boundary perturbation, fraction of length
    double background_fraction = 0.3;  // share of non-guaranteed proposals that are background
    double prototype_angle_deg = 75.0; // angle between class prototypes and the background axis
    double noise = 0.9;                // feature noise magnitude
};

void validate(const SynthConfig& cfg);

struct VideoRecord {
    std::string id;
    std::vector<ActionUnit> units;
    std::vector<int> unit_labels; // provenance: -1 unknown, 0 background, >=1 class
    std::vector<GroundTruthInstance> gts;
};

struct Dataset {
    std::string split = "train";
    int feature_dim = 0;
    int classes = 0;
    std::vector<VideoRecord> videos;

    std::vector<GroundTruthInstance> all_gts() const;
    int unit_count() const;
};

// Deterministic in cfg.seed; per-video derived seeds, so any video prefix is
// stable under changes to `videos`.
Dataset generate(const SynthConfig& cfg);

// Class prototype directions used by the generator (row c = class c,
// row 0 = background); exposed for the structure tests.
std::vector<std::vector<double>> class_prototypes(const SynthConfig& cfg);

// Writes prefix + ".units" and prefix + ".gts". load(save(ds)) == ds
// bit-exactly; numbers are shortest round-trip decimals.
void save(const Dataset& ds, const std::string& prefix);
Dataset load(const std::string& prefix);

} // namespace gcm
