#pragma once

#include <cstdint>
#include <string>

#include "fusionbench/dataset.hpp"
#include "fusionbench/image.hpp"

namespace fusionbench {

// Procedural stand-in for the physical capture rig: each trial renders a
// colored shape on a table band before and after the labelled action, seen
// by four simulated sensors (three RGB viewpoints plus an inverse-distance
// depth map).
struct SynthConfig {
    int n_objects = 20;
    int n_tools = 4;
    int n_repetitions = 10;
    double noise_level = 0.02;  // additive uniform noise, fraction of full scale
    std::uint64_t seed = 0;
    int image_size = 64;  // square native resolution
    std::string out_dir;
};

// Writes the full layout under out_dir plus out_dir/manifest.txt and
// returns the manifest. Deterministic for a fixed config.
Manifest synth_generate(const SynthConfig& config);

// Diagnostics for generator self-tests: locate the object by color
// saturation (RGB sensors) or near-range intensity (depth) and summarize
// the mask.
double object_centroid_x(const Image& img, SensorId sensor);
double object_area_fraction(const Image& img, SensorId sensor);

}  // namespace fusionbench
