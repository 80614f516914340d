#pragma once

#include <cstdint>
#include <string>

#include "surfelslam/config.h"
#include "surfelslam/geometry.h"
#include "surfelslam/image.h"
#include "surfelslam/preprocess.h"
#include "surfelslam/sfs.h"

namespace surfelslam {

// On-disk dataset layout:
//   rgb/000000.png ...      8-bit RGB, contiguous zero-padded frame indices
//   depth/000000.png ...    optional 16-bit grayscale, meters = value/5000
//   groundtruth.txt         optional trajectory file
//   camera.cfg              intrinsics, light, and vignetting (key = value)
struct DatasetLayout {
    std::string root;
    int frames = 0;
    bool has_depth = false;
    bool has_groundtruth = false;
    Intrinsics K;
    LightModel light;
    VignettingModel vignetting;
};

// Validates the layout: camera.cfg present and complete, rgb frames
// contiguous from zero. Violations throw LoadError naming the missing or
// offending file.
DatasetLayout open_dataset(const std::string& root);

// root/<sub>/000000.png style path for frame i.
std::string frame_path(const std::string& root, const std::string& sub, int i);

// Image loaders with dimension checks against camera.cfg.
ColorImage load_rgb(const DatasetLayout& d, int i);
DepthImage load_depth(const DatasetLayout& d, int i);

// Renders a synthetic dataset for a named preset: rgb, exact ground-truth
// depth, groundtruth.txt at 30 Hz timestamps, and camera.cfg. frames <= 0
// picks the preset default. Same arguments produce byte-identical files.
// Returns the frame count written.
int write_synth_dataset(const std::string& root, const std::string& preset_name,
                        int frames, uint64_t seed);

} // namespace surfelslam
