#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "surfelslam/geometry.h"
#include "surfelslam/sfs.h"

namespace surfelslam::synth {

// Deterministic counter-based generator: same key, same value, any call order.
uint64_t hash_counter(uint64_t seed, uint64_t frame, uint64_t pixel, uint64_t lane);
double uniform01(uint64_t h);

// Trilinear value noise in [0,1] with smooth (quintic) interpolation.
// grad, when non-null, receives the spatial gradient.
double value_noise(const Eigen::Vector3d& p, double cell, uint32_t seed,
                   Eigen::Vector3d* grad = nullptr);

struct Scene {
    enum Kind { SphereInterior, TubeInterior, DeformedTube } kind = SphereInterior;

    // sphere
    double radius = 0.06;
    Eigen::Vector3d center{0, 0, 0.02};

    // tube: axis along world z with spherical end caps
    double tube_radius = 0.04;
    double tube_half_length = 0.12;

    // radial bump field (DeformedTube)
    double bump_amp = 0.004;
    double bump_cell = 0.02;
    uint32_t bump_seed = 77;

    // procedural albedo texture
    double texture_contrast = 0.15;
    double texture_cell = 0.012;
    uint32_t texture_seed = 11;
};

struct NoiseConfig {
    double sigma = 0.0;   // gaussian intensity noise on the [0,1] scale
    int blob_count = 0;   // specular blobs per frame
    uint64_t seed = 1;
};

struct RenderOut {
    ColorImage color;      // 8-bit-quantized gray triples, 0..255
    DepthImage depth;      // exact ray-cast z-depth, meters
    MaskImage specular_gt; // exact support of the injected blobs
};

// pose is world-from-camera. The light rides with the camera: its direction
// is fixed in the camera frame by L.slant/L.tilt (slant 0 = optical axis).
RenderOut render(const Scene& scene, const Pose& pose, const Intrinsics& K,
                 const LightModel& L, const NoiseConfig& noise, int frame);

// Named presets; each bundles a scene, trajectory shape, and corruption
// defaults. Frame count 0 picks the preset default.
struct Preset {
    std::string name;
    Scene scene;
    NoiseConfig noise;
    LightModel light; // canonical illumination for the preset's dataset
    int default_frames;
};

const std::vector<Preset>& presets();
const Preset& preset(const std::string& name);

// Deterministic per-frame camera poses (world-from-camera) plus exact path
// length. Loopy presets revisit earlier poses exactly at scripted frames.
std::vector<Pose> make_trajectory(const std::string& name, int frames,
                                  double* path_length = nullptr);

// Keyframe script with linear translation / spherical-linear rotation
// interpolation between waypoints.
struct TrajectoryScript {
    struct Waypoint {
        int frame;
        Pose pose;
    };
    std::vector<Waypoint> waypoints; // frame indices strictly increasing
    Pose sample(int frame) const;
};

// Accumulates a constant per-frame twist so pose k carries (k+1) units of
// drift; n poses end n*per_frame apart from truth. Returns the perturbed
// poses; drifts, when non-null, receives the exact twist applied per frame.
std::vector<Pose> inject_drift(const std::vector<Pose>& poses, double per_frame,
                               std::vector<Twist>* drifts = nullptr);

Intrinsics default_intrinsics();

} // namespace surfelslam::synth
