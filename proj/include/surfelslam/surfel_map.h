#pragma once

#include <string>
#include <utility>
#include <vector>

#include "surfelslam/geometry.h"
#include "surfelslam/image.h"

namespace surfelslam {

struct Surfel {
    Eigen::Vector3d position; // global frame, meters
    Eigen::Vector3d normal;   // unit, global frame
    Eigen::Vector3f color;    // 0..255
    double weight = 0;        // confidence, grows with merges
    double radius = 0;        // meters
    int t0 = 0;               // frame index at creation
    int t = 0;                // frame index of last update
};

struct MapParams {
    int dt = 200;                 // active window, frames
    double assoc_depth = 0.01;    // merge gate, meters
    double assoc_angle_deg = 20;  // merge gate, degrees
    double w_init = 1.0;
    double w_stable = 10.0;
    double w_max = 100.0;
    int t_stable = 30;            // frames an unstable surfel may linger
    double r_min = 1e-6;          // radius floor, meters
};

// One preprocessed input frame: depth in meters (0 = invalid), normals in the
// camera frame (zero = invalid), mask nonzero = excluded from fusion.
struct FrameData {
    ColorImage color;
    DepthImage depth;
    NormalImage normal;
    MaskImage mask;
};

struct PredictedView {
    DepthImage depth;   // camera-frame z of the front surfel, 0 = none
    ColorImage color;
    NormalImage normal; // camera frame
    IndexImage index;   // id of the front surfel, -1 = none
};

// Cross-product normals from backprojected depth, flipped toward the camera.
// Pixels with invalid depth in the stencil get a zero normal.
NormalImage compute_normals(const DepthImage& depth, const Intrinsics& K);

enum class Subset { Active, Inactive };

class SurfelMap {
public:
    explicit SurfelMap(MapParams prm = {}) : prm_(prm) {}

    const std::vector<Surfel>& surfels() const { return surfels_; }
    std::vector<Surfel>& surfels() { return surfels_; }
    const MapParams& params() const { return prm_; }
    int now() const { return now_; }
    void set_now(int now) { now_ = now; }

    bool is_active(const Surfel& s) const { return now_ - s.t <= prm_.dt; }

    // Splatted disc rendering with a z-buffer. min_weight < 0 selects the
    // stability threshold; fusion passes 0 so fresh surfels can associate.
    PredictedView predict_view(Subset subset, const Pose& pose, const Intrinsics& K,
                               double min_weight = -1.0) const;

    // Fuse one frame: per-pixel association against the active splat index
    // image, confidence-weighted merge or append, then stale-surfel removal.
    void integrate(const FrameData& frame, const Pose& pose, const Intrinsics& K, int now);

    // Ids split by the freshness window: active = now - t <= dt.
    std::pair<std::vector<int>, std::vector<int>> partition(int now) const;

    void export_ply(const std::string& path) const;

private:
    MapParams prm_;
    std::vector<Surfel> surfels_;
    int now_ = 0;
};

// Measurement surfel for one pixel. Radius grows with depth and grazing
// angle; weight falls off radially from the principal point.
Surfel new_surfel(int ux, int uy, const FrameData& frame, const Pose& pose, const Intrinsics& K,
                  int now, const MapParams& prm);

// Reads a map written by export_ply; imported surfels get weight w_stable
// and timestamps 0 so a re-export reproduces the file byte for byte.
SurfelMap import_ply(const std::string& path, MapParams prm = {});

} // namespace surfelslam
