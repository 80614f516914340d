#include "surfelslam/surfel_map.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "surfelslam/errors.h"

namespace surfelslam {

NormalImage compute_normals(const DepthImage& depth, const Intrinsics& K) {
    NormalImage N(depth.width(), depth.height(), Eigen::Vector3f::Zero());
    auto point = [&](int x, int y, Eigen::Vector3d& p) {
        float d = depth.at(x, y);
        if (d <= 0) return false;
        p = backproject(x, y, d, K);
        return true;
    };
    for (int y = 1; y + 1 < depth.height(); ++y) {
        for (int x = 1; x + 1 < depth.width(); ++x) {
            Eigen::Vector3d c, xp, xm, yp, ym;
            if (!point(x, y, c) || !point(x + 1, y, xp) || !point(x - 1, y, xm) ||
                !point(x, y + 1, yp) || !point(x, y - 1, ym))
                continue;
            Eigen::Vector3d n = (xp - xm).cross(yp - ym);
            double len = n.norm();
            if (len < 1e-12) continue;
            n /= len;
            if (n.dot(c) > 0) n = -n; // face the camera
            N.at(x, y) = n.cast<float>();
        }
    }
    return N;
}

PredictedView SurfelMap::predict_view(Subset subset, const Pose& pose, const Intrinsics& K,
                                      double min_weight) const {
    if (min_weight < 0) min_weight = prm_.w_stable;
    PredictedView v;
    v.depth = DepthImage(K.width, K.height, 0.0f);
    v.color = ColorImage(K.width, K.height, Eigen::Vector3f::Zero());
    v.normal = NormalImage(K.width, K.height, Eigen::Vector3f::Zero());
    v.index = IndexImage(K.width, K.height, -1);

    Pose inv = pose.inverse();
    for (size_t i = 0; i < surfels_.size(); ++i) {
        const Surfel& s = surfels_[i];
        bool active = is_active(s);
        if ((subset == Subset::Active) != active) continue;
        if (s.weight < min_weight) continue;
        Eigen::Vector3d pc = inv * s.position;
        if (pc.z() <= 1e-9) continue;
        double px = K.fx * pc.x() / pc.z() + K.cx;
        double py = K.fy * pc.y() / pc.z() + K.cy;
        double pr = std::max(1.0, s.radius * K.fx / pc.z());
        int x0 = static_cast<int>(std::floor(px - pr)), x1 = static_cast<int>(std::ceil(px + pr));
        int y0 = static_cast<int>(std::floor(py - pr)), y1 = static_cast<int>(std::ceil(py + pr));
        if (x1 < 0 || y1 < 0 || x0 >= K.width || y0 >= K.height) continue;
        Eigen::Vector3f ncam = (inv.R * s.normal).cast<float>();
        float z = static_cast<float>(pc.z());
        for (int y = std::max(y0, 0); y <= std::min(y1, K.height - 1); ++y) {
            for (int x = std::max(x0, 0); x <= std::min(x1, K.width - 1); ++x) {
                double dx = x - px, dy = y - py;
                if (dx * dx + dy * dy > pr * pr) continue;
                float cur = v.depth.at(x, y);
                if (cur != 0.0f && cur <= z) continue;
                v.depth.at(x, y) = z;
                v.color.at(x, y) = s.color;
                v.normal.at(x, y) = ncam;
                v.index.at(x, y) = static_cast<int32_t>(i);
            }
        }
    }
    return v;
}

Surfel new_surfel(int ux, int uy, const FrameData& frame, const Pose& pose, const Intrinsics& K,
                  int now, const MapParams& prm) {
    float d = frame.depth.at(ux, uy);
    if (d <= 0) throw InvalidInputError("new_surfel: invalid depth at pixel");
    Eigen::Vector3f n = frame.normal.at(ux, uy);
    Surfel s;
    s.position = pose * backproject(ux, uy, d, K);
    s.normal = (pose.R * n.cast<double>()).normalized();
    s.color = frame.color.at(ux, uy);
    double nz = std::abs(n.z());
    double r_hi = 2.0 * d * std::sqrt(2.0) / K.fx;
    double r = nz > 1e-6 ? d * std::sqrt(2.0) / (K.fx * nz) : r_hi;
    s.radius = std::clamp(r, prm.r_min, r_hi);
    double corner = 0;
    for (int sx = 0; sx < 2; ++sx)
        for (int sy = 0; sy < 2; ++sy)
            corner = std::max(corner, std::hypot(sx * (K.width - 1) - K.cx, sy * (K.height - 1) - K.cy));
    double gamma = std::hypot(ux - K.cx, uy - K.cy) / (corner > 0 ? corner : 1);
    s.weight = prm.w_init * std::exp(-gamma * gamma / (2 * 0.6 * 0.6));
    s.t0 = now;
    s.t = now;
    return s;
}

void SurfelMap::integrate(const FrameData& frame, const Pose& pose, const Intrinsics& K, int now) {
    if (frame.depth.width() != K.width || frame.depth.height() != K.height ||
        !frame.normal.same_size(K.width, K.height) || !frame.mask.same_size(K.width, K.height))
        throw InvalidInputError("integrate: frame dimensions do not match intrinsics");
    now_ = now;
    double cos_gate = std::cos(prm_.assoc_angle_deg * M_PI / 180.0);
    Pose inv = pose.inverse();

    // Association index: one point splat per active surfel (any weight),
    // nearest z on collision. Disc splats shadow each other, which would
    // break exact re-association of a repeated measurement with its own
    // surfel; the search window below supplies the coverage instead.
    IndexImage aidx(K.width, K.height, -1);
    std::vector<double> zcache(surfels_.size(), 0.0);
    {
        DepthImage az(K.width, K.height, 0.0f);
        for (size_t i = 0; i < surfels_.size(); ++i) {
            const Surfel& s = surfels_[i];
            if (!is_active(s)) continue;
            Eigen::Vector3d pc = inv * s.position;
            if (pc.z() <= 1e-9) continue;
            zcache[i] = pc.z();
            int px = static_cast<int>(std::lround(K.fx * pc.x() / pc.z() + K.cx));
            int py = static_cast<int>(std::lround(K.fy * pc.y() / pc.z() + K.cy));
            if (!aidx.inside(px, py)) continue;
            float z = static_cast<float>(pc.z());
            if (az.at(px, py) != 0.0f && az.at(px, py) <= z) continue;
            az.at(px, py) = z;
            aidx.at(px, py) = static_cast<int32_t>(i);
        }
    }
    constexpr int kSearch = 3;

    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            if (frame.mask.at(x, y)) continue;
            float d = frame.depth.at(x, y);
            if (d <= 0) continue;
            if (frame.normal.at(x, y).squaredNorm() < 0.25f) continue;
            Surfel meas = new_surfel(x, y, frame, pose, K, now, prm_);

            int32_t best = -1;
            double best_dz = 0.0;
            int best_dist2 = 0;
            for (int dy = -kSearch; dy <= kSearch; ++dy) {
                for (int dx = -kSearch; dx <= kSearch; ++dx) {
                    if (!aidx.inside(x + dx, y + dy)) continue;
                    int32_t id = aidx.at(x + dx, y + dy);
                    if (id < 0 || id == best) continue;
                    const Surfel& s = surfels_[id];
                    double dz = std::abs(zcache[id] - d);
                    if (dz >= prm_.assoc_depth) continue;
                    // ties in depth error happen along iso-depth contours
                    // (neighboring pixels quantize to the same stored depth);
                    // break them toward the measurement's own pixel
                    int dist2 = dx * dx + dy * dy;
                    if (best >= 0 &&
                        (dz > best_dz || (dz == best_dz && dist2 >= best_dist2)))
                        continue;
                    if (s.normal.dot(meas.normal) <= cos_gate) continue;
                    best = id;
                    best_dz = dz;
                    best_dist2 = dist2;
                }
            }
            if (best >= 0) {
                Surfel& s = surfels_[best];
                double wsum = s.weight + meas.weight;
                s.position = (s.weight * s.position + meas.weight * meas.position) / wsum;
                Eigen::Vector3d nmix = s.weight * s.normal + meas.weight * meas.normal;
                if (nmix.norm() > 1e-12) s.normal = nmix.normalized();
                s.color = (static_cast<float>(s.weight) * s.color +
                           static_cast<float>(meas.weight) * meas.color) /
                          static_cast<float>(wsum);
                s.weight = std::min(wsum, prm_.w_max);
                s.radius = std::min(s.radius, meas.radius);
                s.t = now;
            } else {
                surfels_.push_back(meas);
            }
        }
    }

    // drop surfels that never became stable
    std::vector<Surfel> kept;
    kept.reserve(surfels_.size());
    for (const Surfel& s : surfels_)
        if (!(s.weight < prm_.w_stable && now - s.t0 > prm_.t_stable)) kept.push_back(s);
    surfels_.swap(kept);
}

std::pair<std::vector<int>, std::vector<int>> SurfelMap::partition(int now) const {
    std::pair<std::vector<int>, std::vector<int>> out;
    for (size_t i = 0; i < surfels_.size(); ++i) {
        if (now - surfels_[i].t <= prm_.dt)
            out.first.push_back(static_cast<int>(i));
        else
            out.second.push_back(static_cast<int>(i));
    }
    return out;
}

namespace {

constexpr const char* kPlyHeaderFmt =
    "ply\n"
    "format binary_little_endian 1.0\n"
    "element vertex %zu\n"
    "property float x\n"
    "property float y\n"
    "property float z\n"
    "property float nx\n"
    "property float ny\n"
    "property float nz\n"
    "property uchar red\n"
    "property uchar green\n"
    "property uchar blue\n"
    "property float radius\n"
    "end_header\n";

uint8_t to_byte(float v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
}

} // namespace

void SurfelMap::export_ply(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("export_ply: cannot open '" + path + "' for writing");
    size_t n = 0;
    for (const Surfel& s : surfels_)
        if (s.weight >= prm_.w_stable) ++n;
    char header[512];
    std::snprintf(header, sizeof header, kPlyHeaderFmt, n);
    f << header;
    for (const Surfel& s : surfels_) {
        if (s.weight < prm_.w_stable) continue;
        float v[6] = {static_cast<float>(s.position.x()), static_cast<float>(s.position.y()),
                      static_cast<float>(s.position.z()), static_cast<float>(s.normal.x()),
                      static_cast<float>(s.normal.y()),   static_cast<float>(s.normal.z())};
        uint8_t rgb[3] = {to_byte(s.color.x()), to_byte(s.color.y()), to_byte(s.color.z())};
        float r = static_cast<float>(s.radius);
        f.write(reinterpret_cast<const char*>(v), sizeof v);
        f.write(reinterpret_cast<const char*>(rgb), sizeof rgb);
        f.write(reinterpret_cast<const char*>(&r), sizeof r);
    }
    if (!f) throw IoError("export_ply: write failed for '" + path + "'");
}

SurfelMap import_ply(const std::string& path, MapParams prm) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("import_ply: cannot open '" + path + "'");
    std::string line;
    size_t n = 0;
    bool header_done = false;
    while (std::getline(f, line)) {
        if (line.rfind("element vertex ", 0) == 0) n = std::stoul(line.substr(15));
        if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) throw IoError("import_ply: malformed header in '" + path + "'");
    SurfelMap map(prm);
    for (size_t i = 0; i < n; ++i) {
        float v[6], r;
        uint8_t rgb[3];
        f.read(reinterpret_cast<char*>(v), sizeof v);
        f.read(reinterpret_cast<char*>(rgb), sizeof rgb);
        f.read(reinterpret_cast<char*>(&r), sizeof r);
        if (!f) throw IoError("import_ply: truncated vertex data in '" + path + "'");
        Surfel s;
        s.position = Eigen::Vector3d(v[0], v[1], v[2]);
        s.normal = Eigen::Vector3d(v[3], v[4], v[5]);
        s.color = Eigen::Vector3f(rgb[0], rgb[1], rgb[2]);
        s.radius = r;
        s.weight = prm.w_stable;
        map.surfels().push_back(s);
    }
    return map;
}

} // namespace surfelslam
