#include "surfelslam/synth.h"

#include <cmath>

#include "surfelslam/errors.h"

namespace surfelslam::synth {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

double lattice(uint32_t seed, int64_t ix, int64_t iy, int64_t iz) {
    uint64_t h = splitmix64((static_cast<uint64_t>(ix) * 0x8DA6B343ULL) ^
                            (static_cast<uint64_t>(iy) * 0xD8163841ULL) ^
                            (static_cast<uint64_t>(iz) * 0xCB1AB31FULL) ^
                            (static_cast<uint64_t>(seed) << 32));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// quintic fade and derivative
inline double fade(double t) { return t * t * t * (t * (6 * t - 15) + 10); }
inline double dfade(double t) { return 30 * t * t * (t - 1) * (t - 1); }

} // namespace

uint64_t hash_counter(uint64_t seed, uint64_t frame, uint64_t pixel, uint64_t lane) {
    return splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ frame) ^ pixel) ^ lane);
}

double uniform01(uint64_t h) {
    return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

double value_noise(const Eigen::Vector3d& p, double cell, uint32_t seed, Eigen::Vector3d* grad) {
    Eigen::Vector3d q = p / cell;
    Eigen::Vector3d fl = q.array().floor();
    int64_t ix = static_cast<int64_t>(fl.x());
    int64_t iy = static_cast<int64_t>(fl.y());
    int64_t iz = static_cast<int64_t>(fl.z());
    Eigen::Vector3d f = q - fl;
    double u = fade(f.x()), v = fade(f.y()), w = fade(f.z());

    double c[2][2][2];
    for (int dz = 0; dz < 2; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) c[dx][dy][dz] = lattice(seed, ix + dx, iy + dy, iz + dz);

    auto tri = [&](double uu, double vv, double ww) {
        return c[0][0][0] * (1 - uu) * (1 - vv) * (1 - ww) + c[1][0][0] * uu * (1 - vv) * (1 - ww) +
               c[0][1][0] * (1 - uu) * vv * (1 - ww) + c[1][1][0] * uu * vv * (1 - ww) +
               c[0][0][1] * (1 - uu) * (1 - vv) * ww + c[1][0][1] * uu * (1 - vv) * ww +
               c[0][1][1] * (1 - uu) * vv * ww + c[1][1][1] * uu * vv * ww;
    };
    double val = tri(u, v, w);
    if (grad) {
        double du = dfade(f.x()), dv = dfade(f.y()), dw = dfade(f.z());
        double gx = (tri(1, v, w) - tri(0, v, w)) * du;
        double gy = (c[0][0][0] * -(1 - u) * (1 - w) + c[1][0][0] * -u * (1 - w) +
                     c[0][1][0] * (1 - u) * (1 - w) + c[1][1][0] * u * (1 - w) +
                     c[0][0][1] * -(1 - u) * w + c[1][0][1] * -u * w + c[0][1][1] * (1 - u) * w +
                     c[1][1][1] * u * w) *
                    dv;
        double gz = (c[0][0][0] * -(1 - u) * (1 - v) + c[1][0][0] * -u * (1 - v) +
                     c[0][1][0] * -(1 - u) * v + c[1][1][0] * -u * v + c[0][0][1] * (1 - u) * (1 - v) +
                     c[1][0][1] * u * (1 - v) + c[0][1][1] * (1 - u) * v + c[1][1][1] * u * v) *
                    dw;
        *grad = Eigen::Vector3d(gx, gy, gz) / cell;
    }
    return val;
}

namespace {

// Signed implicit field: negative inside the surface. Gradient by the scene's
// analytic form (value-noise gradient included for the bump field).
struct Implicit {
    const Scene& s;

    double eval(const Eigen::Vector3d& p, Eigen::Vector3d* grad = nullptr) const {
        switch (s.kind) {
            case Scene::SphereInterior: {
                Eigen::Vector3d d = p - s.center;
                double r = d.norm();
                if (grad) *grad = r > 1e-15 ? Eigen::Vector3d(d / r) : Eigen::Vector3d(1, 0, 0);
                return r - s.radius;
            }
            case Scene::TubeInterior:
            case Scene::DeformedTube: {
                // capped tube: cylinder wall for |z| < h, spherical caps beyond
                double rad = s.tube_radius;
                Eigen::Vector3d bg = Eigen::Vector3d::Zero();
                if (s.kind == Scene::DeformedTube) {
                    Eigen::Vector3d g;
                    double n = value_noise(p, s.bump_cell, s.bump_seed, &g);
                    rad += s.bump_amp * (2.0 * n - 1.0);
                    bg = -s.bump_amp * 2.0 * g;
                }
                double h = s.tube_half_length;
                double az = std::abs(p.z());
                if (az <= h) {
                    double rxy = std::hypot(p.x(), p.y());
                    if (grad) {
                        Eigen::Vector3d gr = rxy > 1e-15
                                                 ? Eigen::Vector3d(p.x() / rxy, p.y() / rxy, 0)
                                                 : Eigen::Vector3d(1, 0, 0);
                        *grad = gr + bg;
                    }
                    return rxy - rad;
                }
                Eigen::Vector3d c(0, 0, p.z() > 0 ? h : -h);
                Eigen::Vector3d d = p - c;
                double r = d.norm();
                if (grad) *grad = (r > 1e-15 ? Eigen::Vector3d(d / r) : Eigen::Vector3d(1, 0, 0)) + bg;
                return r - rad;
            }
        }
        return 0;
    }
};

// March along the ray to bracket the inside->outside crossing, then bisect.
double raycast(const Implicit& f, const Eigen::Vector3d& o, const Eigen::Vector3d& dir) {
    if (f.eval(o) >= 0) throw InvalidSceneError("render: camera outside the surface");
    double step = 0.25 * (f.s.kind == Scene::SphereInterior ? f.s.radius : f.s.tube_radius);
    double t0 = 0, t1 = step;
    double f1 = f.eval(o + t1 * dir);
    int guard = 0;
    while (f1 < 0) {
        t0 = t1;
        t1 += step;
        f1 = f.eval(o + t1 * dir);
        if (++guard > 400) throw InvalidSceneError("render: ray escaped the scene volume");
    }
    for (int i = 0; i < 100; ++i) {
        double tm = 0.5 * (t0 + t1);
        if (f.eval(o + tm * dir) < 0)
            t0 = tm;
        else
            t1 = tm;
        if (t1 - t0 < 1e-13) break;
    }
    return 0.5 * (t0 + t1);
}

// Exact sphere intersection (from inside): avoids marching error entirely.
double raycast_sphere(const Scene& s, const Eigen::Vector3d& o, const Eigen::Vector3d& dir) {
    Eigen::Vector3d oc = s.center - o;
    if (oc.norm() >= s.radius) throw InvalidSceneError("render: camera outside the sphere");
    double b = dir.dot(oc);
    double c = oc.squaredNorm() - s.radius * s.radius;
    return b + std::sqrt(std::max(0.0, b * b - c));
}

} // namespace

RenderOut render(const Scene& scene, const Pose& pose, const Intrinsics& K, const LightModel& L,
                 const NoiseConfig& noise, int frame) {
    RenderOut out;
    out.color = ColorImage(K.width, K.height, Eigen::Vector3f::Zero());
    out.depth = DepthImage(K.width, K.height, 0.0f);
    out.specular_gt = MaskImage(K.width, K.height, 0);

    Implicit impl{scene};
    // light propagation direction in the camera frame
    Eigen::Vector3d light(std::cos(L.tilt) * std::sin(L.slant),
                          std::sin(L.tilt) * std::sin(L.slant), std::cos(L.slant));

    // blob parameters for this frame
    struct Blob {
        double cx, cy, s, support2;
    };
    constexpr double kBlobAmp = 1.0, kBlobThresh = 0.05;
    std::vector<Blob> blobs;
    for (int i = 0; i < noise.blob_count; ++i) {
        uint64_t h0 = hash_counter(noise.seed, frame, 0xB10B, 3 * i);
        uint64_t h1 = hash_counter(noise.seed, frame, 0xB10B, 3 * i + 1);
        uint64_t h2 = hash_counter(noise.seed, frame, 0xB10B, 3 * i + 2);
        Blob b;
        b.cx = uniform01(h0) * (K.width - 1);
        b.cy = uniform01(h1) * (K.height - 1);
        b.s = 1.5 + 1.0 * uniform01(h2);
        b.support2 = 2.0 * b.s * b.s * std::log(kBlobAmp / kBlobThresh);
        blobs.push_back(b);
    }

    for (int y = 0; y < K.height; ++y) {
        for (int x = 0; x < K.width; ++x) {
            Eigen::Vector3d ray_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
            double znorm = ray_cam.norm();
            Eigen::Vector3d dir_cam = ray_cam / znorm;
            Eigen::Vector3d dir_w = pose.R * dir_cam;

            double t = scene.kind == Scene::SphereInterior ? raycast_sphere(scene, pose.t, dir_w)
                                                           : raycast(impl, pose.t, dir_w);
            Eigen::Vector3d hit = pose.t + t * dir_w;
            out.depth.at(x, y) = static_cast<float>(t * dir_cam.z());

            Eigen::Vector3d grad;
            impl.eval(hit, &grad);
            Eigen::Vector3d n_w = -grad.normalized(); // interior normal, toward the camera
            Eigen::Vector3d n_cam = pose.R.transpose() * n_w;

            double tex = value_noise(hit, scene.texture_cell, scene.texture_seed) +
                         0.3 * value_noise(hit, scene.texture_cell / 3.0, scene.texture_seed + 1);
            double alb = 1.0 - scene.texture_contrast * tex / 1.3;
            double shade = std::max(0.0, n_cam.dot(-light));
            double I = alb * L.albedo * shade;

            for (const Blob& b : blobs) {
                double dx = x - b.cx, dy = y - b.cy;
                double d2 = dx * dx + dy * dy;
                if (d2 <= b.support2) {
                    I += kBlobAmp * std::exp(-d2 / (2 * b.s * b.s));
                    out.specular_gt.at(x, y) = 1;
                }
            }

            if (noise.sigma > 0) {
                uint64_t pix = static_cast<uint64_t>(y) * K.width + x;
                double u1 = uniform01(hash_counter(noise.seed, frame, pix, 1));
                double u2 = uniform01(hash_counter(noise.seed, frame, pix, 2));
                I += noise.sigma * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
            }

            float v = static_cast<float>(std::lround(std::clamp(I, 0.0, 1.0) * 255.0));
            out.color.at(x, y) = Eigen::Vector3f(v, v, v);
        }
    }
    return out;
}

Intrinsics default_intrinsics() { return {300.0, 300.0, 159.5, 119.5, 320, 240}; }

namespace {

Pose look_pose(const Eigen::Vector3d& position, double yaw, double pitch) {
    Eigen::Matrix3d R = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                         Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()))
                            .toRotationMatrix();
    return {R, position};
}

// Circular orbit in the z=0 plane, identity orientation, radius chosen so the
// chord-summed path length is exact for the requested frame count.
std::vector<Pose> orbit(int frames, double revolutions, double path_length) {
    std::vector<Pose> poses;
    double dth = 2.0 * M_PI * revolutions / (frames - 1);
    double r = path_length / ((frames - 1) * 2.0 * std::sin(dth / 2.0));
    for (int k = 0; k < frames; ++k) {
        double th = dth * k;
        poses.push_back({Eigen::Matrix3d::Identity(), {r * std::cos(th), r * std::sin(th), 0.0}});
    }
    return poses;
}

std::vector<Pose> scan_trajectory(int frames) {
    // orbit with vertical weave and gentle look-direction sway
    std::vector<Pose> poses;
    double revolutions = 2.0;
    for (int k = 0; k < frames; ++k) {
        double s = static_cast<double>(k) / (frames - 1);
        double th = 2.0 * M_PI * revolutions * s;
        Eigen::Vector3d p(0.021 * std::cos(th), 0.021 * std::sin(th), 0.008 * std::sin(4.0 * th));
        poses.push_back(look_pose(p, 0.15 * std::sin(2.0 * th), 0.1 * std::sin(3.0 * th)));
    }
    return poses;
}

std::vector<Pose> complex_trajectory(int frames) {
    // forward two turns, back one, forward again: repeated revisits
    std::vector<Pose> poses;
    for (int k = 0; k < frames; ++k) {
        double s = static_cast<double>(k) / (frames - 1);
        double th;
        if (s < 0.5)
            th = 4.0 * M_PI * (s / 0.5);
        else if (s < 0.75)
            th = 4.0 * M_PI - 2.0 * M_PI * ((s - 0.5) / 0.25);
        else
            th = 2.0 * M_PI + 4.0 * M_PI * ((s - 0.75) / 0.25);
        Eigen::Vector3d p(0.02 * std::cos(th), 0.02 * std::sin(th), 0.004 * std::sin(th * 0.5));
        poses.push_back(look_pose(p, 0.1 * std::sin(th), 0.0));
    }
    return poses;
}

// Deformed-tube palindrome: outbound half, then exact retrace. pose(300) ==
// pose(60) at the default 360 frames, with a 240-frame revisit gap.
std::vector<Pose> loopy_trajectory(int frames) {
    std::vector<Pose> poses;
    int half = frames / 2;
    auto outbound = [&](int k) {
        double s = static_cast<double>(k) / half;
        Eigen::Vector3d p(-0.012 + 0.004 * std::sin(2.0 * M_PI * s), 0.004 * std::sin(M_PI * s),
                          -0.06 + 0.12 * s);
        double yaw = -0.45 + 0.2 * std::sin(2.0 * M_PI * s); // tilted toward the wall
        return look_pose(p, yaw, 0.25);
    };
    for (int k = 0; k < frames; ++k) poses.push_back(outbound(k <= half ? k : frames - k));
    return poses;
}

double path_length_of(const std::vector<Pose>& poses) {
    double len = 0;
    for (size_t i = 1; i < poses.size(); ++i) len += (poses[i].t - poses[i - 1].t).norm();
    return len;
}

} // namespace

const std::vector<Preset>& presets() {
    static const std::vector<Preset> all = [] {
        Scene sphere;
        Scene tube;
        tube.kind = Scene::DeformedTube;
        // headroom below saturation so specular blobs stay separable
        LightModel light{0.0, 0.0, 0.85};
        std::vector<Preset> v;
        v.push_back({"t1_slow", sphere, {0.0, 0, 1}, light, 1000});
        v.push_back({"t2_scan", sphere, {0.0, 0, 1}, light, 600});
        v.push_back({"t3_complex", sphere, {0.0, 0, 1}, light, 600});
        v.push_back({"t4_fast", sphere, {0.0, 0, 1}, light, 100});
        v.push_back({"t5_loopy", tube, {0.0, 0, 1}, light, 360});
        v.push_back({"t6_noise", sphere, {2.0 / 255.0, 0, 1}, light, 1000});
        v.push_back({"t7_reflect", sphere, {2.0 / 255.0, 6, 1}, light, 1000});
        return v;
    }();
    return all;
}

const Preset& preset(const std::string& name) {
    for (const Preset& p : presets())
        if (p.name == name) return p;
    std::string known;
    for (const Preset& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw InvalidInputError("unknown trajectory preset '" + name + "' (known: " + known + ")");
}

std::vector<Pose> make_trajectory(const std::string& name, int frames, double* path_length) {
    const Preset& p = preset(name);
    if (frames <= 1) frames = p.default_frames;
    std::vector<Pose> poses;
    if (p.name == "t1_slow" || p.name == "t6_noise" || p.name == "t7_reflect")
        poses = orbit(frames, 3.0, 0.414);
    else if (p.name == "t2_scan")
        poses = scan_trajectory(frames);
    else if (p.name == "t3_complex")
        poses = complex_trajectory(frames);
    else if (p.name == "t4_fast")
        poses = orbit(frames, 1.5, 0.471);
    else
        poses = loopy_trajectory(frames);
    if (path_length) *path_length = path_length_of(poses);
    return poses;
}

Pose TrajectoryScript::sample(int frame) const {
    if (waypoints.empty()) throw InvalidInputError("trajectory script: no waypoints");
    if (frame <= waypoints.front().frame) return waypoints.front().pose;
    if (frame >= waypoints.back().frame) return waypoints.back().pose;
    size_t i = 1;
    while (waypoints[i].frame < frame) ++i;
    const Waypoint& a = waypoints[i - 1];
    const Waypoint& b = waypoints[i];
    if (b.frame == frame) return b.pose;
    double s = static_cast<double>(frame - a.frame) / (b.frame - a.frame);
    Eigen::Quaterniond qa(a.pose.R), qb(b.pose.R);
    Pose out;
    out.R = qa.slerp(s, qb).toRotationMatrix();
    out.t = (1 - s) * a.pose.t + s * b.pose.t;
    return out;
}

std::vector<Pose> inject_drift(const std::vector<Pose>& poses, double per_frame,
                               std::vector<Twist>* drifts) {
    if (per_frame < 0) throw InvalidInputError("inject_drift: negative drift");
    std::vector<Pose> out;
    if (drifts) drifts->clear();
    Twist unit = Twist::Zero();
    unit(0) = per_frame;
    for (size_t k = 0; k < poses.size(); ++k) {
        Twist d = unit * static_cast<double>(k + 1);
        out.push_back(se3_exp(d) * poses[k]);
        if (drifts) drifts->push_back(d);
    }
    return out;
}

} // namespace surfelslam::synth
