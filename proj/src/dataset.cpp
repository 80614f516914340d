#include "surfelslam/dataset.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "surfelslam/errors.h"
#include "surfelslam/eval.h"
#include "surfelslam/png_io.h"
#include "surfelslam/synth.h"

namespace fs = std::filesystem;

namespace surfelslam {

std::string frame_path(const std::string& root, const std::string& sub, int i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", i);
    return (fs::path(root) / sub / name).string();
}

DatasetLayout open_dataset(const std::string& root) {
    DatasetLayout d;
    d.root = root;
    if (!fs::is_directory(root)) throw LoadError("dataset: '" + root + "' is not a directory");

    fs::path cam = fs::path(root) / "camera.cfg";
    if (!fs::exists(cam)) throw LoadError("dataset: missing camera.cfg in '" + root + "'");
    Config c;
    c.load_file(cam.string());
    d.K.fx = c.get_double("camera.fx");
    d.K.fy = c.get_double("camera.fy");
    d.K.cx = c.get_double("camera.cx");
    d.K.cy = c.get_double("camera.cy");
    d.K.width = c.get_int("camera.width");
    d.K.height = c.get_int("camera.height");
    if (d.K.fx <= 0 || d.K.fy <= 0 || d.K.width <= 0 || d.K.height <= 0)
        throw LoadError("dataset: camera.cfg in '" + root +
                        "' must set positive camera.fx, camera.fy, camera.width, camera.height");
    d.light.slant = c.get_double("camera.light_slant");
    d.light.tilt = c.get_double("camera.light_tilt");
    d.light.albedo = c.get_double("camera.light_albedo");
    d.vignetting.a2 = c.get_double("vignette.a2");
    d.vignetting.a4 = c.get_double("vignette.a4");
    d.vignetting.a6 = c.get_double("vignette.a6");
    d.vignetting.cx = c.get_double("vignette.cx");
    d.vignetting.cy = c.get_double("vignette.cy");

    fs::path rgb = fs::path(root) / "rgb";
    if (!fs::is_directory(rgb)) throw LoadError("dataset: missing rgb/ in '" + root + "'");
    int named = 0;
    for (const auto& e : fs::directory_iterator(rgb))
        if (e.path().extension() == ".png") ++named;
    while (fs::exists(frame_path(root, "rgb", d.frames))) ++d.frames;
    if (d.frames == 0) throw LoadError("dataset: no rgb/000000.png in '" + root + "'");
    if (named != d.frames)
        throw LoadError("dataset: rgb/ holds " + std::to_string(named) +
                        " .png files but consecutive numbering stops before " +
                        frame_path(root, "rgb", d.frames));

    d.has_depth = fs::exists(frame_path(root, "depth", 0));
    d.has_groundtruth = fs::exists(fs::path(root) / "groundtruth.txt");
    return d;
}

ColorImage load_rgb(const DatasetLayout& d, int i) {
    std::string path = frame_path(d.root, "rgb", i);
    ColorImage img = read_png_color(path);
    if (img.width() != d.K.width || img.height() != d.K.height)
        throw LoadError("dataset: '" + path + "' is " + std::to_string(img.width()) + "x" +
                        std::to_string(img.height()) + ", camera.cfg says " +
                        std::to_string(d.K.width) + "x" + std::to_string(d.K.height));
    return img;
}

DepthImage load_depth(const DatasetLayout& d, int i) {
    std::string path = frame_path(d.root, "depth", i);
    if (!fs::exists(path)) throw LoadError("dataset: missing depth file '" + path + "'");
    DepthImage img = read_png_depth(path);
    if (img.width() != d.K.width || img.height() != d.K.height)
        throw LoadError("dataset: '" + path + "' is " + std::to_string(img.width()) + "x" +
                        std::to_string(img.height()) + ", camera.cfg says " +
                        std::to_string(d.K.width) + "x" + std::to_string(d.K.height));
    return img;
}

int write_synth_dataset(const std::string& root, const std::string& preset_name, int frames,
                        uint64_t seed) {
    const synth::Preset& P = synth::preset(preset_name);
    if (frames <= 0) frames = P.default_frames;
    Intrinsics K = synth::default_intrinsics();

    std::error_code ec;
    fs::create_directories(fs::path(root) / "rgb", ec);
    fs::create_directories(fs::path(root) / "depth", ec);
    if (!fs::is_directory(fs::path(root) / "rgb"))
        throw IoError("synth dataset: cannot create '" + root + "/rgb'");

    synth::NoiseConfig noise = P.noise;
    noise.seed = seed;
    std::vector<Pose> poses = synth::make_trajectory(preset_name, frames);

    Trajectory gt;
    for (int i = 0; i < frames; ++i) {
        synth::RenderOut out = synth::render(P.scene, poses[i], K, P.light, noise, i);
        write_png_color(frame_path(root, "rgb", i), out.color);
        write_png_depth(frame_path(root, "depth", i), out.depth);
        gt.push_back(entry_from_pose(i / 30.0, poses[i]));
    }
    save_trajectory((fs::path(root) / "groundtruth.txt").string(), gt);

    std::FILE* f = std::fopen((fs::path(root) / "camera.cfg").string().c_str(), "wb");
    if (!f) throw IoError("synth dataset: cannot write '" + root + "/camera.cfg'");
    std::fprintf(f, "# synthetic dataset, preset %s, seed %llu\n", preset_name.c_str(),
                 static_cast<unsigned long long>(seed));
    std::fprintf(f, "camera.fx = %.9f\n", K.fx);
    std::fprintf(f, "camera.fy = %.9f\n", K.fy);
    std::fprintf(f, "camera.cx = %.9f\n", K.cx);
    std::fprintf(f, "camera.cy = %.9f\n", K.cy);
    std::fprintf(f, "camera.width = %d\n", K.width);
    std::fprintf(f, "camera.height = %d\n", K.height);
    std::fprintf(f, "camera.light_slant = %.9f\n", P.light.slant);
    std::fprintf(f, "camera.light_tilt = %.9f\n", P.light.tilt);
    std::fprintf(f, "camera.light_albedo = %.9f\n", P.light.albedo);
    std::fprintf(f, "vignette.a2 = 0\nvignette.a4 = 0\nvignette.a6 = 0\n");
    if (std::fclose(f) != 0) throw IoError("synth dataset: write failed for camera.cfg");
    return frames;
}

} // namespace surfelslam
