#include "surfelslam/config.h"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace surfelslam {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

const std::map<std::string, Config::KeySpec>& Config::registry() {
    using KS = KeySpec;
    static const std::map<std::string, KeySpec> reg = {
        {"map.dt", {KS::Int, "200", 1, 1000000, "active window in frames"}},
        {"map.assoc_depth", {KS::Double, "0.01", 1e-6, 1.0, "association depth gate (m)"}},
        {"map.assoc_angle", {KS::Double, "20", 0.1, 90, "association normal gate (deg)"}},
        {"map.w_stable", {KS::Double, "10", 0, 1e6, "stability confidence threshold"}},
        {"map.w_max", {KS::Double, "100", 1, 1e9, "confidence cap"}},
        {"track.w_rgb", {KS::Double, "0.1", 0, 1e6, "photometric energy weight"}},
        {"track.levels", {KS::Int, "3", 1, 6, "pyramid levels"}},
        {"track.iters", {KS::String, "10,5,4", 0, 0, "iterations coarse..fine"}},
        {"track.eps", {KS::Double, "1e-6", 0, 1, "twist-norm convergence threshold"}},
        {"reflect.tile", {KS::Int, "32", 4, 1024, "adaptive threshold tile size (px)"}},
        {"reflect.k_sigma", {KS::Double, "2.5", 0, 100, "threshold = mean + k_sigma*std"}},
        {"reflect.ceiling", {KS::Double, "240", 0, 255, "hard luma ceiling"}},
        {"reflect.dilate", {KS::Int, "2", 0, 64, "mask dilation radius (px)"}},
        {"vignette.a2", {KS::Double, "0", -10, 10, "radial gain r^2 coefficient"}},
        {"vignette.a4", {KS::Double, "0", -10, 10, "radial gain r^4 coefficient"}},
        {"vignette.a6", {KS::Double, "0", -10, 10, "radial gain r^6 coefficient"}},
        {"vignette.cx", {KS::Double, "-1", -1, 1e5, "optical center x (-1 = principal point)"}},
        {"vignette.cy", {KS::Double, "-1", -1, 1e5, "optical center y (-1 = principal point)"}},
        {"sfs.iters", {KS::Int, "40", 1, 10000, "shading iteration count"}},
        {"sfs.slant", {KS::Double, "0", 0, 1.5707, "light slant (rad)"}},
        {"sfs.tilt", {KS::Double, "0", 0, 6.2832, "light tilt (rad)"}},
        {"sfs.albedo", {KS::Double, "1", 1e-6, 1, "surface albedo"}},
        {"sfs.scale", {KS::Double, "0.05", 1e-9, 1e3, "relative->metric scale (m/unit)"}},
        {"sfs.offset", {KS::Double, "0.03", 1e-9, 1e3, "metric depth offset (m)"}},
        {"graph.k", {KS::Int, "4", 1, 64, "graph neighbor count"}},
        {"graph.spacing", {KS::Int, "0", 0, 1000000, "node sampling stride (0 = auto)"}},
        {"graph.w_rot", {KS::Double, "1", 0, 1e9, "rotation energy weight"}},
        {"graph.w_reg", {KS::Double, "10", 0, 1e9, "regularization energy weight"}},
        {"graph.w_con", {KS::Double, "100", 0, 1e9, "constraint energy weight"}},
        {"camera.fx", {KS::Double, "0", 0, 1e6, "focal length x (px), required in camera.cfg"}},
        {"camera.fy", {KS::Double, "0", 0, 1e6, "focal length y (px), required in camera.cfg"}},
        {"camera.cx", {KS::Double, "0", -1e6, 1e6, "principal point x (px)"}},
        {"camera.cy", {KS::Double, "0", -1e6, 1e6, "principal point y (px)"}},
        {"camera.width", {KS::Int, "0", 0, 65536, "image width (px), required in camera.cfg"}},
        {"camera.height", {KS::Int, "0", 0, 65536, "image height (px), required in camera.cfg"}},
        {"camera.light_slant", {KS::Double, "0", 0, 1.5707, "light slant from optical axis (rad)"}},
        {"camera.light_tilt", {KS::Double, "0", 0, 6.2832, "light tilt in the image plane (rad)"}},
        {"camera.light_albedo", {KS::Double, "1", 1e-6, 1, "surface albedo under this light"}},
        {"loop.max_constraints", {KS::Int, "128", 1, 4096, "constraint budget per closure"}},
        {"loop.residual_max", {KS::Double, "0.005", 0, 1, "acceptance mean residual (m)"}},
        {"loop.inlier_min", {KS::Double, "0.35", 0, 1, "acceptance inlier fraction"}},
        {"loop.coverage_min", {KS::Double, "0.03", 0, 1, "inactive view coverage gate"}},
        {"loop.cooldown", {KS::Int, "10", 0, 100000, "frames between accepted closures"}},
        {"loop.enabled", {KS::Bool, "true", 0, 0, "run loop closure"}},
        {"run.depth_source", {KS::String, "files", 0, 0, "depth input: files | sfs"}},
        {"run.seed", {KS::Int, "1", 0, 2147483647, "random seed"}},
        {"run.max_dropped", {KS::Int, "10", 0, 1000000, "dropped-frame budget"}},
    };
    return reg;
}

Config::Config() {
    for (const auto& [key, spec] : registry()) values_[key] = spec.def;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

void Config::set(const std::string& key, const std::string& value) {
    auto it = registry().find(key);
    if (it == registry().end()) throw LoadError("unknown config key: " + key);
    const KeySpec& spec = it->second;
    std::string v = trim(value);
    switch (spec.type) {
        case KeySpec::Double: {
            char* end = nullptr;
            double d = std::strtod(v.c_str(), &end);
            if (end == v.c_str() || *end != '\0')
                throw LoadError("config key " + key + ": not a number: '" + v + "'");
            if (d < spec.lo || d > spec.hi)
                throw LoadError("config key " + key + ": value " + v + " out of range");
            break;
        }
        case KeySpec::Int: {
            char* end = nullptr;
            long n = std::strtol(v.c_str(), &end, 10);
            if (end == v.c_str() || *end != '\0')
                throw LoadError("config key " + key + ": not an integer: '" + v + "'");
            if (n < spec.lo || n > spec.hi)
                throw LoadError("config key " + key + ": value " + v + " out of range");
            break;
        }
        case KeySpec::Bool:
            if (v != "true" && v != "false" && v != "1" && v != "0")
                throw LoadError("config key " + key + ": expected true/false: '" + v + "'");
            break;
        case KeySpec::String:
            break;
    }
    values_[key] = v;
}

void Config::parse_line(const std::string& raw, const std::string& where) {
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw LoadError(where + ": expected key = value: '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

void Config::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config file: " + path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        parse_line(line, path + ":" + std::to_string(n));
    }
}

double Config::get_double(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw LoadError("unknown config key: " + key);
    return std::strtod(it->second.c_str(), nullptr);
}

int Config::get_int(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw LoadError("unknown config key: " + key);
    return static_cast<int>(std::strtol(it->second.c_str(), nullptr, 10));
}

bool Config::get_bool(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw LoadError("unknown config key: " + key);
    return it->second == "true" || it->second == "1";
}

std::string Config::get_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw LoadError("unknown config key: " + key);
    return it->second;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::string s = get_string(key);
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

} // namespace surfelslam
