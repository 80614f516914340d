#pragma once

#include <map>
#include <string>
#include <vector>

#include "surfelslam/errors.h"

namespace surfelslam {

// Flat `key = value` configuration with `#` comments. Every known key is
// registered with a type and range; unknown keys and out-of-range values
// are rejected at load time.
class Config {
  public:
    struct KeySpec {
        enum Type { Double, Int, Bool, String } type;
        std::string def;       // default, as text
        double lo = 0, hi = 0; // numeric range (inclusive), ignored for Bool/String
        std::string help;
    };

    Config(); // defaults for every registered key

    static const std::map<std::string, KeySpec>& registry();

    void load_file(const std::string& path);
    void parse_line(const std::string& line, const std::string& where);
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::string get_string(const std::string& key) const;

    // "10,5,4" style lists
    std::vector<int> get_int_list(const std::string& key) const;

    const std::map<std::string, std::string>& values() const { return values_; }

  private:
    std::map<std::string, std::string> values_;
};

} // namespace surfelslam
