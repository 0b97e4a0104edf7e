#ifndef RARESIM_CONFIG_HPP
#define RARESIM_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace raresim {

// One experiment run. Parsed from a flat TOML-style file: top-level keys plus
// [model], [grid] and [action] tables; see the README for the full key list.
struct ExperimentConfig {
    std::string kind;   // mc | is | sweep | hjb | action | compare
    std::string preset; // catalog name
    std::map<std::string, double> model_overrides;

    std::vector<double> eps;
    std::int64_t n_samples = 10'000;
    double dt = 1e-3;
    std::uint64_t master_seed = 0;
    std::string out_dir = "out";
    int workers = 1;
    bool dump_paths = false;
    double clamp_cap = 0.0; // 0 => 10 * max grid |f_1| rule
    double phi_cap = 5.0;
    std::string control_cache;

    std::vector<int> grid_points; // empty => per-dimension default
    int time_steps = 0;           // 0 => from the CFL bound
    int store_slices = 65;

    int knots = 24;
    int restarts = 6;

    static ExperimentConfig from_file(const std::string& path);
    static ExperimentConfig from_string(const std::string& text, const std::string& origin);

    // Throws ConfigError naming the offending field.
    void validate() const;
};

} // namespace raresim

#endif
