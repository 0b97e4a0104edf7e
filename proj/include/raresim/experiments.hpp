#ifndef RARESIM_EXPERIMENTS_HPP
#define RARESIM_EXPERIMENTS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "raresim/config.hpp"
#include "raresim/estimators.hpp"
#include "raresim/hjb.hpp"

namespace raresim {

struct RunResult {
    std::vector<std::string> output_files; // relative to out_dir
    std::vector<std::string> warnings;
    std::vector<EstimateReport> reports;
};

// Executes one experiment campaign and writes its artifacts (reports.csv,
// field dumps, action tables, manifest.json) into config.out_dir.
RunResult run_experiment(const ExperimentConfig& config);

// --- artifact file IO -------------------------------------------------------

void write_reports_csv(const std::string& path, const std::vector<EstimateReport>& reports);

void write_value_field_csv(const std::string& path, const ValueField& field,
                           const std::string& field_name, const std::string& preset);
void write_control_field_csv(const std::string& path, const ControlField& field,
                             const std::string& preset);
ControlField read_control_field_csv(const std::string& path);

// Reloads a dumped control field and validates it against the requesting
// model/grid/eps; mismatches raise ConfigError ("cache invalid").
ControlField cache_control(const std::string& path, const std::string& preset,
                           const GridSpec& grid, double eps);

// FNV-1a 64-bit checksum of a file's bytes (manifest integrity listing).
std::uint64_t fnv1a64_file(const std::string& path);

// 17-significant-digit decimal formatting used by every artifact writer
// (round-trips doubles exactly).
std::string format_double(double v);

} // namespace raresim

#endif
