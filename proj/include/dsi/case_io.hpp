#pragma once

#include <filesystem>
#include <string>

#include "dsi/dsi.hpp"
#include "dsi/network.hpp"

namespace dsi {

/// Reference model settings; scr is on the system base.
struct ReferenceSettings {
    double scr = 15.0;
    double x_over_r = 10.0;
};

struct AnalysisSettings {
    double f_min_hz = 0.15;
    double f_max_hz = 1000.0;
    double f_step_hz = 0.15;
    RangeSpec ranges = RangeSpec::default_ranges();
    ReferenceSettings reference;
    double synthetic_capacitance = 1e-6;

    FrequencyGrid grid() const { return FrequencyGrid::from_hz(f_min_hz, f_max_hz, f_step_hz); }
};

struct CaseFile {
    NetworkCase network;
    AnalysisSettings analysis;
};

/// Parses and validates a case document. Unknown keys, missing required keys
/// and parameters of the wrong converter mode are ValidationErrors.
CaseFile parse_case(const std::string& json_text);
CaseFile load_case(const std::filesystem::path& path);

/// Canonical form: fixed key order, every field written out. Parsing the
/// output gives back the same CaseFile.
std::string serialize_case(const CaseFile& c);

}  // namespace dsi
