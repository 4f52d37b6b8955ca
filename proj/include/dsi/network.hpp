#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsi/component_models.hpp"

namespace dsi {

// ---------------------------------------------------------------------------
// Case description
// ---------------------------------------------------------------------------

enum class BusType { slack, pv, pq };
enum class BranchKind { line, transformer };
enum class GeneratorKind { gfol, gfor, vsbi };

const char* to_string(BusType type);
const char* to_string(BranchKind kind);
const char* to_string(GeneratorKind kind);

/// Powers and shunts in per unit on the system base.
struct Bus {
    std::string id;
    BusType type = BusType::pq;
    double v_set = 1.0;      ///< used by slack and pv buses
    double angle_set = 0.0;  ///< rad, slack only
    double p_load = 0.0;
    double q_load = 0.0;
    double g_shunt = 0.0;
    double b_shunt = 0.0;
};

struct Branch {
    std::string id;
    BranchKind kind = BranchKind::line;
    BranchParams params;
};

/// Voltage source behind an impedance on the generator's own rating.
struct VsbiSource {
    double scr = 15.0;
    double x_over_r = 10.0;
};

struct Generator {
    std::string id;
    std::string bus;
    GeneratorKind kind = GeneratorKind::vsbi;
    double rating_mva = 100.0;
    double p_pu = 0.0;  ///< dispatch, system base (ignored at the slack)
    double q_pu = 0.0;  ///< dispatch, system base (ignored at slack/pv regulating units)
    ConverterParams converter;  ///< gfol / gfor only; s_rated_mva == rating_mva
    VsbiSource vsbi;            ///< vsbi only
};

struct NetworkCase {
    std::string name;
    double base_mva = 100.0;
    double base_kv = 230.0;
    double f0_hz = kBaseFrequencyHz;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    double omega0() const { return 2.0 * kPi * f0_hz; }

    /// Exactly one slack, unique ids, known bus references, connected graph,
    /// positive ratings, valid converter parameters.
    void validate() const;

    std::size_t bus_index(const std::string& id) const;
    std::size_t generator_index(const std::string& id) const;
    Labels bus_ids() const;
    Labels generator_ids() const;
};

// ---------------------------------------------------------------------------
// Power flow
// ---------------------------------------------------------------------------

struct OperatingPoint {
    std::vector<double> v_mag;    ///< per bus
    std::vector<double> v_angle;  ///< per bus, rad
    std::vector<double> gen_p;    ///< per generator, system base
    std::vector<double> gen_q;
    int iterations = 0;
    double max_mismatch = 0.0;

    Complex voltage(std::size_t bus) const { return std::polar(v_mag.at(bus), v_angle.at(bus)); }
};

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iterations = 50;
};

/// Newton-Raphson in polar coordinates from a flat start (1 pu, 0 rad; slack
/// and pv magnitudes at their setpoints). Loads are constant power here.
OperatingPoint solve_power_flow(const NetworkCase& net, const PowerFlowOptions& options = {});

/// Complex bus admittance matrix (lines as pi sections, shunts included).
ComplexMatrix bus_admittance(const NetworkCase& net);

/// Generator operating point in the form the converter models take.
BusOperatingPoint generator_operating_point(const NetworkCase& net, const OperatingPoint& op, std::size_t gen);

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

struct AssemblyOptions {
    /// Capacitance given to buses that have no other voltage-defining element.
    double synthetic_capacitance = 1e-6;
    /// X/R of shunt reactors (negative bus susceptance), which would otherwise
    /// be undamped inductors.
    double shunt_reactor_x_over_r = 100.0;
};

struct ComponentRange {
    std::string id;
    std::string kind;  ///< "bus", "branch", "load", "shunt", "gfol", "gfor", "vsbi"
    std::size_t offset = 0;
    std::size_t count = 0;
};

struct AssembledSystem {
    /// Inputs i_q_f_<bus>, i_d_f_<bus>; outputs u_q_<bus>, u_d_<bus>.
    StateSpaceModel model;
    Labels bus_ids;
    std::vector<ComponentRange> components;
    /// Generator models exactly as linearized, keyed by generator id.
    std::map<std::string, StateSpaceModel> generator_models;
    std::map<std::string, GeneratorKind> generator_kinds;
    /// Without any vsbi source the network is invariant to a common rotation
    /// and A has one structural zero eigenvalue. Bus voltages are then
    /// measured in the frame of the angle reference generator.
    std::size_t symmetry_modes = 0;
    std::optional<std::string> angle_reference;
    std::vector<double> bus_capacitance;  ///< per bus, pu
    OperatingPoint op;

    std::size_t num_buses() const { return bus_ids.size(); }
    std::size_t bus_index(const std::string& id) const;
};

/// Builds every component at the operating point and interconnects them.
/// Bus voltages are states of the bus capacitance; the fictitious current
/// inputs enter the bus current balance directly.
AssembledSystem assemble_system(const NetworkCase& net, const OperatingPoint& op, const AssemblyOptions& options = {});

/// The generator's own model: POC voltage in, drawn current out.
StateSpaceModel extract_subsystem(const AssembledSystem& sys, const std::string& generator_id);

/// Current drawn by a bus load at the operating point (qd, system base).
Eigen::Vector2d load_current(const NetworkCase& net, const OperatingPoint& op, const std::string& bus_id);

/// Copy of the case with one generator replaced by a vsbi source of the given
/// strength (on the generator's rating), keeping its dispatch.
NetworkCase replace_with_vsbi(const NetworkCase& net, const std::string& generator_id, const VsbiSource& source);

}  // namespace dsi
