#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsi/freqresp.hpp"

namespace dsi {

// Per-unit conventions used by every model in this header:
//  * qd quantities are paired as [q, d]; the complex space vector is x_q - j x_d,
//    so a steady-state phasor V at angle theta has v_q = V cos(theta),
//    v_d = -V sin(theta).
//  * Reactances and susceptances are given at the nominal frequency omega0.
//    Inductor dynamics are written (x/omega0) di/dt = ..., which is the same as
//    (l/omega_base) di/dt with l = x * omega_base / omega0.
//  * One-port models take the terminal voltage as input and return the current
//    drawn from the terminal into the device (passive sign convention), so a
//    passive device has a positive-real admittance.

inline constexpr double kBaseFrequencyHz = 50.0;
inline constexpr double kBaseAngularFrequency = 2.0 * kPi * kBaseFrequencyHz;

/// Rotation by +90 degrees in the [q, d] ordering: multiplication by j.
inline Eigen::Matrix2d qd_j() {
    Eigen::Matrix2d j;
    j << 0.0, 1.0, -1.0, 0.0;
    return j;
}

/// Multiplication of a qd vector by exp(j*theta).
inline Eigen::Matrix2d qd_rotation(double theta) {
    Eigen::Matrix2d r;
    r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
    return r;
}

inline Eigen::Vector2d phasor_to_qd(Complex v) { return {v.real(), -v.imag()}; }
inline Complex qd_to_phasor(const Eigen::Vector2d& v) { return {v(0), -v(1)}; }

// ---------------------------------------------------------------------------
// Reference voltage source behind an impedance
// ---------------------------------------------------------------------------

struct VsbiReference {
    double scr = 0.0;
    double x_over_r = 0.0;
    double omega0 = kBaseAngularFrequency;
    double omega_base = kBaseAngularFrequency;
    // derived
    double r_pu = 0.0;
    double x_pu = 0.0;  ///< reactance at omega0
    double l_pu = 0.0;  ///< inductance on the omega_base scale
    double xi = 0.0;    ///< damping ratio of the admittance poles

    /// |Z| = 1/scr split by the X/R ratio.
    static VsbiReference make(double scr, double x_over_r, double omega0 = kBaseAngularFrequency,
                              double omega_base = kBaseAngularFrequency);

    /// Same impedance expressed on another power base.
    VsbiReference rebased(double from_mva, double to_mva) const;
};

/// Closed-form 2x2 admittance of the reference, Z(jw)^{-1}.
TransferMatrixSamples vsbi_admittance(const VsbiReference& ref, const FrequencyGrid& grid);

/// Z(jw) = [[r + jw l, w0 l], [-w0 l, r + jw l]] (l on the omega_base scale).
TransferMatrixSamples vsbi_impedance(const VsbiReference& ref, const FrequencyGrid& grid);

/// xi = R / sqrt(X^2 + R^2).
double damping_from_xr(double x_pu, double r_pu);

/// k = R/L = xi w / sqrt(1 - xi^2), for 0 <= xi < 1.
double rl_ratio_from_damping(double xi, double omega);

// ---------------------------------------------------------------------------
// Passive elements
// ---------------------------------------------------------------------------

struct BranchParams {
    std::string from_bus;
    std::string to_bus;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double b_pu = 0.0;  ///< total line charging, split equally between the ends
};

/// Series RL from the terminal to an ideal (zero) source: inputs u_q, u_d;
/// states and outputs i_q, i_d. Eigenvalues -(r/x) w0 +- j w0. A purely
/// resistive branch (x = 0) has no states and D = I / r.
StateSpaceModel build_rl_branch_ss(double r_pu, double x_pu, double omega0 = kBaseAngularFrequency,
                                   double omega_base = kBaseAngularFrequency);

/// Series RL between two terminals. Inputs [u_q_from, u_d_from, u_q_to, u_d_to];
/// outputs are the currents drawn from each terminal, in the same order.
StateSpaceModel build_series_branch_ss(double r_pu, double x_pu, double omega0 = kBaseAngularFrequency);

/// A pi-section line: the series part as a two-port model plus the shunt
/// susceptance placed at each end. The shunts become bus capacitance when the
/// line is assembled into a network.
struct LineModel {
    StateSpaceModel series;
    double shunt_from_pu = 0.0;
    double shunt_to_pu = 0.0;
};

LineModel build_line_ss(const BranchParams& line, double omega0 = kBaseAngularFrequency);

/// Series RL transformer without tap or phase shift.
StateSpaceModel build_transformer_ss(const BranchParams& tr, double omega0 = kBaseAngularFrequency);

/// Constant-impedance load matched to (p, q) at voltage v_mag:
/// z = v^2 / conj(p + jq), realised as series RL. Requires q >= 0.
StateSpaceModel build_load_ss(double p_pu, double q_pu, double v_mag = 1.0,
                              double omega0 = kBaseAngularFrequency);

/// Series resistance and reactance of the constant-impedance load.
std::pair<double, double> load_impedance(double p_pu, double q_pu, double v_mag);

// ---------------------------------------------------------------------------
// Converters
// ---------------------------------------------------------------------------

enum class ConverterMode { gfol, gfor };

const char* to_string(ConverterMode mode);

/// Converter parameters, named as in the case files. Filter and transformer
/// values are per unit on the converter rating. Mode-specific parameters are
/// optional; validate() rejects missing required ones and ones that belong to
/// the other mode.
struct ConverterParams {
    ConverterMode mode = ConverterMode::gfor;
    double s_rated_mva = 100.0;
    double x_vsc = 0.15;
    double r_vsc = 0.005;
    double c_vsc = 0.15;
    double r_tr = 0.002;
    double x_tr = 0.1;
    double tau_cc = 0.001;
    double m_p = 0.0;
    double m_q = 0.0;
    std::optional<double> tau_pll;
    std::optional<double> tau_vc;
    std::optional<double> tau_pq;
    std::optional<double> omega_p;
    std::optional<double> omega_q;
    std::optional<double> omega_f;
    std::optional<double> omega_u;

    void validate() const;

    /// Table-of-parameters defaults for each mode.
    static ConverterParams table_gfor();
    static ConverterParams table_gfol();
};

/// Steady state at the converter's point of connection, system per unit.
struct BusOperatingPoint {
    double v_mag = 1.0;
    double v_angle = 0.0;  ///< rad
    double p_inj = 0.0;    ///< active power injected into the bus
    double q_inj = 0.0;
    double base_mva = 100.0;
};

/// Linearized converter together with its equilibrium.
struct ConverterLinearization {
    StateSpaceModel model;
    std::vector<double> x0;
    double equilibrium_residual = 0.0;  ///< max |f(x0, u0)|
    std::size_t angle_state = 0;        ///< PLL angle (gfol) or droop angle (gfor)
};

/// Grid-following converter: SRF-PLL, f-P and u-Q droops with low-pass
/// filtered measurements, PQ PI loops producing current references, current
/// PI loops, LC filter and transformer. Input u_q_poc, u_d_poc; output
/// i_q_tr, i_d_tr (drawn from the POC, system base). 14 states.
StateSpaceModel build_gfol_ss(const ConverterParams& p, const BusOperatingPoint& op,
                              double omega0 = kBaseAngularFrequency);

/// Grid-forming converter: filtered P-f droop giving the angle, filtered Q-u
/// droop giving the voltage reference, cascaded voltage and current PI loops,
/// LC filter and transformer. Same ports as build_gfol_ss. 13 states.
StateSpaceModel build_gfor_ss(const ConverterParams& p, const BusOperatingPoint& op,
                              double omega0 = kBaseAngularFrequency);

/// Either mode, with the equilibrium and the angle-state index.
ConverterLinearization linearize_converter(const ConverterParams& p, const BusOperatingPoint& op,
                                           double omega0 = kBaseAngularFrequency);

/// Evaluates the converter's nonlinear right-hand side (converter base) at a
/// state and POC voltage; used to verify equilibria.
std::vector<double> converter_rhs(const ConverterParams& p, const BusOperatingPoint& op, double omega0,
                                  const std::vector<double>& x, const Eigen::Vector2d& u_poc);

}  // namespace dsi
