#include "dsi/component_models.hpp"

#include <cmath>
#include <sstream>

namespace dsi {

// ---------------------------------------------------------------------------
// Reference model
// ---------------------------------------------------------------------------

VsbiReference VsbiReference::make(double scr, double x_over_r, double omega0, double omega_base) {
    if (!(scr > 0.0) || !std::isfinite(scr)) throw ValidationError("reference SCR must be > 0");
    if (!(x_over_r >= 0.0) || !std::isfinite(x_over_r)) throw ValidationError("reference X/R must be >= 0");
    if (!(omega0 > 0.0) || !(omega_base > 0.0)) throw ValidationError("reference frequencies must be > 0");
    VsbiReference ref;
    ref.scr = scr;
    ref.x_over_r = x_over_r;
    ref.omega0 = omega0;
    ref.omega_base = omega_base;
    const double z = 1.0 / scr;
    ref.r_pu = z / std::sqrt(1.0 + x_over_r * x_over_r);
    ref.x_pu = ref.r_pu * x_over_r;
    ref.l_pu = ref.x_pu * omega_base / omega0;
    ref.xi = damping_from_xr(ref.x_pu, ref.r_pu);
    return ref;
}

VsbiReference VsbiReference::rebased(double from_mva, double to_mva) const {
    if (!(from_mva > 0.0) || !(to_mva > 0.0)) throw ValidationError("power bases must be > 0");
    return make(scr * from_mva / to_mva, x_over_r, omega0, omega_base);
}

namespace {

// Isotropic qd impedance [[a, b], [-b, a]] at jw.
void vsbi_entries(const VsbiReference& ref, double omega, Complex& a, Complex& b) {
    a = Complex(ref.r_pu, omega * ref.l_pu / ref.omega_base);
    b = Complex(ref.omega0 * ref.l_pu / ref.omega_base, 0.0);
}

TransferMatrixSamples make_samples(const FrequencyGrid& grid, Labels in, Labels out) {
    TransferMatrixSamples s;
    s.grid = grid;
    s.values.resize(grid.size());
    s.input_labels = std::move(in);
    s.output_labels = std::move(out);
    return s;
}

}  // namespace

TransferMatrixSamples vsbi_admittance(const VsbiReference& ref, const FrequencyGrid& grid) {
    auto s = make_samples(grid, {"u_q", "u_d"}, {"i_q", "i_d"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Complex a, b;
        vsbi_entries(ref, grid.omega(i), a, b);
        const Complex den = a * a + b * b;
        ComplexMatrix y(2, 2);
        y << a / den, -b / den, b / den, a / den;
        s.values[i] = std::move(y);
    }
    return s;
}

TransferMatrixSamples vsbi_impedance(const VsbiReference& ref, const FrequencyGrid& grid) {
    auto s = make_samples(grid, {"i_q", "i_d"}, {"u_q", "u_d"});
    for (std::size_t i = 0; i < grid.size(); ++i) {
        Complex a, b;
        vsbi_entries(ref, grid.omega(i), a, b);
        ComplexMatrix z(2, 2);
        z << a, b, -b, a;
        s.values[i] = std::move(z);
    }
    return s;
}

double damping_from_xr(double x_pu, double r_pu) {
    if (x_pu == 0.0 && r_pu == 0.0) throw ValidationError("damping undefined for zero impedance");
    return r_pu / std::hypot(x_pu, r_pu);
}

double rl_ratio_from_damping(double xi, double omega) {
    if (!(xi >= 0.0) || !(xi < 1.0)) throw ValidationError("damping ratio must satisfy 0 <= xi < 1");
    return xi * omega / std::sqrt(1.0 - xi * xi);
}

// ---------------------------------------------------------------------------
// Passive elements
// ---------------------------------------------------------------------------

namespace {

void check_branch(double r_pu, double x_pu) {
    if (!std::isfinite(r_pu) || !std::isfinite(x_pu)) throw ValidationError("branch impedance must be finite");
    if (r_pu < 0.0 || x_pu < 0.0) throw ValidationError("branch r and x must be >= 0");
    if (r_pu == 0.0 && x_pu == 0.0) throw ValidationError("degenerate branch: r = x = 0");
}

}  // namespace

StateSpaceModel build_rl_branch_ss(double r_pu, double x_pu, double omega0, double omega_base) {
    check_branch(r_pu, x_pu);
    if (!(omega0 > 0.0) || !(omega_base > 0.0)) throw ValidationError("frequencies must be > 0");
    Labels inputs{"u_q", "u_d"};
    Labels outputs{"i_q", "i_d"};
    if (x_pu == 0.0) {
        return StateSpaceModel::static_gain(Eigen::Matrix2d::Identity() / r_pu, std::move(inputs), std::move(outputs));
    }
    // (l/omega_base) di/dt = u - r i - (omega0/omega_base) l J i
    const double l = x_pu * omega_base / omega0;
    RealMatrix a = -(omega_base * r_pu / l) * Eigen::Matrix2d::Identity() - omega0 * qd_j();
    RealMatrix b = (omega_base / l) * Eigen::Matrix2d::Identity();
    return StateSpaceModel(std::move(a), std::move(b), Eigen::Matrix2d::Identity(), Eigen::Matrix2d::Zero(),
                           {"i_q", "i_d"}, std::move(inputs), std::move(outputs));
}

StateSpaceModel build_series_branch_ss(double r_pu, double x_pu, double omega0) {
    check_branch(r_pu, x_pu);
    Labels inputs{"u_q_from", "u_d_from", "u_q_to", "u_d_to"};
    Labels outputs{"i_q_from", "i_d_from", "i_q_to", "i_d_to"};
    Eigen::Matrix<double, 2, 4> incidence;
    incidence << Eigen::Matrix2d::Identity(), -Eigen::Matrix2d::Identity();
    if (x_pu == 0.0) {
        RealMatrix d = incidence.transpose() * incidence / r_pu;
        return StateSpaceModel::static_gain(std::move(d), std::move(inputs), std::move(outputs));
    }
    RealMatrix a = -(omega0 * r_pu / x_pu) * Eigen::Matrix2d::Identity() - omega0 * qd_j();
    RealMatrix b = (omega0 / x_pu) * incidence;
    RealMatrix c = incidence.transpose();
    return StateSpaceModel(std::move(a), std::move(b), std::move(c), RealMatrix::Zero(4, 4), {"i_q", "i_d"},
                           std::move(inputs), std::move(outputs));
}

LineModel build_line_ss(const BranchParams& line, double omega0) {
    if (!(line.b_pu >= 0.0)) throw ValidationError("line charging must be >= 0");
    return {build_series_branch_ss(line.r_pu, line.x_pu, omega0), 0.5 * line.b_pu, 0.5 * line.b_pu};
}

StateSpaceModel build_transformer_ss(const BranchParams& tr, double omega0) {
    if (tr.b_pu != 0.0) throw ValidationError("transformer model has no magnetizing branch (b must be 0)");
    return build_series_branch_ss(tr.r_pu, tr.x_pu, omega0);
}

std::pair<double, double> load_impedance(double p_pu, double q_pu, double v_mag) {
    if (!(v_mag > 0.0)) throw ValidationError("load voltage must be > 0");
    const double s2 = p_pu * p_pu + q_pu * q_pu;
    if (!(s2 > 0.0)) throw ValidationError("load with zero power has no finite impedance");
    const double v2 = v_mag * v_mag;
    return {v2 * p_pu / s2, v2 * q_pu / s2};
}

StateSpaceModel build_load_ss(double p_pu, double q_pu, double v_mag, double omega0) {
    if (p_pu < 0.0) throw ValidationError("constant-impedance load needs p >= 0");
    if (q_pu < 0.0) throw ValidationError("series RL load needs q >= 0");
    const auto [r, x] = load_impedance(p_pu, q_pu, v_mag);
    return build_rl_branch_ss(r, x, omega0);
}

}  // namespace dsi
