#include <array>
#include <cmath>
#include <complex>
#include <sstream>

#include "dsi/component_models.hpp"

namespace dsi {

const char* to_string(ConverterMode mode) { return mode == ConverterMode::gfol ? "gfol" : "gfor"; }

void ConverterParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be > 0");
    };
    auto nonneg = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be >= 0");
    };
    positive(s_rated_mva, "s_base");
    positive(x_vsc, "x_vsc");
    positive(r_vsc, "r_vsc");
    positive(c_vsc, "c_vsc");
    nonneg(r_tr, "r_tr");
    positive(x_tr, "x_tr");
    positive(tau_cc, "tau_cc");
    nonneg(m_p, "m_p");
    nonneg(m_q, "m_q");

    const std::array<std::pair<const char*, const std::optional<double>*>, 3> gfor_only{
        {{"tau_vc", &tau_vc}, {"omega_p", &omega_p}, {"omega_q", &omega_q}}};
    const std::array<std::pair<const char*, const std::optional<double>*>, 4> gfol_only{
        {{"tau_pll", &tau_pll}, {"tau_pq", &tau_pq}, {"omega_f", &omega_f}, {"omega_u", &omega_u}}};
    const bool is_gfor = mode == ConverterMode::gfor;
    for (const auto& [name, value] : gfor_only) {
        if (is_gfor && !value->has_value()) throw ValidationError(std::string("gfor converter requires ") + name);
        if (!is_gfor && value->has_value()) throw ValidationError(std::string(name) + " is not a gfol parameter");
        if (value->has_value()) positive(**value, name);
    }
    for (const auto& [name, value] : gfol_only) {
        if (!is_gfor && !value->has_value()) throw ValidationError(std::string("gfol converter requires ") + name);
        if (is_gfor && value->has_value()) throw ValidationError(std::string(name) + " is not a gfor parameter");
        if (value->has_value()) positive(**value, name);
    }
}

ConverterParams ConverterParams::table_gfor() {
    ConverterParams p;
    p.mode = ConverterMode::gfor;
    p.c_vsc = 0.15;
    p.tau_vc = 0.01;
    p.m_p = 0.05;
    p.m_q = 0.02;
    p.omega_p = 50.0;
    p.omega_q = 10.0;
    return p;
}

ConverterParams ConverterParams::table_gfol() {
    ConverterParams p;
    p.mode = ConverterMode::gfol;
    p.c_vsc = 0.04;
    p.tau_pll = 0.1;
    p.tau_pq = 0.2;
    p.m_p = 20.0;
    p.m_q = 50.0;
    p.omega_f = 50.0;
    p.omega_u = 50.0;
    return p;
}

namespace {

// Controller gains derived from the closed-loop time constants.
//  current loop: internal-model PI, closed loop 1/(tau_cc s + 1)
//  PLL:          PI on -v_d, poles at -1/tau_pll with damping 1/sqrt(2)
//  PQ loops:     PI cancelling the current-loop pole, closed loop 1/(tau_pq s + 1)
//  voltage loop: kp = c/(w0 tau_vc), ki = kp/(2 tau_vc), damping 1/sqrt(2)
struct Gains {
    double kp_cc = 0.0, ki_cc = 0.0;
    double kp_pll = 0.0, ki_pll = 0.0;
    double kp_pq = 0.0, ki_pq = 0.0;
    double kp_vc = 0.0, ki_vc = 0.0;
};

// Setpoints frozen at the operating point.
struct Setpoints {
    double p = 0.0, q = 0.0, v = 1.0;
};

template <typename T>
struct Qd {
    T q{}, d{};
};

template <typename T>
Qd<T> rotate(const Qd<T>& x, const T& theta) {
    using std::cos;
    using std::sin;
    const T c = cos(theta), s = sin(theta);
    return {x.q * c + x.d * s, -x.q * s + x.d * c};
}

template <typename T>
Qd<T> jmul(const Qd<T>& x) {
    return {x.d, -x.q};
}

class ConverterDynamics {
public:
    static constexpr std::size_t kGfolStates = 14;
    static constexpr std::size_t kGforStates = 13;

    ConverterDynamics(const ConverterParams& p, double omega0) : p_(p), w0_(omega0) {}

    std::size_t num_states() const { return gfol() ? kGfolStates : kGforStates; }
    bool gfol() const { return p_.mode == ConverterMode::gfol; }
    std::size_t angle_state() const { return gfol() ? 7 : 6; }

    static Labels labels(ConverterMode mode) {
        Labels common{"is_q", "is_d", "vc_q", "vc_d", "ig_q", "ig_d"};
        Labels extra = mode == ConverterMode::gfol
                           ? Labels{"pll_int", "pll_angle", "cc_int_q", "cc_int_d", "pq_int_p",
                                    "pq_int_q", "droop_f", "droop_u"}
                           : Labels{"droop_angle", "p_filt", "q_filt", "vc_int_q", "vc_int_d", "cc_int_q",
                                    "cc_int_d"};
        common.insert(common.end(), extra.begin(), extra.end());
        return common;
    }

    /// Equilibrium for a POC phasor and converter-base complex power injection.
    std::vector<double> equilibrium(Complex v_poc, Complex s_conv) {
        const Complex j(0.0, 1.0);
        const Complex ig = std::conj(s_conv / v_poc);
        const Complex vc = v_poc + Complex(p_.r_tr, p_.x_tr) * ig;
        const Complex is = ig + j * p_.c_vsc * vc;
        const double delta = std::arg(vc);
        const Complex rot = std::exp(-j * delta);
        const Complex is_l = is * rot;
        const double vmag = std::abs(vc);
        const Complex s_cap = vc * std::conj(ig);

        set_.p = s_cap.real();
        set_.q = s_cap.imag();
        set_.v = vmag;
        tune(vmag);

        // r_vsc * is_l is what the current integrators must supply.
        const Eigen::Vector2d cc_int = phasor_to_qd(p_.r_vsc * is_l) / g_.ki_cc;

        std::vector<double> x(num_states(), 0.0);
        const auto put = [&x](std::size_t k, Complex v) {
            x[k] = v.real();
            x[k + 1] = -v.imag();
        };
        put(0, is);
        put(2, vc);
        put(4, ig);
        if (gfol()) {
            const Eigen::Vector2d isl = phasor_to_qd(is_l);
            x[6] = 0.0;
            x[7] = delta;
            x[8] = cc_int(0);
            x[9] = cc_int(1);
            x[10] = isl(0) / g_.ki_pq;
            x[11] = isl(1) / g_.ki_pq;
            x[12] = 0.0;
            x[13] = vmag;
        } else {
            x[6] = delta;
            x[7] = set_.p;
            x[8] = set_.q;
            x[9] = 0.0;
            x[10] = 0.0;
            x[11] = cc_int(0);
            x[12] = cc_int(1);
        }
        return x;
    }

    template <typename T>
    void rhs(const T* x, const T* u, T* dx) const {
        const Qd<T> is{x[0], x[1]}, vc{x[2], x[3]}, ig{x[4], x[5]};
        const Qd<T> vpoc{u[0], u[1]};
        const T delta = gfol() ? x[7] : x[6];

        const Qd<T> vc_l = rotate(vc, T(-delta));
        const Qd<T> is_l = rotate(is, T(-delta));
        const T p_meas = vc.q * ig.q + vc.d * ig.d;
        const T q_meas = vc.q * ig.d - vc.d * ig.q;

        Qd<T> is_ref;
        if (gfol()) {
            using std::sqrt;
            const T e_pll = -vc_l.d;
            const T dw = g_.kp_pll * e_pll + g_.ki_pll * x[6];
            const T vmag = sqrt(vc.q * vc.q + vc.d * vc.d);
            const T p_ref = set_.p - p_.m_p * x[12];
            const T q_ref = set_.q - p_.m_q * (x[13] - set_.v);
            const T e_p = p_ref - p_meas;
            const T e_q = q_ref - q_meas;
            is_ref = {g_.kp_pq * e_p + g_.ki_pq * x[10], g_.kp_pq * e_q + g_.ki_pq * x[11]};
            dx[6] = e_pll;
            dx[7] = dw;
            dx[10] = e_p;
            dx[11] = e_q;
            dx[12] = *p_.omega_f * (dw / w0_ - x[12]);
            dx[13] = *p_.omega_u * (vmag - x[13]);
        } else {
            const T v_ref = set_.v - p_.m_q * (x[8] - set_.q);
            const Qd<T> e_v{v_ref - vc_l.q, -vc_l.d};
            const Qd<T> pi{g_.kp_vc * e_v.q + g_.ki_vc * x[9], g_.kp_vc * e_v.d + g_.ki_vc * x[10]};
            // Feedforwards: grid current plus tau_cc times its predicted derivative,
            // and the capacitor current that keeps vc rotating with the droop angle.
            // Without the lead term the current-loop lag on ig acts like a large
            // gyrating capacitance across the filter; without the rotation term vc
            // trails delta by tau_vc and the P-f loop loses its phase margin.
            const double kt = w0_ / p_.x_tr, kc = w0_ / p_.c_vsc;
            const Qd<T> jig = jmul(ig), jvc = jmul(vc);
            const Qd<T> dig{kt * (vc.q - vpoc.q - p_.r_tr * ig.q - p_.x_tr * jig.q),
                            kt * (vc.d - vpoc.d - p_.r_tr * ig.d - p_.x_tr * jig.d)};
            const Qd<T> jdvc = jmul(Qd<T>{kc * (is.q - ig.q - p_.c_vsc * jvc.q), kc * (is.d - ig.d - p_.c_vsc * jvc.d)});
            const Qd<T> ff = rotate(Qd<T>{ig.q + p_.tau_cc * (dig.q + p_.c_vsc * jdvc.q),
                                          ig.d + p_.tau_cc * (dig.d + p_.c_vsc * jdvc.d)},
                                    T(-delta));
            const T w_rel = T(1) + p_.m_p * (set_.p - x[7]);  // frame speed / w0
            const Qd<T> jvc_l = jmul(vc_l);
            is_ref = {ff.q + pi.q + p_.c_vsc * w_rel * jvc_l.q, ff.d + pi.d + p_.c_vsc * w_rel * jvc_l.d};
            dx[6] = w0_ * p_.m_p * (set_.p - x[7]);
            dx[7] = *p_.omega_p * (p_meas - x[7]);
            dx[8] = *p_.omega_q * (q_meas - x[8]);
            dx[9] = e_v.q;
            dx[10] = e_v.d;
        }

        // Current loop in the controller frame, with decoupling and voltage feedforward.
        const std::size_t cc = gfol() ? 8 : 11;
        const Qd<T> e_i{is_ref.q - is_l.q, is_ref.d - is_l.d};
        const Qd<T> jis = jmul(is_l);
        const Qd<T> vconv_l{vc_l.q + g_.kp_cc * e_i.q + g_.ki_cc * x[cc] + p_.x_vsc * jis.q,
                            vc_l.d + g_.kp_cc * e_i.d + g_.ki_cc * x[cc + 1] + p_.x_vsc * jis.d};
        dx[cc] = e_i.q;
        dx[cc + 1] = e_i.d;
        const Qd<T> vconv = rotate(vconv_l, delta);

        // LC filter and transformer in the common frame rotating at omega0.
        const Qd<T> jis_g = jmul(is), jvc_g = jmul(vc), jig_g = jmul(ig);
        const double ks = w0_ / p_.x_vsc, kc = w0_ / p_.c_vsc, kt = w0_ / p_.x_tr;
        dx[0] = ks * (vconv.q - vc.q - p_.r_vsc * is.q - p_.x_vsc * jis_g.q);
        dx[1] = ks * (vconv.d - vc.d - p_.r_vsc * is.d - p_.x_vsc * jis_g.d);
        dx[2] = kc * (is.q - ig.q - p_.c_vsc * jvc_g.q);
        dx[3] = kc * (is.d - ig.d - p_.c_vsc * jvc_g.d);
        dx[4] = kt * (vc.q - vpoc.q - p_.r_tr * ig.q - p_.x_tr * jig_g.q);
        dx[5] = kt * (vc.d - vpoc.d - p_.r_tr * ig.d - p_.x_tr * jig_g.d);
    }

private:
    void tune(double vmag) {
        g_.kp_cc = p_.x_vsc / (w0_ * p_.tau_cc);
        g_.ki_cc = p_.r_vsc / p_.tau_cc;
        if (gfol()) {
            const double tau = *p_.tau_pll;
            g_.kp_pll = 2.0 / (tau * vmag);
            g_.ki_pll = 2.0 / (tau * tau * vmag);
            g_.ki_pq = 1.0 / (*p_.tau_pq * vmag);
            g_.kp_pq = p_.tau_cc * g_.ki_pq;
        } else {
            g_.kp_vc = p_.c_vsc / (w0_ * *p_.tau_vc);
            g_.ki_vc = g_.kp_vc / (2.0 * *p_.tau_vc);
        }
    }

    ConverterParams p_;
    double w0_;
    Gains g_;
    Setpoints set_;
};

struct Prepared {
    ConverterDynamics dyn;
    std::vector<double> x0;
    Eigen::Vector2d u0;
    double scale = 1.0;  // converter-base current -> system-base current
};

Prepared prepare(const ConverterParams& p, const BusOperatingPoint& op, double omega0) {
    p.validate();
    if (!(op.v_mag > 0.0) || !std::isfinite(op.v_mag)) throw ValidationError("infeasible operating point: |V| <= 0");
    if (!(op.base_mva > 0.0)) throw ValidationError("system base must be > 0");
    if (!(omega0 > 0.0)) throw ValidationError("omega0 must be > 0");
    Prepared prep{ConverterDynamics(p, omega0), {}, {}, p.s_rated_mva / op.base_mva};
    const Complex v_poc = std::polar(op.v_mag, op.v_angle);
    const Complex s_conv = Complex(op.p_inj, op.q_inj) / prep.scale;
    prep.x0 = prep.dyn.equilibrium(v_poc, s_conv);
    prep.u0 = phasor_to_qd(v_poc);
    return prep;
}

}  // namespace

std::vector<double> converter_rhs(const ConverterParams& p, const BusOperatingPoint& op, double omega0,
                                  const std::vector<double>& x, const Eigen::Vector2d& u_poc) {
    auto prep = prepare(p, op, omega0);
    if (x.size() != prep.dyn.num_states()) throw ValidationError("converter state vector has the wrong size");
    std::vector<double> dx(x.size());
    const double u[2] = {u_poc(0), u_poc(1)};
    prep.dyn.rhs(x.data(), u, dx.data());
    return dx;
}

ConverterLinearization linearize_converter(const ConverterParams& p, const BusOperatingPoint& op, double omega0) {
    auto prep = prepare(p, op, omega0);
    const auto& dyn = prep.dyn;
    const std::size_t n = dyn.num_states();

    std::vector<double> f0(n);
    const double u0[2] = {prep.u0(0), prep.u0(1)};
    dyn.rhs(prep.x0.data(), u0, f0.data());
    double residual = 0.0;
    for (double v : f0) residual = std::max(residual, std::abs(v));
    if (residual > 1e-8) {
        std::ostringstream os;
        os << "converter equilibrium residual " << residual << " exceeds 1e-8";
        throw NumericalError(os.str());
    }

    // Complex-step differentiation: exact Jacobians of the analytic right-hand side.
    using C = std::complex<double>;
    constexpr double h = 1e-30;
    std::vector<C> xc(prep.x0.begin(), prep.x0.end());
    std::array<C, 2> uc{C(u0[0]), C(u0[1])};
    std::vector<C> fc(n);
    RealMatrix a(n, n), b(n, 2);
    for (std::size_t k = 0; k < n; ++k) {
        xc[k] += C(0.0, h);
        dyn.rhs(xc.data(), uc.data(), fc.data());
        for (std::size_t i = 0; i < n; ++i) a(i, k) = fc[i].imag() / h;
        xc[k] = C(prep.x0[k]);
    }
    for (std::size_t k = 0; k < 2; ++k) {
        uc[k] += C(0.0, h);
        dyn.rhs(xc.data(), uc.data(), fc.data());
        for (std::size_t i = 0; i < n; ++i) b(i, k) = fc[i].imag() / h;
        uc[k] = C(u0[k]);
    }

    // Output: transformer current drawn from the POC, on the system base.
    RealMatrix c = RealMatrix::Zero(2, n);
    c(0, 4) = -prep.scale;
    c(1, 5) = -prep.scale;

    ConverterLinearization lin{
        StateSpaceModel(std::move(a), std::move(b), std::move(c), RealMatrix::Zero(2, 2),
                        ConverterDynamics::labels(p.mode), {"u_q_poc", "u_d_poc"}, {"i_q_tr", "i_d_tr"}),
        prep.x0, residual, dyn.angle_state()};
    return lin;
}

StateSpaceModel build_gfol_ss(const ConverterParams& p, const BusOperatingPoint& op, double omega0) {
    if (p.mode != ConverterMode::gfol) throw ValidationError("build_gfol_ss needs mode gfol");
    return linearize_converter(p, op, omega0).model;
}

StateSpaceModel build_gfor_ss(const ConverterParams& p, const BusOperatingPoint& op, double omega0) {
    if (p.mode != ConverterMode::gfor) throw ValidationError("build_gfor_ss needs mode gfor");
    return linearize_converter(p, op, omega0).model;
}

}  // namespace dsi
