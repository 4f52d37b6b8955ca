#include "dsi/timedomain.hpp"

#include <cmath>
#include <sstream>

namespace dsi {

void StepExperiment::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("step experiment: dt must be > 0");
    if (!std::isfinite(duration) || duration < 10.0 * dt)
        throw ValidationError("step experiment: duration must be at least 10 dt");
    if (steps.empty()) throw ValidationError("step experiment: no input to step");
    for (const auto& s : steps)
        if (!std::isfinite(s.magnitude)) throw ValidationError("step experiment: magnitude of '" + s.label + "' is not finite");
}

std::size_t TimeSeries::column(const std::string& label) const {
    for (std::size_t j = 0; j < labels.size(); ++j)
        if (labels[j] == label) return j;
    throw ValidationError("time series has no output '" + label + "'");
}

Eigen::VectorXd TimeSeries::series(const std::string& label) const {
    return values.col(static_cast<Eigen::Index>(column(label)));
}

namespace {

Eigen::Index find_label(const Labels& labels, const std::string& label, const char* what) {
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<Eigen::Index>(i);
    std::string known;
    for (const auto& l : labels) known += (known.empty() ? "" : ", ") + l;
    throw ValidationError(std::string("unknown ") + what + " '" + label + "' (known: " + known + ")");
}

}  // namespace

TimeSeries step_response(const StateSpaceModel& ss, const StepExperiment& exp, std::size_t symmetry_modes,
                         const ConditionTolerances& tol) {
    exp.validate();
    TimeSeries out;

    const auto report = check_conditions(ss, tol, symmetry_modes);
    if (report.unstable_flag) throw NumericalError("step response of an unstable model: " + report.summary());
    double fastest = 0.0;
    for (std::size_t i = 0; i < report.eigenvalues.size(); ++i) fastest = std::max(fastest, std::abs(report.eigenvalues[i]));
    if (fastest > 0.0 && exp.dt > 0.1 / fastest) {
        std::ostringstream os;
        os << "dt = " << exp.dt << " s exceeds 0.1/|lambda_max| = " << 0.1 / fastest
           << " s; the fastest modes are not resolved";
        out.warnings.push_back(os.str());
    }

    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ss.num_inputs()));
    for (const auto& s : exp.steps) u(find_label(ss.input_labels(), s.label, "input")) += s.magnitude;

    std::vector<Eigen::Index> rows;
    if (exp.outputs.empty()) {
        out.labels = ss.output_labels();
        for (std::size_t j = 0; j < ss.num_outputs(); ++j) rows.push_back(static_cast<Eigen::Index>(j));
    } else {
        out.labels = exp.outputs;
        for (const auto& l : exp.outputs) rows.push_back(find_label(ss.output_labels(), l, "output"));
    }
    RealMatrix c(static_cast<Eigen::Index>(rows.size()), ss.C().cols());
    Eigen::VectorXd du(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        c.row(static_cast<Eigen::Index>(j)) = ss.C().row(rows[j]);
        du(static_cast<Eigen::Index>(j)) = ss.D().row(rows[j]).dot(u);
    }

    const auto steps = static_cast<Eigen::Index>(std::llround(exp.duration / exp.dt));
    const auto n = ss.A().rows();
    out.t.resize(static_cast<std::size_t>(steps + 1));
    out.values.resize(steps + 1, static_cast<Eigen::Index>(rows.size()));

    // (I - h/2 A) x+ = (I + h/2 A) x + h B u, with u held over the step.
    const double h = exp.dt;
    const RealMatrix eye = RealMatrix::Identity(n, n);
    const Eigen::PartialPivLU<RealMatrix> lhs(eye - 0.5 * h * ss.A());
    const RealMatrix rhs = eye + 0.5 * h * ss.A();
    const Eigen::VectorXd bu = h * (ss.B() * u);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        out.t[static_cast<std::size_t>(k)] = static_cast<double>(k) * h;
        out.values.row(k) = (c * x + du).transpose();
        if (k < steps) x = lhs.solve(rhs * x + bu);
    }
    return out;
}

ErrorSummary error_vs_reference(const TimeSeries& sys, const TimeSeries& ref) {
    if (sys.t.size() != ref.t.size()) throw ValidationError("trajectories have different lengths");
    for (std::size_t k = 0; k < sys.t.size(); ++k)
        if (std::abs(sys.t[k] - ref.t[k]) > 1e-12 * std::max(1.0, std::abs(sys.t[k])))
            throw ValidationError("trajectories are sampled on different time bases");
    if (sys.labels.size() != ref.labels.size()) throw ValidationError("trajectories have different outputs");

    ErrorSummary out;
    out.t = sys.t;
    out.labels = sys.labels;
    out.error.resize(sys.values.rows(), sys.values.cols());
    for (std::size_t j = 0; j < sys.labels.size(); ++j) {
        const auto jc = static_cast<Eigen::Index>(ref.column(sys.labels[j]));
        out.error.col(static_cast<Eigen::Index>(j)) = sys.values.col(static_cast<Eigen::Index>(j)) - ref.values.col(jc);
    }
    for (Eigen::Index j = 0; j < out.error.cols(); ++j) {
        const auto e = out.error.col(j);
        out.linf.push_back(e.size() ? e.cwiseAbs().maxCoeff() : 0.0);
        // trapezoidal quadrature of e^2
        double acc = 0.0;
        for (Eigen::Index k = 1; k < e.size(); ++k)
            acc += 0.5 * (e(k) * e(k) + e(k - 1) * e(k - 1)) * (out.t[k] - out.t[k - 1]);
        out.l2.push_back(std::sqrt(acc));
    }
    return out;
}

TimeSeries magnitude_deviation(const TimeSeries& ts, const std::string& q_label, const std::string& d_label,
                               const Eigen::Vector2d& v0, const std::string& name) {
    const double mag = v0.norm();
    if (!(mag > 0.0)) throw ValidationError("magnitude deviation around a zero voltage");
    TimeSeries out;
    out.t = ts.t;
    out.labels = {name};
    out.warnings = ts.warnings;
    out.values = (v0(0) * ts.series(q_label) + v0(1) * ts.series(d_label)) / mag;
    return out;
}

std::vector<double> amplitude_spectrum(const Eigen::VectorXd& x, double dt, const std::vector<double>& freqs_hz) {
    const auto n = x.size();
    if (n < 2) throw ValidationError("spectrum needs at least two samples");
    Eigen::VectorXd w(n);
    for (Eigen::Index k = 0; k < n; ++k) w(k) = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(k) / static_cast<double>(n - 1));
    const Eigen::VectorXd y = ((x.array() - x.mean()) * w.array()).matrix();
    const double norm = 2.0 / w.sum();
    std::vector<double> out;
    out.reserve(freqs_hz.size());
    for (double f : freqs_hz) {
        const Complex step = std::polar(1.0, -2.0 * kPi * f * dt);
        Complex phase(1.0, 0.0), acc(0.0, 0.0);
        for (Eigen::Index k = 0; k < n; ++k) {
            acc += y(k) * phase;
            phase *= step;
        }
        out.push_back(norm * std::abs(acc));
    }
    return out;
}

double dominant_frequency(const Eigen::VectorXd& x, double dt, double f_lo_hz, double f_hi_hz, double resolution_hz) {
    if (!(f_hi_hz > f_lo_hz) || !(resolution_hz > 0.0)) throw ValidationError("bad frequency band");
    std::vector<double> freqs;
    for (double f = f_lo_hz; f <= f_hi_hz + 1e-12; f += resolution_hz) freqs.push_back(f);
    const auto amp = amplitude_spectrum(x, dt, freqs);
    std::size_t best = 0;
    for (std::size_t i = 1; i < amp.size(); ++i)
        if (amp[i] > amp[best]) best = i;
    return freqs[best];
}

ComponentStepResult component_step(const StateSpaceModel& y_sus, const VsbiReference& ref, const Eigen::Vector2d& dv,
                                   const StepExperiment& timing) {
    if (y_sus.num_inputs() != 2 || y_sus.num_outputs() != 2)
        throw ValidationError("component step needs a two-port admittance model");
    const auto y_ref = build_rl_branch_ss(ref.r_pu, ref.x_pu, ref.omega0, ref.omega_base);

    const auto run = [&](const StateSpaceModel& m) {
        StepExperiment e = timing;
        e.steps = {{m.input_labels()[0], dv(0)}, {m.input_labels()[1], dv(1)}};
        e.outputs.clear();
        auto ts = step_response(m, e);
        ts.labels = {"i_q", "i_d"};
        return ts;
    };
    ComponentStepResult out;
    out.component = run(y_sus);
    out.reference = run(y_ref);
    out.error = error_vs_reference(out.component, out.reference);
    out.error_magnitude.resize(out.error.t.size());
    for (Eigen::Index k = 0; k < out.error.error.rows(); ++k) {
        out.error_magnitude[static_cast<std::size_t>(k)] = out.error.error.row(k).norm();
        out.linf = std::max(out.linf, out.error_magnitude[static_cast<std::size_t>(k)]);
    }
    return out;
}

std::vector<StepInput> load_step_injection(const NetworkCase& net, const OperatingPoint& op, const std::string& bus_id,
                                           double fraction) {
    const Eigen::Vector2d i = load_current(net, op, bus_id);
    return {{"i_q_f_" + bus_id, -fraction * i(0)}, {"i_d_f_" + bus_id, -fraction * i(1)}};
}

std::vector<BusErrorTrace> one_at_a_time_errors(const NetworkCase& net, const StepExperiment& exp_template,
                                                const std::string& step_bus, double step_fraction,
                                                double reference_scr, double reference_x_over_r,
                                                const AssemblyOptions& options) {
    const auto op = solve_power_flow(net);
    const auto sys = assemble_system(net, op, options);
    StepExperiment exp = exp_template;
    exp.steps = load_step_injection(net, op, step_bus, step_fraction);
    exp.outputs.clear();
    const auto base_run = step_response(sys.model, exp, sys.symmetry_modes);

    std::vector<BusErrorTrace> out;
    for (const auto& g : net.generators) {
        if (g.kind == GeneratorKind::vsbi) continue;
        const auto b = net.bus_index(g.bus);
        const Eigen::Vector2d v0 = phasor_to_qd(op.voltage(b));
        const std::string name = "dv_" + g.bus;

        const VsbiSource src{reference_scr * net.base_mva / g.rating_mva, reference_x_over_r};
        const auto ref_net = replace_with_vsbi(net, g.id, src);
        const auto ref_op = solve_power_flow(ref_net);
        const auto ref_sys = assemble_system(ref_net, ref_op, options);
        const auto ref_run = step_response(ref_sys.model, exp, ref_sys.symmetry_modes);

        BusErrorTrace tr;
        tr.generator_id = g.id;
        tr.bus_id = g.bus;
        tr.system = magnitude_deviation(base_run, "u_q_" + g.bus, "u_d_" + g.bus, v0, name);
        tr.reference = magnitude_deviation(ref_run, "u_q_" + g.bus, "u_d_" + g.bus,
                                           phasor_to_qd(ref_op.voltage(b)), name);
        tr.error = error_vs_reference(tr.system, tr.reference);
        out.push_back(std::move(tr));
    }
    return out;
}

}  // namespace dsi
