#pragma once

#include <string>
#include <vector>

#include "dsi/freqresp.hpp"
#include "dsi/network.hpp"

namespace dsi {

struct StepInput {
    std::string label;  ///< input label of the model
    double magnitude = 0.0;
};

/// Steps applied at t = 0 to a model resting at its operating point.
struct StepExperiment {
    std::vector<StepInput> steps;
    double duration = 0.5;  ///< s
    double dt = 50e-6;      ///< s
    Labels outputs;         ///< empty: every output

    /// dt > 0, duration >= 10 dt, finite magnitudes, at least one step.
    void validate() const;
};

/// Sampled outputs: values(k, j) is output j at time t[k].
struct TimeSeries {
    std::vector<double> t;
    Labels labels;
    RealMatrix values;
    std::vector<std::string> warnings;

    std::size_t column(const std::string& label) const;
    Eigen::VectorXd series(const std::string& label) const;
};

/// Deviation response to the experiment's steps, from zero initial deviation,
/// integrated with the trapezoidal rule at fixed dt. The model must pass the
/// stability check; dt > 0.1 / |lambda_max| is reported in `warnings`.
TimeSeries step_response(const StateSpaceModel& ss, const StepExperiment& exp, std::size_t symmetry_modes = 0,
                         const ConditionTolerances& tol = {});

struct ErrorSummary {
    std::vector<double> t;
    Labels labels;
    RealMatrix error;               ///< sys - ref per sample and label
    std::vector<double> linf;       ///< max |e| per label
    std::vector<double> l2;         ///< sqrt(integral e^2 dt) per label
};

/// Pointwise difference of two trajectories on the same time base.
ErrorSummary error_vs_reference(const TimeSeries& sys, const TimeSeries& ref);

/// Deviation of |v| from the deviation of its qd components, linearized
/// around the operating voltage v0 (qd): d|v| = (v0 . dv) / |v0|.
TimeSeries magnitude_deviation(const TimeSeries& ts, const std::string& q_label, const std::string& d_label,
                               const Eigen::Vector2d& v0, const std::string& name);

/// Amplitude spectrum of a uniformly sampled signal (mean removed, Hann
/// window) evaluated at the given frequencies.
std::vector<double> amplitude_spectrum(const Eigen::VectorXd& x, double dt, const std::vector<double>& freqs_hz);

/// Frequency in [f_lo, f_hi] Hz with the largest amplitude, searched at
/// `resolution_hz` spacing.
double dominant_frequency(const Eigen::VectorXd& x, double dt, double f_lo_hz, double f_hi_hz,
                          double resolution_hz = 0.05);

// ---------------------------------------------------------------------------
// Component experiments
// ---------------------------------------------------------------------------

struct ComponentStepResult {
    TimeSeries component;  ///< outputs relabelled i_q, i_d
    TimeSeries reference;
    ErrorSummary error;
    std::vector<double> error_magnitude;  ///< |e_q + j e_d| per sample
    double linf = 0.0;                    ///< max of error_magnitude
};

/// Steps the POC voltage of a two-port admittance model (inputs: q then d
/// voltage; outputs: q then d current) and of the reference's RL admittance
/// by `dv` (qd) and compares the current responses.
ComponentStepResult component_step(const StateSpaceModel& y_sus, const VsbiReference& ref, const Eigen::Vector2d& dv,
                                   const StepExperiment& timing);

// ---------------------------------------------------------------------------
// Network experiments
// ---------------------------------------------------------------------------

/// Current injection that mimics a relative increase of a constant-impedance
/// load: -fraction times the load current at the operating point. Exact while
/// the bus voltage stays at its operating value.
std::vector<StepInput> load_step_injection(const NetworkCase& net, const OperatingPoint& op, const std::string& bus_id,
                                           double fraction);

struct BusErrorTrace {
    std::string generator_id;
    std::string bus_id;
    TimeSeries system;     ///< d|v| at the bus with every converter in place
    TimeSeries reference;  ///< d|v| with this generator replaced by the reference source
    ErrorSummary error;
};

/// For every converter: replace it (alone) by a source behind the reference
/// impedance, rerun the experiment and compare the magnitude of its bus
/// voltage against the unmodified system. `reference_scr` is on the system
/// base; each replacement is rescaled to the generator's rating.
std::vector<BusErrorTrace> one_at_a_time_errors(const NetworkCase& net, const StepExperiment& exp_template,
                                                const std::string& step_bus, double step_fraction,
                                                double reference_scr, double reference_x_over_r,
                                                const AssemblyOptions& options = {});

}  // namespace dsi
