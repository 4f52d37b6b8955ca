#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsi {

using RealMatrix = Eigen::MatrixXd;
using ComplexMatrix = Eigen::MatrixXcd;
using Complex = std::complex<double>;
using Labels = std::vector<std::string>;

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad shapes, labels or parameters supplied by the caller.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure failed (singular solve, non-convergence, unstable model).
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularFrequencyError : public NumericalError {
public:
    SingularFrequencyError(double omega, const std::string& what)
        : NumericalError(what), omega_(omega) {}
    double omega() const noexcept { return omega_; }

private:
    double omega_;
};

// ---------------------------------------------------------------------------
// Linear state-space model
// ---------------------------------------------------------------------------

/// Continuous-time LTI model  dx/dt = A x + B u,  y = C x + D u.
///
/// Immutable once built; the constructor checks dimensions and label lists.
class StateSpaceModel {
public:
    StateSpaceModel() = default;
    StateSpaceModel(RealMatrix a, RealMatrix b, RealMatrix c, RealMatrix d,
                    Labels states, Labels inputs, Labels outputs);

    /// Feedthrough-only model (no states).
    static StateSpaceModel static_gain(RealMatrix d, Labels inputs, Labels outputs);

    const RealMatrix& A() const noexcept { return a_; }
    const RealMatrix& B() const noexcept { return b_; }
    const RealMatrix& C() const noexcept { return c_; }
    const RealMatrix& D() const noexcept { return d_; }
    const Labels& state_labels() const noexcept { return states_; }
    const Labels& input_labels() const noexcept { return inputs_; }
    const Labels& output_labels() const noexcept { return outputs_; }

    std::size_t num_states() const noexcept { return states_.size(); }
    std::size_t num_inputs() const noexcept { return inputs_.size(); }
    std::size_t num_outputs() const noexcept { return outputs_.size(); }

    std::size_t input_index(const std::string& label) const;
    std::size_t output_index(const std::string& label) const;
    std::size_t state_index(const std::string& label) const;

    /// Keep only the named inputs and outputs (in the given order).
    StateSpaceModel select(const Labels& inputs, const Labels& outputs) const;

private:
    RealMatrix a_, b_, c_, d_;
    Labels states_, inputs_, outputs_;
};

// ---------------------------------------------------------------------------
// Frequency grid and sampled transfer matrices
// ---------------------------------------------------------------------------

/// Strictly increasing set of angular frequencies (rad/s).
class FrequencyGrid {
public:
    FrequencyGrid() = default;
    explicit FrequencyGrid(std::vector<double> omegas);

    /// 2*pi*{f_min, f_min+step, ...}. f_max is appended when the step does not
    /// land on it exactly, so the closed interval [f_min, f_max] is covered.
    static FrequencyGrid from_hz(double f_min_hz, double f_max_hz, double f_step_hz);

    /// The analysis default: 0.15 Hz step over [0.15, 1000] Hz.
    static FrequencyGrid default_grid();

    const std::vector<double>& points() const noexcept { return omegas_; }
    std::size_t size() const noexcept { return omegas_.size(); }
    double omega(std::size_t i) const { return omegas_.at(i); }
    double hz(std::size_t i) const { return omegas_.at(i) / (2.0 * kPi); }
    std::vector<double> hz() const;

    double f_min_hz() const noexcept { return f_min_hz_; }
    double f_max_hz() const noexcept { return f_max_hz_; }
    double f_step_hz() const noexcept { return f_step_hz_; }

    bool operator==(const FrequencyGrid& other) const { return omegas_ == other.omegas_; }

private:
    std::vector<double> omegas_;
    double f_min_hz_ = 0.0;
    double f_max_hz_ = 0.0;
    double f_step_hz_ = 0.0;
};

/// One complex k x m matrix per grid point.
struct TransferMatrixSamples {
    FrequencyGrid grid;
    std::vector<ComplexMatrix> values;
    Labels input_labels;
    Labels output_labels;

    std::size_t rows() const { return values.empty() ? 0 : values.front().rows(); }
    std::size_t cols() const { return values.empty() ? 0 : values.front().cols(); }

    /// Throws ValidationError unless there is one matrix per grid point and all
    /// matrices share a shape.
    void check_consistent() const;
};

// ---------------------------------------------------------------------------
// Hessenberg machinery
// ---------------------------------------------------------------------------

struct HessenbergForm {
    RealMatrix H;  ///< upper Hessenberg, H = Q^T A Q
    RealMatrix Q;  ///< orthogonal
};

/// Powers of two d such that diag(d)^{-1} A diag(d) has comparable row and
/// column norms. The eigenvalue screening runs on the balanced matrix, which
/// keeps badly scaled states (tiny bus capacitances) from producing spurious
/// right-half-plane eigenvalues.
Eigen::VectorXd balancing_scales(const RealMatrix& a);

/// Orthogonal similarity reduction of a square matrix to upper Hessenberg form.
HessenbergForm hessenberg_reduce(const RealMatrix& a);

/// Evaluates C (jw I - A)^{-1} B + D at arbitrary frequencies after a single
/// Hessenberg reduction of A. Each evaluation is O(n^2) + O(n m k).
///
/// The object is immutable after construction and evaluate() is safe to call
/// concurrently.
class HessenbergResolvent {
public:
    /// With `refine`, every solve gets one step of iterative refinement
    /// against the original A: roughly twice the cost per point, but accurate
    /// on models that mix widely different time scales.
    explicit HessenbergResolvent(const StateSpaceModel& ss, bool refine = false);

    ComplexMatrix evaluate(double omega) const;

    /// Square systems only: the block x block matrices on the diagonal of the
    /// response, without forming the off-diagonal products.
    std::vector<ComplexMatrix> evaluate_diagonal_blocks(double omega, Eigen::Index block) const;

    std::size_t num_states() const noexcept { return h_.rows(); }

private:
    using RowMajorComplex = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    // LU factors of jwI - H: adjacent-row swaps, multipliers and U.
    struct Factor {
        RowMajorComplex u;
        std::vector<Complex> l;
        std::vector<bool> swapped;
    };
    Factor factor(double omega) const;
    static void apply(const Factor& f, RowMajorComplex& x);
    RowMajorComplex solve_states(double omega) const;

    RealMatrix h_;
    RealMatrix bq_;  // Q^T B
    RealMatrix cq_;  // C Q
    RealMatrix d_;
    double scale_ = 0.0;
    bool refine_ = false;
    RealMatrix a_, b_, q_;  // kept only when refining
};

struct SweepOptions {
    /// Worker threads for the frequency sweep; 0 picks DSI_THREADS or 1.
    unsigned threads = 0;
    /// One step of iterative refinement per point (see HessenbergResolvent).
    bool refine = false;
};

/// Resolves a thread count: explicit value, else the DSI_THREADS environment
/// variable, else 1.
unsigned resolve_threads(unsigned requested);

/// Runs fn(i) for every grid index, split over worker threads. Each index is
/// handled exactly once, so results written per index do not depend on the
/// thread count.
template <typename Fn>
void parallel_for_points(std::size_t count, unsigned threads, Fn&& fn);

/// C (jw I - A)^{-1} B + D at every grid point.
TransferMatrixSamples frequency_response(const StateSpaceModel& ss, const FrequencyGrid& grid,
                                         const SweepOptions& options = {});

// ---------------------------------------------------------------------------
// Singular values and eigenvalue conditions
// ---------------------------------------------------------------------------

/// Largest singular value. 2x2 inputs use a closed form; larger ones an SVD.
double sigma_max(const ComplexMatrix& m);

struct ConditionTolerances {
    double repeated = 1e-8;   ///< |li - lj| < repeated * max(1, |li|)
    double zero_real = 1e-9;  ///< |Re l| < zero_real * max(1, |l|)
    double unstable = 0.0;    ///< Re l > max(unstable, floor)
    double floor = 1e-12;
    /// PBH rank threshold for the model-based check: sigma < uncontrollable * max(1, |l|).
    double uncontrollable = 1e-6;
};

struct ConditionReport {
    std::vector<Complex> eigenvalues;
    bool repeated_flag = false;
    bool zero_real_flag = false;
    bool unstable_flag = false;
    std::vector<std::size_t> repeated_indices;
    std::vector<std::size_t> zero_real_indices;
    std::vector<std::size_t> unstable_indices;
    /// Eigenvalues deliberately left out of the checks (documented symmetry modes).
    std::vector<std::size_t> excluded_indices;
    /// Repeated eigenvalues dropped by the model-based check because all but
    /// one of the coinciding modes are uncontrollable from the inputs.
    std::vector<std::size_t> uncontrollable_repeated_indices;
    ConditionTolerances tolerances;

    bool passed() const noexcept { return !repeated_flag && !zero_real_flag && !unstable_flag; }
    std::string summary() const;
};

/// Eigenvalue screening of a state matrix: repeated eigenvalues, eigenvalues
/// on the imaginary axis and eigenvalues in the right half plane.
///
/// `symmetry_modes` eigenvalues of smallest modulus are excluded from all
/// three checks and listed in `excluded_indices`; use it only for modes that
/// are known to be structural (e.g. the rotation invariance of a network
/// without an angle reference).
ConditionReport check_conditions(const RealMatrix& a, const ConditionTolerances& tol = {},
                                 std::size_t symmetry_modes = 0);

/// Same checks, but a cluster of repeated eigenvalues only counts if more than
/// one of its modes is controllable from B (PBH rank test on [lI - A, B]).
/// Modes that no input can excite do not show up in any transfer function;
/// pole-zero cancelling PI designs leave such modes at identical locations in
/// every converter that shares the filter data.
ConditionReport check_conditions(const StateSpaceModel& model, const ConditionTolerances& tol = {},
                                 std::size_t symmetry_modes = 0);

/// Thrown when a model fails its eigenvalue conditions.
class ConditionError : public NumericalError {
public:
    ConditionError(std::string what, ConditionReport report)
        : NumericalError(std::move(what)), report_(std::move(report)) {}
    const ConditionReport& report() const noexcept { return report_; }

private:
    ConditionReport report_;
};

}  // namespace dsi

#include "dsi/detail/parallel.hpp"
