#include "dsi/freqresp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace dsi {

namespace {

void check_labels(const Labels& labels, std::size_t expected, const char* what) {
    if (labels.size() != expected) {
        std::ostringstream os;
        os << what << " label count " << labels.size() << " does not match dimension " << expected;
        throw ValidationError(os.str());
    }
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        if (!seen.insert(l).second) throw ValidationError(std::string("duplicate ") + what + " label '" + l + "'");
    }
}

std::size_t find_label(const Labels& labels, const std::string& label, const char* what) {
    auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw ValidationError(std::string("unknown ") + what + " '" + label + "'");
    return static_cast<std::size_t>(it - labels.begin());
}

bool all_finite(const RealMatrix& m) { return m.allFinite(); }

}  // namespace

// ---------------------------------------------------------------------------
// StateSpaceModel
// ---------------------------------------------------------------------------

StateSpaceModel::StateSpaceModel(RealMatrix a, RealMatrix b, RealMatrix c, RealMatrix d, Labels states,
                                 Labels inputs, Labels outputs)
    : a_(std::move(a)),
      b_(std::move(b)),
      c_(std::move(c)),
      d_(std::move(d)),
      states_(std::move(states)),
      inputs_(std::move(inputs)),
      outputs_(std::move(outputs)) {
    const auto n = a_.rows();
    if (a_.cols() != n) throw ValidationError("state matrix A must be square");
    if (b_.rows() != n) throw ValidationError("B must have as many rows as A");
    if (c_.cols() != n) throw ValidationError("C must have as many columns as A");
    if (d_.rows() != c_.rows()) throw ValidationError("C and D must have the same row count");
    if (d_.cols() != b_.cols()) throw ValidationError("B and D must have the same column count");
    if (!all_finite(a_) || !all_finite(b_) || !all_finite(c_) || !all_finite(d_)) {
        throw ValidationError("state-space matrices contain non-finite entries");
    }
    check_labels(states_, static_cast<std::size_t>(n), "state");
    check_labels(inputs_, static_cast<std::size_t>(b_.cols()), "input");
    check_labels(outputs_, static_cast<std::size_t>(c_.rows()), "output");
}

StateSpaceModel StateSpaceModel::static_gain(RealMatrix d, Labels inputs, Labels outputs) {
    const auto k = d.rows();
    const auto m = d.cols();
    return StateSpaceModel(RealMatrix(0, 0), RealMatrix(0, m), RealMatrix(k, 0), std::move(d), {},
                           std::move(inputs), std::move(outputs));
}

std::size_t StateSpaceModel::input_index(const std::string& label) const {
    return find_label(inputs_, label, "input");
}
std::size_t StateSpaceModel::output_index(const std::string& label) const {
    return find_label(outputs_, label, "output");
}
std::size_t StateSpaceModel::state_index(const std::string& label) const {
    return find_label(states_, label, "state");
}

StateSpaceModel StateSpaceModel::select(const Labels& inputs, const Labels& outputs) const {
    RealMatrix b(b_.rows(), static_cast<Eigen::Index>(inputs.size()));
    RealMatrix c(static_cast<Eigen::Index>(outputs.size()), c_.cols());
    RealMatrix d(static_cast<Eigen::Index>(outputs.size()), static_cast<Eigen::Index>(inputs.size()));
    for (std::size_t j = 0; j < inputs.size(); ++j) {
        const auto src = static_cast<Eigen::Index>(input_index(inputs[j]));
        b.col(static_cast<Eigen::Index>(j)) = b_.col(src);
    }
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(output_index(outputs[i]));
        c.row(static_cast<Eigen::Index>(i)) = c_.row(src);
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                d_(src, static_cast<Eigen::Index>(input_index(inputs[j])));
        }
    }
    return StateSpaceModel(a_, std::move(b), std::move(c), std::move(d), states_, inputs, outputs);
}

// ---------------------------------------------------------------------------
// FrequencyGrid
// ---------------------------------------------------------------------------

FrequencyGrid::FrequencyGrid(std::vector<double> omegas) : omegas_(std::move(omegas)) {
    for (std::size_t i = 0; i < omegas_.size(); ++i) {
        const double w = omegas_[i];
        if (!std::isfinite(w) || w < 0.0) throw ValidationError("grid frequencies must be finite and >= 0");
        if (i > 0 && !(w > omegas_[i - 1])) throw ValidationError("grid frequencies must be strictly increasing");
    }
    if (!omegas_.empty()) {
        f_min_hz_ = omegas_.front() / (2.0 * kPi);
        f_max_hz_ = omegas_.back() / (2.0 * kPi);
    }
}

FrequencyGrid FrequencyGrid::from_hz(double f_min_hz, double f_max_hz, double f_step_hz) {
    if (!std::isfinite(f_min_hz) || !std::isfinite(f_max_hz) || !std::isfinite(f_step_hz)) {
        throw ValidationError("grid parameters must be finite");
    }
    if (f_min_hz < 0.0) throw ValidationError("f_min must be >= 0");
    if (f_max_hz < f_min_hz) throw ValidationError("f_max must be >= f_min");
    if (!(f_step_hz > 0.0)) throw ValidationError("f_step must be > 0");

    const double span = f_max_hz - f_min_hz;
    const auto steps = static_cast<std::size_t>(std::floor(span / f_step_hz + 1e-9));
    std::vector<double> hz;
    hz.reserve(steps + 2);
    for (std::size_t i = 0; i <= steps; ++i) hz.push_back(f_min_hz + static_cast<double>(i) * f_step_hz);
    const double tol = 1e-9 * std::max(1.0, f_max_hz);
    if (f_max_hz - hz.back() > tol) {
        hz.push_back(f_max_hz);
    } else {
        hz.back() = std::min(hz.back(), f_max_hz);
    }

    std::vector<double> omegas(hz.size());
    std::transform(hz.begin(), hz.end(), omegas.begin(), [](double f) { return 2.0 * kPi * f; });
    FrequencyGrid grid(std::move(omegas));
    grid.f_min_hz_ = f_min_hz;
    grid.f_max_hz_ = f_max_hz;
    grid.f_step_hz_ = f_step_hz;
    return grid;
}

FrequencyGrid FrequencyGrid::default_grid() { return from_hz(0.15, 1000.0, 0.15); }

std::vector<double> FrequencyGrid::hz() const {
    std::vector<double> out(omegas_.size());
    std::transform(omegas_.begin(), omegas_.end(), out.begin(), [](double w) { return w / (2.0 * kPi); });
    return out;
}

void TransferMatrixSamples::check_consistent() const {
    if (values.size() != grid.size()) throw ValidationError("transfer matrix samples do not match the grid size");
    if (values.empty()) return;
    const auto r = values.front().rows();
    const auto c = values.front().cols();
    for (const auto& v : values) {
        if (v.rows() != r || v.cols() != c) throw ValidationError("transfer matrix samples change shape across the grid");
    }
}

// ---------------------------------------------------------------------------
// Hessenberg reduction and resolvent
// ---------------------------------------------------------------------------

HessenbergForm hessenberg_reduce(const RealMatrix& a) {
    if (a.rows() != a.cols()) throw ValidationError("hessenberg_reduce needs a square matrix");
    const auto n = a.rows();
    if (n <= 2) return {a, RealMatrix::Identity(n, n)};
    Eigen::HessenbergDecomposition<RealMatrix> hd(a);
    RealMatrix h = hd.matrixH();
    RealMatrix q = hd.matrixQ();
    // matrixH() leaves roundoff below the subdiagonal; the form is exact by construction.
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j + 2; i < n; ++i) h(i, j) = 0.0;
    }
    return {std::move(h), std::move(q)};
}

// Parlett-Reinsch balancing with powers of two, so the similarity is exact.
Eigen::VectorXd balancing_scales(const RealMatrix& a) {
    if (a.rows() != a.cols()) throw ValidationError("balancing_scales needs a square matrix");
    const auto n = a.rows();
    Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
    RealMatrix m = a;
    bool changed = true;
    for (int sweep = 0; changed && sweep < 100; ++sweep) {
        changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double c = m.col(i).cwiseAbs().sum() - std::abs(m(i, i));
            const double r = m.row(i).cwiseAbs().sum() - std::abs(m(i, i));
            if (c == 0.0 || r == 0.0) continue;
            double f = 1.0;
            double cc = c;
            while (cc < r / 2.0) cc *= 2.0, f *= 2.0;
            while (cc > r * 2.0) cc /= 2.0, f /= 2.0;
            if ((c * f + r / f) < 0.95 * (c + r)) {
                d(i) *= f;
                m.col(i) *= f;
                m.row(i) /= f;
                changed = true;
            }
        }
    }
    return d;
}

HessenbergResolvent::HessenbergResolvent(const StateSpaceModel& ss, bool refine) : d_(ss.D()), refine_(refine) {
    auto form = hessenberg_reduce(ss.A());
    h_ = std::move(form.H);
    bq_ = form.Q.transpose() * ss.B();
    cq_ = ss.C() * form.Q;
    scale_ = h_.size() > 0 ? h_.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;
    if (refine_) {
        a_ = ss.A();
        b_ = ss.B();
        q_ = std::move(form.Q);
    }
}

HessenbergResolvent::Factor HessenbergResolvent::factor(double omega) const {
    const Eigen::Index n = h_.rows();

    // M = jw I - H stays upper Hessenberg; Gaussian elimination with pivoting
    // restricted to adjacent rows keeps it O(n^2).
    Factor f;
    f.u = (-h_).cast<Complex>();
    f.u.diagonal().array() += Complex(0.0, omega);
    f.l.assign(static_cast<std::size_t>(std::max<Eigen::Index>(n - 1, 0)), Complex(0.0, 0.0));
    f.swapped.assign(f.l.size(), false);

    auto& mat = f.u;
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        if (std::abs(mat(k + 1, k)) > std::abs(mat(k, k))) {
            mat.row(k).tail(n - k).swap(mat.row(k + 1).tail(n - k));
            f.swapped[k] = true;
        }
        const Complex pivot = mat(k, k);
        if (pivot == Complex(0.0, 0.0)) continue;  // caught by the pivot check below
        const Complex l = mat(k + 1, k) / pivot;
        if (l != Complex(0.0, 0.0)) mat.row(k + 1).tail(n - k - 1) -= l * mat.row(k).tail(n - k - 1);
        f.l[k] = l;
        mat(k + 1, k) = 0.0;
    }

    const double tiny = std::numeric_limits<double>::epsilon() * static_cast<double>(n) *
                        std::max({scale_, std::abs(omega), 1.0});
    for (Eigen::Index i = 0; i < n; ++i) {
        if (std::abs(mat(i, i)) <= tiny) {
            std::ostringstream os;
            os << "jwI - A is singular at w = " << omega << " rad/s (" << omega / (2.0 * kPi) << " Hz)";
            throw SingularFrequencyError(omega, os.str());
        }
    }
    return f;
}

void HessenbergResolvent::apply(const Factor& f, RowMajorComplex& x) {
    for (std::size_t k = 0; k < f.l.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        if (f.swapped[k]) x.row(kk).swap(x.row(kk + 1));
        if (f.l[k] != Complex(0.0, 0.0)) x.row(kk + 1) -= f.l[k] * x.row(kk);
    }
    f.u.triangularView<Eigen::Upper>().solveInPlace(x);
}

HessenbergResolvent::RowMajorComplex HessenbergResolvent::solve_states(double omega) const {
    const auto f = factor(omega);
    RowMajorComplex x = bq_.cast<Complex>();
    apply(f, x);
    if (refine_) {
        // One correction step with the residual taken against the original A,
        // which removes the error the reduction picks up on stiff models.
        const ComplexMatrix y = q_.cast<Complex>() * x;
        const ComplexMatrix r = b_.cast<Complex>() - Complex(0.0, omega) * y + a_.cast<Complex>() * y;
        RowMajorComplex dx = q_.transpose().cast<Complex>() * r;
        apply(f, dx);
        x += dx;
    }
    return x;
}

ComplexMatrix HessenbergResolvent::evaluate(double omega) const {
    if (h_.rows() == 0) return d_.cast<Complex>();
    return cq_.cast<Complex>() * solve_states(omega) + d_.cast<Complex>();
}

std::vector<ComplexMatrix> HessenbergResolvent::evaluate_diagonal_blocks(double omega, Eigen::Index block) const {
    if (block <= 0 || d_.rows() != d_.cols() || d_.rows() % block != 0)
        throw ValidationError("diagonal blocks need a square system whose size is a multiple of the block");
    const Eigen::Index count = d_.rows() / block;
    std::vector<ComplexMatrix> out(static_cast<std::size_t>(count));
    if (h_.rows() == 0) {
        for (Eigen::Index k = 0; k < count; ++k)
            out[k] = d_.block(k * block, k * block, block, block).cast<Complex>();
        return out;
    }
    const RowMajorComplex x = solve_states(omega);
    for (Eigen::Index k = 0; k < count; ++k) {
        out[k] = cq_.middleRows(k * block, block).cast<Complex>() * x.middleCols(k * block, block) +
                 d_.block(k * block, k * block, block, block).cast<Complex>();
    }
    return out;
}

unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("DSI_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

TransferMatrixSamples frequency_response(const StateSpaceModel& ss, const FrequencyGrid& grid,
                                         const SweepOptions& options) {
    TransferMatrixSamples out;
    out.grid = grid;
    out.input_labels = ss.input_labels();
    out.output_labels = ss.output_labels();
    out.values.resize(grid.size());

    const HessenbergResolvent resolvent(ss, options.refine);
    parallel_for_points(grid.size(), resolve_threads(options.threads),
                        [&](std::size_t i) { out.values[i] = resolvent.evaluate(grid.omega(i)); });
    return out;
}

// ---------------------------------------------------------------------------
// Singular values
// ---------------------------------------------------------------------------

double sigma_max(const ComplexMatrix& m) {
    if (!m.allFinite()) throw ValidationError("sigma_max: matrix has non-finite entries");
    if (m.size() == 0) return 0.0;
    if (m.rows() == 2 && m.cols() == 2) {
        // s1^2 = (|M|_F^2 + sqrt(|M|_F^4 - 4 |det M|^2)) / 2
        const double f = m.squaredNorm();
        const double det = std::abs(m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0));
        const double disc = std::max(0.0, (f - 2.0 * det) * (f + 2.0 * det));
        return std::sqrt(0.5 * (f + std::sqrt(disc)));
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Eigenvalue conditions
// ---------------------------------------------------------------------------

std::string ConditionReport::summary() const {
    std::ostringstream os;
    double max_re = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
        if (std::find(excluded_indices.begin(), excluded_indices.end(), i) != excluded_indices.end()) continue;
        max_re = std::max(max_re, eigenvalues[i].real());
    }
    os << "n=" << eigenvalues.size() << " repeated=" << repeated_indices.size()
       << " zero_real=" << zero_real_indices.size() << " unstable=" << unstable_indices.size()
       << " excluded=" << excluded_indices.size();
    if (!uncontrollable_repeated_indices.empty())
        os << " uncontrollable_repeated=" << uncontrollable_repeated_indices.size();
    if (!eigenvalues.empty()) os << " max_real=" << max_re;
    return os.str();
}

ConditionReport check_conditions(const RealMatrix& a, const ConditionTolerances& tol, std::size_t symmetry_modes) {
    if (a.rows() != a.cols()) throw ValidationError("check_conditions needs a square matrix");
    if (!a.allFinite()) throw ValidationError("check_conditions: matrix has non-finite entries");

    ConditionReport report;
    report.tolerances = tol;
    const auto n = static_cast<std::size_t>(a.rows());
    if (n == 0) return report;

    const Eigen::VectorXd s = balancing_scales(a);
    const RealMatrix ab = s.cwiseInverse().asDiagonal() * a * s.asDiagonal();
    Eigen::EigenSolver<RealMatrix> solver(ab, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) throw NumericalError("eigenvalue iteration did not converge");
    const auto& ev = solver.eigenvalues();
    report.eigenvalues.assign(ev.data(), ev.data() + ev.size());

    std::vector<bool> excluded(n, false);
    if (symmetry_modes > 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return std::abs(report.eigenvalues[x]) < std::abs(report.eigenvalues[y]);
        });
        for (std::size_t i = 0; i < std::min(symmetry_modes, n); ++i) {
            excluded[order[i]] = true;
            report.excluded_indices.push_back(order[i]);
        }
        std::sort(report.excluded_indices.begin(), report.excluded_indices.end());
    }

    const double unstable_bound = std::max(tol.unstable, tol.floor);
    std::vector<bool> repeated(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (excluded[i]) continue;
        const Complex li = report.eigenvalues[i];
        const double mag = std::max(1.0, std::abs(li));
        if (std::abs(li.real()) < tol.zero_real * mag) report.zero_real_indices.push_back(i);
        if (li.real() > unstable_bound) report.unstable_indices.push_back(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (excluded[j]) continue;
            if (std::abs(li - report.eigenvalues[j]) < tol.repeated * mag) {
                repeated[i] = true;
                repeated[j] = true;
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (repeated[i]) report.repeated_indices.push_back(i);
    }
    report.repeated_flag = !report.repeated_indices.empty();
    report.zero_real_flag = !report.zero_real_indices.empty();
    report.unstable_flag = !report.unstable_indices.empty();
    return report;
}

ConditionReport check_conditions(const StateSpaceModel& model, const ConditionTolerances& tol,
                                 std::size_t symmetry_modes) {
    auto report = check_conditions(model.A(), tol, symmetry_modes);
    if (!report.repeated_flag) return report;

    // Group the flagged eigenvalues into clusters of mutually close values.
    const auto& ev = report.eigenvalues;
    std::vector<std::vector<std::size_t>> clusters;
    for (auto i : report.repeated_indices) {
        bool placed = false;
        for (auto& c : clusters) {
            const Complex l0 = ev[c.front()];
            if (std::abs(ev[i] - l0) < tol.repeated * std::max(1.0, std::abs(l0))) {
                c.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) clusters.push_back({i});
    }

    const auto n = model.A().rows();
    const auto m = model.B().cols();
    std::vector<std::size_t> kept;
    for (const auto& c : clusters) {
        Complex lambda(0.0, 0.0);
        for (auto i : c) lambda += ev[i];
        lambda /= static_cast<double>(c.size());

        ComplexMatrix pbh(n, n + m);
        pbh.leftCols(n) = -model.A().cast<Complex>();
        pbh.leftCols(n).diagonal().array() += lambda;
        pbh.rightCols(m) = model.B().cast<Complex>();
        Eigen::BDCSVD<ComplexMatrix> svd(pbh);
        const auto& sv = svd.singularValues();
        const double floor = 100.0 * std::numeric_limits<double>::epsilon() * sv(0);
        const double bound = std::max(tol.uncontrollable * std::max(1.0, std::abs(lambda)), floor);
        std::size_t deficient = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k)
            if (sv(k) < bound) ++deficient;

        if (c.size() - std::min(deficient, c.size()) <= 1) {
            report.uncontrollable_repeated_indices.insert(report.uncontrollable_repeated_indices.end(), c.begin(),
                                                          c.end());
        } else {
            kept.insert(kept.end(), c.begin(), c.end());
        }
    }
    std::sort(kept.begin(), kept.end());
    std::sort(report.uncontrollable_repeated_indices.begin(), report.uncontrollable_repeated_indices.end());
    report.repeated_indices = kept;
    report.repeated_flag = !kept.empty();
    return report;
}

}  // namespace dsi
