#include "dsi/dsi.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace dsi {

RangeSpec RangeSpec::default_ranges() {
    return {{{"Range 1", 0.0, 20.0}, {"Range 2", 20.0, 40.0}, {"Range 3", 40.0, 100.0}, {"Range 4", 100.0, 1000.0}}};
}

void RangeSpec::validate() const {
    if (ranges.empty()) throw ValidationError("range list is empty");
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        const auto& rg = ranges[r];
        if (!std::isfinite(rg.f_lo_hz) || !std::isfinite(rg.f_hi_hz) || !(rg.f_lo_hz >= 0.0) ||
            !(rg.f_hi_hz > rg.f_lo_hz))
            throw ValidationError("range '" + rg.name + "' needs 0 <= lo < hi");
        if (r > 0 && rg.f_lo_hz < ranges[r - 1].f_hi_hz)
            throw ValidationError("ranges '" + ranges[r - 1].name + "' and '" + rg.name + "' overlap or are unordered");
    }
}

std::vector<std::size_t> RangeSpec::indices(const FrequencyGrid& grid, std::size_t r) const {
    const auto& rg = ranges.at(r);
    const bool last = r + 1 == ranges.size();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double f = grid.hz(i);
        if (f >= rg.f_lo_hz && (f < rg.f_hi_hz || (last && f <= rg.f_hi_hz))) idx.push_back(i);
    }
    return idx;
}

void RangeSpec::check_covers(const FrequencyGrid& grid) const {
    validate();
    std::vector<bool> covered(grid.size(), false);
    for (std::size_t r = 0; r < ranges.size(); ++r)
        for (auto i : indices(grid, r)) covered[i] = true;
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!covered[i]) {
            std::ostringstream os;
            os << "grid point " << grid.hz(i) << " Hz is outside every range";
            throw ValidationError(os.str());
        }
}

namespace {

bool labels_start_with(const Labels& labels, char c) {
    for (const auto& l : labels)
        if (l.empty() || l.front() != c) return false;
    return !labels.empty();
}

void check_pair(const TransferMatrixSamples& a, const TransferMatrixSamples& b) {
    a.check_consistent();
    b.check_consistent();
    if (!(a.grid == b.grid)) throw ValidationError("DSI operands are sampled on different grids");
    if (a.rows() != 2 || a.cols() != 2 || b.rows() != 2 || b.cols() != 2)
        throw ValidationError("DSI operands must be 2x2 transfer matrices");
}

}  // namespace

std::vector<double> dsi_component(const TransferMatrixSamples& y_sus, const TransferMatrixSamples& y_ref) {
    check_pair(y_sus, y_ref);
    for (const auto* s : {&y_sus, &y_ref})
        if (!labels_start_with(s->input_labels, 'u') || !labels_start_with(s->output_labels, 'i'))
            throw ValidationError("component DSI compares admittances (voltage in, current out)");
    std::vector<double> out(y_sus.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigma_max(y_ref.values[i] - y_sus.values[i]);
    return out;
}

namespace {

// Ports are states touched by B or C; everything else falls into blocks that
// only talk to each other through ports (element-internal states). Per
// frequency each block is eliminated densely, leaving a sparse Schur
// complement on the ports.
class PortReduction {
public:
    explicit PortReduction(const StateSpaceModel& model) : model_(model) {
        const auto n = model.A().rows();
        std::vector<bool> port(static_cast<std::size_t>(n), false);
        for (Eigen::Index i = 0; i < n; ++i)
            port[i] = model.B().row(i).any() || model.C().col(i).any();
        std::vector<Eigen::Index> local(static_cast<std::size_t>(n), -1);
        for (Eigen::Index i = 0; i < n; ++i)
            if (port[i]) {
                local[i] = static_cast<Eigen::Index>(ports_.size());
                ports_.push_back(i);
            }

        // Union-find over the non-port coupling graph.
        std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
        std::iota(parent.begin(), parent.end(), 0);
        const auto find = [&parent](Eigen::Index x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                if (!port[i] && !port[j] && model.A()(i, j) != 0.0) parent[find(i)] = find(j);
        std::vector<Eigen::Index> block_of(static_cast<std::size_t>(n), -1);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (port[i]) continue;
            const auto root = find(i);
            if (block_of[root] < 0) {
                block_of[root] = static_cast<Eigen::Index>(blocks_.size());
                blocks_.emplace_back();
            }
            blocks_[block_of[root]].states.push_back(i);
        }
        for (auto& blk : blocks_) {
            std::vector<bool> seen(ports_.size(), false);
            for (auto s : blk.states)
                for (std::size_t p = 0; p < ports_.size(); ++p)
                    if (!seen[p] && (model.A()(s, ports_[p]) != 0.0 || model.A()(ports_[p], s) != 0.0)) {
                        seen[p] = true;
                        blk.ports.push_back(static_cast<Eigen::Index>(p));
                    }
        }
        const auto np = static_cast<Eigen::Index>(ports_.size());
        b_ports_.resize(np, model.B().cols());
        c_ports_.resize(model.C().rows(), np);
        for (Eigen::Index p = 0; p < np; ++p) {
            b_ports_.row(p) = model.B().row(ports_[p]).cast<Complex>();
            c_ports_.col(p) = model.C().col(ports_[p]).cast<Complex>();
        }
    }

    /// C (jwI - A)^-1 B restricted to the diagonal 2x2 blocks, plus D.
    std::vector<ComplexMatrix> diagonal_blocks(double w) const {
        using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::ColMajor, int>;
        const auto& a = model_.A();
        const Complex jw(0.0, w);
        const auto np = static_cast<Eigen::Index>(ports_.size());
        std::vector<Eigen::Triplet<Complex, int>> trip;
        for (Eigen::Index q = 0; q < np; ++q) {
            for (Eigen::Index p = 0; p < np; ++p) {
                const double v = a(ports_[p], ports_[q]);
                if (v != 0.0) trip.emplace_back(static_cast<int>(p), static_cast<int>(q), Complex(-v, 0.0));
            }
            trip.emplace_back(static_cast<int>(q), static_cast<int>(q), jw);
        }
        for (const auto& blk : blocks_) {
            const auto m = static_cast<Eigen::Index>(blk.states.size());
            const auto k = static_cast<Eigen::Index>(blk.ports.size());
            if (k == 0) continue;
            ComplexMatrix mrr(m, m), mrp(m, k), mpr(k, m);
            for (Eigen::Index i = 0; i < m; ++i) {
                for (Eigen::Index j = 0; j < m; ++j) mrr(i, j) = -a(blk.states[i], blk.states[j]);
                mrr(i, i) += jw;
                for (Eigen::Index p = 0; p < k; ++p) {
                    mrp(i, p) = -a(blk.states[i], ports_[blk.ports[p]]);
                    mpr(p, i) = -a(ports_[blk.ports[p]], blk.states[i]);
                }
            }
            Eigen::PartialPivLU<ComplexMatrix> lu(mrr);
            // An undamped branch (r = 0) is singular on its own at w = w0 even
            // though the coupled system is not; solve the whole system then.
            if (!(lu.rcond() > 1e-13)) return full_solve(w);
            const ComplexMatrix corr = mpr * lu.solve(mrp);
            for (Eigen::Index q = 0; q < k; ++q)
                for (Eigen::Index p = 0; p < k; ++p)
                    trip.emplace_back(static_cast<int>(blk.ports[p]), static_cast<int>(blk.ports[q]), -corr(p, q));
        }
        SparseComplex s(np, np);
        s.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<SparseComplex> lu;
        lu.compute(s);
        if (lu.info() != Eigen::Success) {
            std::ostringstream os;
            os << "jwI - A is singular at " << w / (2.0 * kPi) << " Hz";
            throw NumericalError(os.str());
        }
        const ComplexMatrix x = lu.solve(b_ports_);
        const auto nb = model_.B().cols() / 2;
        std::vector<ComplexMatrix> out(static_cast<std::size_t>(nb));
        for (Eigen::Index b = 0; b < nb; ++b)
            out[static_cast<std::size_t>(b)] = c_ports_.middleRows(2 * b, 2) * x.middleCols(2 * b, 2) +
                                               model_.D().block(2 * b, 2 * b, 2, 2).cast<Complex>();
        return out;
    }

private:
    std::vector<ComplexMatrix> full_solve(double w) const {
        using SparseComplex = Eigen::SparseMatrix<Complex, Eigen::ColMajor, int>;
        const auto& a = model_.A();
        const auto n = a.rows();
        std::vector<Eigen::Triplet<Complex, int>> trip;
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i)
                if (a(i, j) != 0.0) trip.emplace_back(static_cast<int>(i), static_cast<int>(j), Complex(-a(i, j), 0.0));
            trip.emplace_back(static_cast<int>(j), static_cast<int>(j), Complex(0.0, w));
        }
        SparseComplex s(n, n);
        s.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<SparseComplex> lu;
        lu.compute(s);
        if (lu.info() != Eigen::Success) {
            std::ostringstream os;
            os << "jwI - A is singular at " << w / (2.0 * kPi) << " Hz";
            throw NumericalError(os.str());
        }
        const ComplexMatrix x = lu.solve(ComplexMatrix(model_.B().cast<Complex>()));
        const ComplexMatrix c = model_.C().cast<Complex>();
        const auto nb = model_.B().cols() / 2;
        std::vector<ComplexMatrix> out(static_cast<std::size_t>(nb));
        for (Eigen::Index b = 0; b < nb; ++b)
            out[static_cast<std::size_t>(b)] =
                c.middleRows(2 * b, 2) * x.middleCols(2 * b, 2) + model_.D().block(2 * b, 2 * b, 2, 2).cast<Complex>();
        return out;
    }

    struct Block {
        std::vector<Eigen::Index> states;
        std::vector<Eigen::Index> ports;  // indices into ports_
    };
    const StateSpaceModel& model_;
    std::vector<Eigen::Index> ports_;
    std::vector<Block> blocks_;
    ComplexMatrix b_ports_, c_ports_;
};

}  // namespace

std::vector<std::vector<ComplexMatrix>> bus_impedances(const AssembledSystem& sys, const FrequencyGrid& grid,
                                                       const BusImpedanceOptions& options) {
    const auto& model = sys.model;
    if (model.num_inputs() != model.num_outputs() || model.num_inputs() % 2 != 0)
        throw ValidationError("bus impedances need a square model with two channels per bus");
    const unsigned threads = resolve_threads(options.sweep.threads);
    const bool sparse = options.method == BusImpedanceMethod::sparse ||
                        (options.method == BusImpedanceMethod::automatic &&
                         model.num_states() >= options.sparse_from_states);
    std::vector<std::vector<ComplexMatrix>> z(grid.size());
    if (sparse) {
        const PortReduction reduction(model);
        parallel_for_points(grid.size(), threads, [&](std::size_t i) { z[i] = reduction.diagonal_blocks(grid.omega(i)); });
        return z;
    }
    const HessenbergResolvent resolvent(model, /*refine=*/true);
    parallel_for_points(grid.size(), threads,
                        [&](std::size_t i) { z[i] = resolvent.evaluate_diagonal_blocks(grid.omega(i), 2); });
    return z;
}

DsiMatrix dsi_from_bus_impedances(const FrequencyGrid& grid, const Labels& bus_ids,
                                  const std::vector<std::vector<ComplexMatrix>>& z_bus,
                                  const TransferMatrixSamples& z_ref) {
    z_ref.check_consistent();
    if (!(z_ref.grid == grid)) throw ValidationError("reference impedance is sampled on a different grid");
    if (z_ref.rows() != 2 || z_ref.cols() != 2) throw ValidationError("reference impedance must be 2x2");
    if (!labels_start_with(z_ref.input_labels, 'i') || !labels_start_with(z_ref.output_labels, 'u'))
        throw ValidationError("system DSI compares impedances (current in, voltage out)");
    if (z_bus.size() != grid.size()) throw ValidationError("bus impedance samples do not match the grid");

    DsiMatrix out;
    out.grid = grid;
    out.bus_ids = bus_ids;
    out.values.resize(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(bus_ids.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (z_bus[i].size() != bus_ids.size()) throw ValidationError("bus impedance samples do not match the buses");
        for (std::size_t b = 0; b < bus_ids.size(); ++b) out.values(i, b) = sigma_max(z_ref.values[i] - z_bus[i][b]);
    }
    return out;
}

DsiMatrix dsi_system(const AssembledSystem& sys, const TransferMatrixSamples& z_ref, const DsiSystemOptions& options) {
    auto report = check_conditions(sys.model, options.tolerances, sys.symmetry_modes);
    if (!report.passed()) throw ConditionError("assembled system fails the eigenvalue conditions: " + report.summary(), report);
    const auto z = bus_impedances(sys, z_ref.grid, options.impedance);
    return dsi_from_bus_impedances(z_ref.grid, sys.bus_ids, z, z_ref);
}

RangeAggregates aggregate_and_normalize(const DsiMatrix& dsi, const RangeSpec& ranges) {
    ranges.validate();
    const auto nr = static_cast<Eigen::Index>(ranges.ranges.size());
    const auto nb = dsi.values.cols();
    RangeAggregates out;
    out.bus_ids = dsi.bus_ids;
    out.max = RealMatrix::Zero(nr, nb);
    out.mean = RealMatrix::Zero(nr, nb);
    out.normalized = RealMatrix::Zero(nr, nb);
    out.degenerate.assign(ranges.ranges.size(), false);
    for (Eigen::Index r = 0; r < nr; ++r) {
        out.range_names.push_back(ranges.ranges[r].name);
        const auto idx = ranges.indices(dsi.grid, r);
        if (idx.empty()) throw ValidationError("range '" + ranges.ranges[r].name + "' contains no grid points");
        for (Eigen::Index b = 0; b < nb; ++b) {
            double mx = 0.0, sum = 0.0;
            for (auto i : idx) {
                const double v = dsi.values(static_cast<Eigen::Index>(i), b);
                mx = std::max(mx, v);
                sum += v;
            }
            out.max(r, b) = mx;
            out.mean(r, b) = sum / static_cast<double>(idx.size());
        }
        const double lo = out.max.row(r).minCoeff(), hi = out.max.row(r).maxCoeff();
        if (hi > lo) {
            out.normalized.row(r) = (out.max.row(r).array() - lo) / (hi - lo);
        } else {
            out.degenerate[r] = true;
        }
    }
    return out;
}

}  // namespace dsi
