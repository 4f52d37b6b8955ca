#pragma once

#include <string>
#include <vector>

#include "dsi/freqresp.hpp"
#include "dsi/network.hpp"

namespace dsi {

struct FrequencyRange {
    std::string name;
    double f_lo_hz = 0.0;
    double f_hi_hz = 0.0;
};

/// Ordered, non-overlapping ranges. Each range owns [lo, hi) except the last,
/// which is closed at hi.
struct RangeSpec {
    std::vector<FrequencyRange> ranges;

    /// Range 1 [0,20), Range 2 [20,40), Range 3 [40,100), Range 4 [100,1000].
    static RangeSpec default_ranges();

    void validate() const;

    /// Grid indices falling in range r.
    std::vector<std::size_t> indices(const FrequencyGrid& grid, std::size_t r) const;

    /// Throws unless every grid point falls in some range.
    void check_covers(const FrequencyGrid& grid) const;
};

/// sigma_max(Y_ref - Y_sus) per grid point. Both must be admittances: voltage
/// inputs (labels u*) and current outputs (labels i*).
std::vector<double> dsi_component(const TransferMatrixSamples& y_sus, const TransferMatrixSamples& y_ref);

struct RangeAggregates {
    Labels range_names;
    Labels bus_ids;
    RealMatrix max;         ///< ranges x buses
    RealMatrix mean;        ///< ranges x buses
    RealMatrix normalized;  ///< min-max of `max` across buses, per range
    std::vector<bool> degenerate;  ///< per range: all buses equal, scores set to 0
};

struct DsiMatrix {
    FrequencyGrid grid;
    Labels bus_ids;
    RealMatrix values;  ///< grid points x buses
};

/// How the bus impedance blocks are evaluated. The Hessenberg path reduces A
/// once and solves one triangular-like system per input and frequency; the
/// sparse path factors jwI - A per frequency and wins for large networks,
/// whose state matrices are mostly zeros.
enum class BusImpedanceMethod { automatic, hessenberg, sparse };

struct BusImpedanceOptions {
    SweepOptions sweep;
    BusImpedanceMethod method = BusImpedanceMethod::automatic;
    /// automatic picks the sparse path from this many states on.
    std::size_t sparse_from_states = 300;
};

struct DsiSystemOptions {
    BusImpedanceOptions impedance;
    ConditionTolerances tolerances;
};

/// Per-bus DSI from the diagonal 2x2 blocks of the bus impedance matrix. The
/// reference must be an impedance (current inputs i*, voltage outputs u*).
/// Fails with ConditionError when the assembled A does not pass its checks.
DsiMatrix dsi_system(const AssembledSystem& sys, const TransferMatrixSamples& z_ref,
                     const DsiSystemOptions& options = {});

/// Same, from bus impedance blocks that were already computed.
DsiMatrix dsi_from_bus_impedances(const FrequencyGrid& grid, const Labels& bus_ids,
                                  const std::vector<std::vector<ComplexMatrix>>& z_bus,
                                  const TransferMatrixSamples& z_ref);

/// Bus impedance blocks Z_bb(jw) for every bus and grid point: [point][bus].
std::vector<std::vector<ComplexMatrix>> bus_impedances(const AssembledSystem& sys, const FrequencyGrid& grid,
                                                       const BusImpedanceOptions& options = {});

/// Max and mean over each range, then min-max normalization across buses.
RangeAggregates aggregate_and_normalize(const DsiMatrix& dsi, const RangeSpec& ranges);

}  // namespace dsi
