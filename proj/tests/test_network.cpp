#include <doctest.h>

#include "dsi/case_io.hpp"
#include "dsi/dsi.hpp"
#include "oracles.hpp"

using namespace dsi;

namespace {

const char* kThreeBus = R"({
  "name": "three_bus",
  "base": {"mva": 100, "kv": 230, "f_hz": 50},
  "buses": [
    {"id": "1", "type": "slack", "v_set": 1.02},
    {"id": "2", "type": "pq"},
    {"id": "3", "type": "pq", "p_load": 0.8, "q_load": 0.3}
  ],
  "branches": [
    {"id": "l12", "kind": "line", "from": "1", "to": "2", "r": 0.01, "x": 0.1, "b": 0.2},
    {"id": "t23", "kind": "transformer", "from": "2", "to": "3", "r": 0.002, "x": 0.08, "b": 0.0}
  ],
  "generators": [
    {"id": "grid", "bus": "1", "type": "vsbi", "params": {"s_base": 200, "scr": 5, "x_over_r": 8}}
  ],
  "analysis": {"f_min_hz": 0.15, "f_max_hz": 1000, "f_step_hz": 0.15,
               "ranges": [{"name": "all", "f_lo_hz": 0, "f_hi_hz": 1000}],
               "reference": {"scr": 15, "x_over_r": 10}}
})";

std::string case_path(const std::string& name) { return std::string(DSI_CASE_DIR) + "/" + name; }

Eigen::Matrix2cd series_rl(double r, double x, double w) {
    return oracle::rl_admittance(r, x, kBaseAngularFrequency, w);
}

// qd shunt capacitance: i = (b/w0) dv/dt + b J v
Eigen::Matrix2cd shunt_c(double b, double w) {
    Eigen::Matrix2cd y;
    y << Complex(0.0, w * b / kBaseAngularFrequency), Complex(b, 0.0), Complex(-b, 0.0),
        Complex(0.0, w * b / kBaseAngularFrequency);
    return y;
}

}  // namespace

TEST_CASE("bus admittance matches the pi-section nodal matrix") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto& net = cf.network;
    std::vector<oracle::PiBranch> br;
    for (const auto& b : net.branches)
        br.push_back({static_cast<int>(net.bus_index(b.params.from_bus)), static_cast<int>(net.bus_index(b.params.to_bus)),
                      b.params.r_pu, b.params.x_pu, b.params.b_pu});
    const auto y = bus_admittance(net);
    CHECK((y - oracle::pi_ybus(static_cast<int>(net.buses.size()), br)).norm() < 1e-12);
}

TEST_CASE("power flow satisfies the bus power balance") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto& net = cf.network;
    const auto op = solve_power_flow(net);
    CHECK(op.iterations <= 10);
    const auto n = static_cast<Eigen::Index>(net.buses.size());
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = op.voltage(static_cast<std::size_t>(i));
    std::vector<oracle::PiBranch> br;
    for (const auto& b : net.branches)
        br.push_back({static_cast<int>(net.bus_index(b.params.from_bus)), static_cast<int>(net.bus_index(b.params.to_bus)),
                      b.params.r_pu, b.params.x_pu, b.params.b_pu});
    const Eigen::VectorXcd s = v.array() * (oracle::pi_ybus(static_cast<int>(n), br) * v).conjugate().array();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = net.buses[static_cast<std::size_t>(i)];
        Complex gen(0.0, 0.0);
        for (std::size_t g = 0; g < net.generators.size(); ++g)
            if (net.generators[g].bus == bus.id) gen += Complex(op.gen_p[g], op.gen_q[g]);
        const Complex expected = gen - Complex(bus.p_load, bus.q_load);
        CHECK(std::abs(s(i) - expected) < 1e-8);
        if (bus.type != BusType::pq) CHECK(std::abs(v(i)) == doctest::Approx(bus.v_set).epsilon(1e-10));
    }
    // pv units deliver their dispatch
    for (std::size_t g = 0; g < net.generators.size(); ++g)
        if (net.buses[net.bus_index(net.generators[g].bus)].type == BusType::pv)
            CHECK(op.gen_p[g] == doctest::Approx(net.generators[g].p_pu).epsilon(1e-10));
}

TEST_CASE("power flow divergence is a numerical error") {
    auto cf = parse_case(kThreeBus);
    cf.network.buses[2].p_load = 50.0;
    CHECK_THROWS_AS(solve_power_flow(cf.network), NumericalError);
}

TEST_CASE("bus impedances of a passive network match a qd nodal solve") {
    const auto cf = parse_case(kThreeBus);
    const auto& net = cf.network;
    const auto op = solve_power_flow(net);
    const auto sys = assemble_system(net, op);
    REQUIRE(sys.symmetry_modes == 0);

    // grid source: SCR 5 on 200 MVA, i.e. |Z| = 0.1 on the system base
    const double zg = 1.0 / (5.0 * 200.0 / 100.0);
    const double rg = zg / std::sqrt(1.0 + 64.0), xg = 8.0 * rg;
    const double v3 = op.v_mag[2];
    const Complex zl = v3 * v3 / std::conj(Complex(0.8, 0.3));

    const auto g = FrequencyGrid({2.0 * kPi * 0.15, 2.0 * kPi * 20.0, 2.0 * kPi * 171.0, 2.0 * kPi * 999.0});
    BusImpedanceOptions hz, sz;
    hz.method = BusImpedanceMethod::hessenberg;
    sz.method = BusImpedanceMethod::sparse;
    const auto zh = bus_impedances(sys, g, hz);
    const auto zs = bus_impedances(sys, g, sz);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double w = g.omega(k);
        Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(6, 6);
        const auto add_series = [&](int a, int b, const Eigen::Matrix2cd& ys) {
            y.block(2 * a, 2 * a, 2, 2) += ys;
            y.block(2 * b, 2 * b, 2, 2) += ys;
            y.block(2 * a, 2 * b, 2, 2) -= ys;
            y.block(2 * b, 2 * a, 2, 2) -= ys;
        };
        add_series(0, 1, series_rl(0.01, 0.1, w));
        add_series(1, 2, series_rl(0.002, 0.08, w));
        y.block(0, 0, 2, 2) += series_rl(rg, xg, w) + shunt_c(0.1, w);
        y.block(2, 2, 2, 2) += shunt_c(0.1, w);
        y.block(4, 4, 2, 2) += series_rl(zl.real(), zl.imag(), w) + shunt_c(cf.analysis.synthetic_capacitance, w);
        const Eigen::MatrixXcd z = y.inverse();
        for (int b = 0; b < 3; ++b) {
            CAPTURE(b);
            CAPTURE(w);
            const Eigen::Matrix2cd zo = z.block(2 * b, 2 * b, 2, 2);
            CHECK((zh[k][static_cast<std::size_t>(b)] - zo).norm() / zo.norm() < 1e-9);
            CHECK((zs[k][static_cast<std::size_t>(b)] - zo).norm() / zo.norm() < 1e-9);
        }
    }
}

TEST_CASE("sparse and Hessenberg bus impedances agree on the 9-bus case") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto sys = assemble_system(cf.network, solve_power_flow(cf.network));
    CHECK(sys.symmetry_modes == 1);
    REQUIRE(sys.angle_reference.has_value());
    const auto g = FrequencyGrid::from_hz(0.15, 1000.0, 9.85);
    BusImpedanceOptions hz, sz;
    hz.method = BusImpedanceMethod::hessenberg;
    sz.method = BusImpedanceMethod::sparse;
    const auto a = bus_impedances(sys, g, hz);
    const auto b = bus_impedances(sys, g, sz);
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        for (std::size_t bus = 0; bus < sys.bus_ids.size(); ++bus)
            worst = std::max(worst, (a[k][bus] - b[k][bus]).norm() / a[k][bus].norm());
    CHECK(worst < 1e-8);
}

TEST_CASE("assembled 9-bus system is stable and its subsystems are the converter models") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto op = solve_power_flow(cf.network);
    const auto sys = assemble_system(cf.network, op);
    const auto rep = check_conditions(sys.model, {}, sys.symmetry_modes);
    CHECK(rep.passed());
    CHECK(sys.model.num_inputs() == 18);
    for (std::size_t g = 0; g < cf.network.generators.size(); ++g) {
        const auto& gen = cf.network.generators[g];
        const auto sub = extract_subsystem(sys, gen.id);
        const auto lin = linearize_converter(gen.converter, generator_operating_point(cf.network, op, g),
                                             cf.network.omega0());
        CHECK((sub.A() - lin.model.A()).norm() <= 1e-12 * lin.model.A().norm());
        CHECK(sub.num_inputs() == 2);
    }
}

TEST_CASE("unknown generator ids are rejected with the valid ones listed") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto sys = assemble_system(cf.network, solve_power_flow(cf.network));
    try {
        extract_subsystem(sys, "gfor2");
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("gfor1") != std::string::npos);
        CHECK(msg.find("gfol4") != std::string::npos);
    }
}

TEST_CASE("replacing a converter by a source keeps its dispatch") {
    const auto cf = load_case(case_path("ieee9_modified.json"));
    const auto rep = replace_with_vsbi(cf.network, "gfol4", VsbiSource{15.0, 10.0});
    const auto& g = rep.generators[rep.generator_index("gfol4")];
    CHECK(g.kind == GeneratorKind::vsbi);
    CHECK(g.p_pu == cf.network.generators[cf.network.generator_index("gfol4")].p_pu);
    const auto op_a = solve_power_flow(cf.network);
    const auto op_b = solve_power_flow(rep);
    for (std::size_t b = 0; b < op_a.v_mag.size(); ++b) CHECK(op_b.v_mag[b] == doctest::Approx(op_a.v_mag[b]));
    // with a source in the network there is no rotational symmetry left
    CHECK(assemble_system(rep, op_b).symmetry_modes == 0);
}

TEST_CASE("load current matches the power drawn at the operating voltage") {
    const auto cf = parse_case(kThreeBus);
    const auto op = solve_power_flow(cf.network);
    const Eigen::Vector2d i = load_current(cf.network, op, "3");
    const Complex s = op.voltage(2) * std::conj(qd_to_phasor(i));
    CHECK(s.real() == doctest::Approx(0.8).epsilon(1e-10));
    CHECK(s.imag() == doctest::Approx(0.3).epsilon(1e-10));
}
