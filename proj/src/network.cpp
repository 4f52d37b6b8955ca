#include <sstream>

#include "dsi/network.hpp"

namespace dsi {

std::size_t AssembledSystem::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < bus_ids.size(); ++i)
        if (bus_ids[i] == id) return i;
    throw ValidationError("unknown bus '" + id + "'");
}

namespace {

// A component connected to one or more buses: inputs are the bus voltages
// (a qd pair per bus), outputs the currents drawn from the same buses.
struct Element {
    std::string id;
    std::string kind;
    StateSpaceModel model;
    std::vector<std::size_t> buses;
};

VsbiReference vsbi_on_system_base(const Generator& g, const NetworkCase& net) {
    return VsbiReference::make(g.vsbi.scr, g.vsbi.x_over_r, net.omega0(), net.omega0())
        .rebased(g.rating_mva, net.base_mva);
}

}  // namespace

Eigen::Vector2d load_current(const NetworkCase& net, const OperatingPoint& op, const std::string& bus_id) {
    const auto b = net.bus_index(bus_id);
    const Complex s(net.buses[b].p_load, net.buses[b].q_load);
    return phasor_to_qd(std::conj(s / op.voltage(b)));
}

NetworkCase replace_with_vsbi(const NetworkCase& net, const std::string& generator_id, const VsbiSource& source) {
    NetworkCase out = net;
    auto& g = out.generators.at(net.generator_index(generator_id));
    g.kind = GeneratorKind::vsbi;
    g.vsbi = source;
    g.converter = ConverterParams{};
    g.converter.s_rated_mva = g.rating_mva;
    return out;
}

AssembledSystem assemble_system(const NetworkCase& net, const OperatingPoint& op, const AssemblyOptions& options) {
    net.validate();
    const std::size_t nb = net.buses.size();
    if (op.v_mag.size() != nb || op.gen_p.size() != net.generators.size())
        throw ValidationError("operating point does not match the case");
    if (!(options.synthetic_capacitance > 0.0)) throw ValidationError("synthetic capacitance must be > 0");
    const double w0 = net.omega0();

    AssembledSystem sys;
    sys.bus_ids = net.bus_ids();
    sys.op = op;

    std::vector<double> cap(nb, 0.0), cond(nb, 0.0);
    std::vector<Element> elements;

    for (const auto& br : net.branches) {
        const auto f = net.bus_index(br.params.from_bus), t = net.bus_index(br.params.to_bus);
        if (br.kind == BranchKind::line) {
            auto line = build_line_ss(br.params, w0);
            cap[f] += line.shunt_from_pu;
            cap[t] += line.shunt_to_pu;
            elements.push_back({br.id, "branch", std::move(line.series), {f, t}});
        } else {
            elements.push_back({br.id, "branch", build_transformer_ss(br.params, w0), {f, t}});
        }
    }

    for (std::size_t b = 0; b < nb; ++b) {
        const auto& bus = net.buses[b];
        if (bus.p_load != 0.0 || bus.q_load != 0.0) {
            const double v2 = op.v_mag[b] * op.v_mag[b];
            if (bus.p_load < 0.0) throw ValidationError("bus '" + bus.id + "': negative load p is not supported");
            if (bus.q_load >= 0.0) {
                elements.push_back({"load_" + bus.id, "load", build_load_ss(bus.p_load, bus.q_load, op.v_mag[b], w0), {b}});
            } else {
                // capacitive load: parallel conductance and capacitance
                cond[b] += bus.p_load / v2;
                cap[b] += -bus.q_load / v2;
            }
        }
        cond[b] += bus.g_shunt;
        if (bus.b_shunt > 0.0) {
            cap[b] += bus.b_shunt;
        } else if (bus.b_shunt < 0.0) {
            const double x = -1.0 / bus.b_shunt;
            elements.push_back(
                {"shunt_" + bus.id, "shunt", build_rl_branch_ss(x / options.shunt_reactor_x_over_r, x, w0, w0), {b}});
        }
    }
    for (std::size_t b = 0; b < nb; ++b)
        if (!(cap[b] > 0.0)) cap[b] = options.synthetic_capacitance;

    bool has_vsbi = false;
    std::optional<std::size_t> reference_gen;
    std::size_t slack_bus = 0;
    for (std::size_t b = 0; b < nb; ++b)
        if (net.buses[b].type == BusType::slack) slack_bus = b;

    std::vector<std::size_t> angle_state_local(net.generators.size(), 0);
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
        const auto& gen = net.generators[g];
        const auto b = net.bus_index(gen.bus);
        StateSpaceModel model;
        if (gen.kind == GeneratorKind::vsbi) {
            has_vsbi = true;
            const auto ref = vsbi_on_system_base(gen, net);
            model = build_rl_branch_ss(ref.r_pu, ref.x_pu, w0, w0);
        } else {
            auto lin = linearize_converter(gen.converter, generator_operating_point(net, op, g), w0);
            model = std::move(lin.model);
            angle_state_local[g] = lin.angle_state;
            if (b == slack_bus && !reference_gen) reference_gen = g;
        }
        sys.generator_models.emplace(gen.id, model);
        sys.generator_kinds.emplace(gen.id, gen.kind);
        elements.push_back({gen.id, to_string(gen.kind), std::move(model), {b}});
    }
    if (!has_vsbi && !reference_gen) {
        // no converter at the slack: use the first converter anywhere
        for (std::size_t g = 0; g < net.generators.size() && !reference_gen; ++g)
            if (net.generators[g].kind != GeneratorKind::vsbi) reference_gen = g;
    }

    // state layout: bus voltages, then the elements in order
    std::size_t n = 2 * nb;
    Labels states, inputs, outputs;
    for (const auto& id : sys.bus_ids) {
        states.push_back(id + ".u_q");
        states.push_back(id + ".u_d");
        inputs.push_back("i_q_f_" + id);
        inputs.push_back("i_d_f_" + id);
        outputs.push_back("u_q_" + id);
        outputs.push_back("u_d_" + id);
        sys.components.push_back({id, "bus", 2 * sys.components.size(), 2});
    }
    std::vector<std::size_t> offsets;
    for (const auto& e : elements) {
        offsets.push_back(n);
        sys.components.push_back({e.id, e.kind, n, e.model.num_states()});
        for (const auto& s : e.model.state_labels()) states.push_back(e.id + "." + s);
        n += e.model.num_states();
    }

    RealMatrix a = RealMatrix::Zero(n, n);
    RealMatrix bmat = RealMatrix::Zero(n, 2 * nb);
    RealMatrix c = RealMatrix::Zero(2 * nb, n);
    const Eigen::Matrix2d j = qd_j();
    const Eigen::Matrix2d eye = Eigen::Matrix2d::Identity();

    // (c/w0) du/dt = i_f - sum(i_drawn) - g u - c J u
    std::vector<double> inv_m(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        inv_m[b] = w0 / cap[b];
        a.block<2, 2>(2 * b, 2 * b) = -inv_m[b] * (cap[b] * j + cond[b] * eye);
        bmat.block<2, 2>(2 * b, 2 * b) = inv_m[b] * eye;
        c.block<2, 2>(2 * b, 2 * b) = eye;
    }
    for (std::size_t k = 0; k < elements.size(); ++k) {
        const auto& e = elements[k];
        const auto& m = e.model;
        const std::size_t o = offsets[k], ne = m.num_states();
        if (m.num_inputs() != 2 * e.buses.size() || m.num_outputs() != 2 * e.buses.size())
            throw ValidationError("element '" + e.id + "' has inconsistent ports");
        a.block(o, o, ne, ne) = m.A();
        for (std::size_t p = 0; p < e.buses.size(); ++p) {
            const std::size_t bp = e.buses[p];
            a.block(o, 2 * bp, ne, 2) += m.B().middleCols(2 * p, 2);
            a.block(2 * bp, o, 2, ne) -= inv_m[bp] * m.C().middleRows(2 * p, 2);
            for (std::size_t q = 0; q < e.buses.size(); ++q)
                a.block<2, 2>(2 * bp, 2 * e.buses[q]) -= inv_m[bp] * m.D().block(2 * p, 2 * q, 2, 2);
        }
    }

    sys.bus_capacitance = cap;
    if (!has_vsbi && reference_gen) {
        const auto g = *reference_gen;
        // generators are the last elements
        const std::size_t delta = offsets[elements.size() - net.generators.size() + g] + angle_state_local[g];
        for (std::size_t b = 0; b < nb; ++b) {
            const Eigen::Vector2d v0 = phasor_to_qd(op.voltage(b));
            c.block<2, 1>(2 * b, delta) -= j * v0;
        }
        sys.symmetry_modes = 1;
        sys.angle_reference = net.generators[g].id;
    }

    sys.model = StateSpaceModel(std::move(a), std::move(bmat), std::move(c), RealMatrix::Zero(2 * nb, 2 * nb),
                                std::move(states), std::move(inputs), std::move(outputs));
    return sys;
}

StateSpaceModel extract_subsystem(const AssembledSystem& sys, const std::string& generator_id) {
    auto it = sys.generator_models.find(generator_id);
    if (it == sys.generator_models.end()) {
        std::ostringstream os;
        os << "unknown generator '" << generator_id << "'; valid ids:";
        for (const auto& [id, m] : sys.generator_models) os << ' ' << id;
        throw ValidationError(os.str());
    }
    return it->second;
}

}  // namespace dsi
