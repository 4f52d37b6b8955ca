#include <algorithm>
#include <cmath>
#include <queue>
#include <set>
#include <sstream>

#include "dsi/network.hpp"

namespace dsi {

const char* to_string(BusType type) {
    switch (type) {
        case BusType::slack: return "slack";
        case BusType::pv: return "pv";
        case BusType::pq: return "pq";
    }
    return "?";
}

const char* to_string(BranchKind kind) { return kind == BranchKind::line ? "line" : "transformer"; }

const char* to_string(GeneratorKind kind) {
    switch (kind) {
        case GeneratorKind::gfol: return "gfol";
        case GeneratorKind::gfor: return "gfor";
        case GeneratorKind::vsbi: return "vsbi";
    }
    return "?";
}

std::size_t NetworkCase::bus_index(const std::string& id) const {
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id) return i;
    throw ValidationError("unknown bus '" + id + "'");
}

std::size_t NetworkCase::generator_index(const std::string& id) const {
    for (std::size_t i = 0; i < generators.size(); ++i)
        if (generators[i].id == id) return i;
    std::ostringstream os;
    os << "unknown generator '" << id << "'; valid ids:";
    for (const auto& g : generators) os << ' ' << g.id;
    throw ValidationError(os.str());
}

Labels NetworkCase::bus_ids() const {
    Labels ids;
    for (const auto& b : buses) ids.push_back(b.id);
    return ids;
}

Labels NetworkCase::generator_ids() const {
    Labels ids;
    for (const auto& g : generators) ids.push_back(g.id);
    return ids;
}

void NetworkCase::validate() const {
    if (!(base_mva > 0.0)) throw ValidationError("base mva must be > 0");
    if (!(base_kv > 0.0)) throw ValidationError("base kv must be > 0");
    if (!(f0_hz > 0.0)) throw ValidationError("f0 must be > 0");
    if (buses.empty()) throw ValidationError("case has no buses");

    std::set<std::string> ids;
    std::size_t slacks = 0;
    for (const auto& b : buses) {
        if (b.id.empty()) throw ValidationError("bus with empty id");
        if (!ids.insert(b.id).second) throw ValidationError("duplicate bus id '" + b.id + "'");
        if (b.type == BusType::slack) ++slacks;
        if (b.type != BusType::pq && !(b.v_set > 0.0)) throw ValidationError("bus '" + b.id + "': v_set must be > 0");
        for (double v : {b.v_set, b.angle_set, b.p_load, b.q_load, b.g_shunt, b.b_shunt})
            if (!std::isfinite(v)) throw ValidationError("bus '" + b.id + "': non-finite value");
    }
    if (slacks != 1) throw ValidationError("case needs exactly one slack bus");

    std::set<std::string> branch_ids;
    for (const auto& br : branches) {
        if (!branch_ids.insert(br.id).second) throw ValidationError("duplicate branch id '" + br.id + "'");
        bus_index(br.params.from_bus);
        bus_index(br.params.to_bus);
        if (br.params.from_bus == br.params.to_bus) throw ValidationError("branch '" + br.id + "' is a self loop");
        if (br.params.r_pu < 0.0 || br.params.x_pu < 0.0 || (br.params.r_pu == 0.0 && br.params.x_pu == 0.0))
            throw ValidationError("branch '" + br.id + "': degenerate impedance");
        if (br.kind == BranchKind::transformer && br.params.b_pu != 0.0)
            throw ValidationError("transformer '" + br.id + "' cannot have charging susceptance");
        if (br.params.b_pu < 0.0) throw ValidationError("branch '" + br.id + "': b must be >= 0");
    }

    std::set<std::string> gen_ids;
    std::vector<int> gens_at_bus(buses.size(), 0);
    for (const auto& g : generators) {
        if (!gen_ids.insert(g.id).second) throw ValidationError("duplicate generator id '" + g.id + "'");
        ++gens_at_bus[bus_index(g.bus)];
        if (!(g.rating_mva > 0.0)) throw ValidationError("generator '" + g.id + "': rating must be > 0");
        if (g.kind == GeneratorKind::vsbi) {
            if (!(g.vsbi.scr > 0.0) || !(g.vsbi.x_over_r >= 0.0))
                throw ValidationError("generator '" + g.id + "': invalid vsbi strength");
        } else {
            const bool gfol = g.kind == GeneratorKind::gfol;
            if ((g.converter.mode == ConverterMode::gfol) != gfol)
                throw ValidationError("generator '" + g.id + "': converter mode does not match type");
            if (g.converter.s_rated_mva != g.rating_mva)
                throw ValidationError("generator '" + g.id + "': s_base differs from rating");
            try {
                g.converter.validate();
            } catch (const ValidationError& e) {
                throw ValidationError("generator '" + g.id + "': " + e.what());
            }
        }
    }
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].type != BusType::pq && gens_at_bus[i] == 0)
            throw ValidationError("bus '" + buses[i].id + "' regulates voltage but has no generator");

    // connectivity
    std::vector<std::vector<std::size_t>> adj(buses.size());
    for (const auto& br : branches) {
        const auto f = bus_index(br.params.from_bus), t = bus_index(br.params.to_bus);
        adj[f].push_back(t);
        adj[t].push_back(f);
    }
    std::vector<bool> seen(buses.size(), false);
    std::queue<std::size_t> todo;
    todo.push(0);
    seen[0] = true;
    while (!todo.empty()) {
        const auto k = todo.front();
        todo.pop();
        for (auto n : adj[k])
            if (!seen[n]) {
                seen[n] = true;
                todo.push(n);
            }
    }
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (!seen[i]) throw ValidationError("bus '" + buses[i].id + "' is not connected to the network");
}

ComplexMatrix bus_admittance(const NetworkCase& net) {
    const std::size_t n = net.buses.size();
    ComplexMatrix y = ComplexMatrix::Zero(n, n);
    for (const auto& br : net.branches) {
        const auto f = net.bus_index(br.params.from_bus), t = net.bus_index(br.params.to_bus);
        const Complex ys = 1.0 / Complex(br.params.r_pu, br.params.x_pu);
        const Complex ysh(0.0, 0.5 * br.params.b_pu);
        y(f, f) += ys + ysh;
        y(t, t) += ys + ysh;
        y(f, t) -= ys;
        y(t, f) -= ys;
    }
    for (std::size_t i = 0; i < n; ++i) y(i, i) += Complex(net.buses[i].g_shunt, net.buses[i].b_shunt);
    return y;
}

namespace {

// First generator at a bus regulates; the rest keep their dispatch.
std::vector<std::vector<std::size_t>> generators_by_bus(const NetworkCase& net) {
    std::vector<std::vector<std::size_t>> by_bus(net.buses.size());
    for (std::size_t g = 0; g < net.generators.size(); ++g) by_bus[net.bus_index(net.generators[g].bus)].push_back(g);
    return by_bus;
}

}  // namespace

OperatingPoint solve_power_flow(const NetworkCase& net, const PowerFlowOptions& options) {
    net.validate();
    const std::size_t n = net.buses.size();
    const ComplexMatrix ybus = bus_admittance(net);
    const auto by_bus = generators_by_bus(net);

    Eigen::VectorXd p_spec = Eigen::VectorXd::Zero(n), q_spec = Eigen::VectorXd::Zero(n);
    for (std::size_t i = 0; i < n; ++i) {
        p_spec(i) = -net.buses[i].p_load;
        q_spec(i) = -net.buses[i].q_load;
        for (auto g : by_bus[i]) {
            p_spec(i) += net.generators[g].p_pu;
            q_spec(i) += net.generators[g].q_pu;
        }
    }

    Eigen::VectorXd vm(n), va = Eigen::VectorXd::Zero(n);
    std::vector<std::size_t> pvpq, pq;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        vm(i) = b.type == BusType::pq ? 1.0 : b.v_set;
        if (b.type == BusType::slack) va(i) = b.angle_set;
        if (b.type != BusType::slack) pvpq.push_back(i);
        if (b.type == BusType::pq) pq.push_back(i);
    }
    const std::size_t npv = pvpq.size(), npq = pq.size();

    auto injections = [&](Eigen::VectorXcd& v, Eigen::VectorXcd& s) {
        v.resize(n);
        for (std::size_t i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
        s = v.cwiseProduct((ybus * v).conjugate());
    };

    OperatingPoint op;
    Eigen::VectorXcd v, s;
    double mismatch = 0.0;
    int it = 0;
    for (;;) {
        ++it;
        injections(v, s);
        Eigen::VectorXd f(npv + npq);
        for (std::size_t k = 0; k < npv; ++k) f(k) = p_spec(pvpq[k]) - s(pvpq[k]).real();
        for (std::size_t k = 0; k < npq; ++k) f(npv + k) = q_spec(pq[k]) - s(pq[k]).imag();
        mismatch = f.size() ? f.cwiseAbs().maxCoeff() : 0.0;
        if (!std::isfinite(mismatch)) break;
        if (mismatch < options.tolerance) break;
        if (it >= options.max_iterations) break;

        // dS/dVa = j diag(V) conj(diag(I) - Y diag(V)),
        // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
        const Eigen::VectorXcd ibus = ybus * v;
        const Eigen::VectorXcd vnorm = v.cwiseQuotient(vm.cast<Complex>());
        ComplexMatrix ds_dva = ComplexMatrix::Zero(n, n), ds_dvm = ComplexMatrix::Zero(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                const Complex yik = ybus(i, k);
                ds_dva(i, k) = Complex(0, 1) * v(i) * std::conj(-yik * v(k));
                ds_dvm(i, k) = v(i) * std::conj(yik * vnorm(k));
            }
            ds_dva(i, i) += Complex(0, 1) * v(i) * std::conj(ibus(i));
            ds_dvm(i, i) += std::conj(ibus(i)) * vnorm(i);
        }
        RealMatrix jac(npv + npq, npv + npq);
        for (std::size_t r = 0; r < npv; ++r) {
            for (std::size_t c = 0; c < npv; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
            for (std::size_t c = 0; c < npq; ++c) jac(r, npv + c) = ds_dvm(pvpq[r], pq[c]).real();
        }
        for (std::size_t r = 0; r < npq; ++r) {
            for (std::size_t c = 0; c < npv; ++c) jac(npv + r, c) = ds_dva(pq[r], pvpq[c]).imag();
            for (std::size_t c = 0; c < npq; ++c) jac(npv + r, npv + c) = ds_dvm(pq[r], pq[c]).imag();
        }
        Eigen::FullPivLU<RealMatrix> lu(jac);
        if (!lu.isInvertible()) break;
        const Eigen::VectorXd dx = lu.solve(f);
        for (std::size_t k = 0; k < npv; ++k) va(pvpq[k]) += dx(k);
        for (std::size_t k = 0; k < npq; ++k) vm(pq[k]) += dx(npv + k);
    }
    if (!(mismatch < options.tolerance)) {
        std::ostringstream os;
        os << "power flow did not converge in " << it << " iterations; max mismatch " << mismatch << " pu";
        throw NumericalError(os.str());
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!(vm(i) > 0.0)) throw NumericalError("power flow converged to a non-positive voltage magnitude");

    op.v_mag.assign(vm.data(), vm.data() + n);
    op.v_angle.assign(va.data(), va.data() + n);
    op.iterations = it;
    op.max_mismatch = mismatch;
    op.gen_p.resize(net.generators.size());
    op.gen_q.resize(net.generators.size());
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
        op.gen_p[g] = net.generators[g].p_pu;
        op.gen_q[g] = net.generators[g].q_pu;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& b = net.buses[i];
        if (b.type == BusType::pq || by_bus[i].empty()) continue;
        const auto lead = by_bus[i].front();
        double p_others = 0.0, q_others = 0.0;
        for (auto g : by_bus[i])
            if (g != lead) {
                p_others += net.generators[g].p_pu;
                q_others += net.generators[g].q_pu;
            }
        if (b.type == BusType::slack) op.gen_p[lead] = s(i).real() + b.p_load - p_others;
        op.gen_q[lead] = s(i).imag() + b.q_load - q_others;
    }
    return op;
}

BusOperatingPoint generator_operating_point(const NetworkCase& net, const OperatingPoint& op, std::size_t gen) {
    const auto bus = net.bus_index(net.generators.at(gen).bus);
    return {op.v_mag.at(bus), op.v_angle.at(bus), op.gen_p.at(gen), op.gen_q.at(gen), net.base_mva};
}

}  // namespace dsi
