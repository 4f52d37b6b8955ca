#include "dsi/case_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dsi {

using Json = nlohmann::ordered_json;

namespace {

// Object reader that remembers which keys were consumed, so anything left
// over can be rejected.
class Obj {
public:
    Obj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& at(const std::string& key) {
        if (!j_.contains(key)) throw ValidationError(path_ + ": missing required key '" + key + "'");
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number()) throw ValidationError(path_ + "." + key + ": expected a number");
        return v.get<double>();
    }

    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::optional<double> optional_number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return number(key);
    }

    std::string string(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_string()) throw ValidationError(path_ + "." + key + ": expected a string");
        return v.get<std::string>();
    }

    const Json& array(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_array()) throw ValidationError(path_ + "." + key + ": expected an array");
        return v;
    }

    std::string path(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ValidationError(path_ + ": unknown key '" + it.key() + "'");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

BusType parse_bus_type(const std::string& s, const std::string& where) {
    if (s == "slack") return BusType::slack;
    if (s == "pv") return BusType::pv;
    if (s == "pq") return BusType::pq;
    throw ValidationError(where + ": bus type must be slack, pv or pq");
}

ConverterParams parse_converter(Obj& o, ConverterMode mode) {
    ConverterParams p;
    p.mode = mode;
    p.s_rated_mva = o.number("s_base");
    p.x_vsc = o.number("x_vsc");
    p.r_vsc = o.number("r_vsc");
    p.c_vsc = o.number("c_vsc");
    p.r_tr = o.number("r_tr");
    p.x_tr = o.number("x_tr");
    p.tau_cc = o.number("tau_cc");
    p.m_p = o.number("m_p");
    p.m_q = o.number("m_q");
    p.tau_pll = o.optional_number("tau_pll");
    p.tau_vc = o.optional_number("tau_vc");
    p.tau_pq = o.optional_number("tau_pq");
    p.omega_p = o.optional_number("omega_p");
    p.omega_q = o.optional_number("omega_q");
    p.omega_f = o.optional_number("omega_f");
    p.omega_u = o.optional_number("omega_u");
    return p;
}

Json converter_json(const ConverterParams& p) {
    Json j;
    j["s_base"] = p.s_rated_mva;
    j["x_vsc"] = p.x_vsc;
    j["r_vsc"] = p.r_vsc;
    j["c_vsc"] = p.c_vsc;
    j["r_tr"] = p.r_tr;
    j["x_tr"] = p.x_tr;
    j["tau_cc"] = p.tau_cc;
    j["m_p"] = p.m_p;
    j["m_q"] = p.m_q;
    const std::pair<const char*, const std::optional<double>*> extra[] = {
        {"tau_pll", &p.tau_pll}, {"tau_vc", &p.tau_vc},   {"tau_pq", &p.tau_pq},   {"omega_p", &p.omega_p},
        {"omega_q", &p.omega_q}, {"omega_f", &p.omega_f}, {"omega_u", &p.omega_u}};
    for (const auto& [name, value] : extra)
        if (value->has_value()) j[name] = **value;
    return j;
}

}  // namespace

CaseFile parse_case(const std::string& json_text) {
    Json root;
    try {
        root = Json::parse(json_text);
    } catch (const Json::parse_error& e) {
        throw ValidationError(std::string("case file is not valid JSON: ") + e.what());
    }
    CaseFile out;
    auto& net = out.network;
    Obj top(root, "case");
    if (top.has("name")) net.name = top.string("name");

    {
        Obj base(top.at("base"), "case.base");
        net.base_mva = base.number("mva");
        net.base_kv = base.number("kv");
        net.f0_hz = base.number("f_hz");
        base.finish();
    }

    const auto& buses = top.array("buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        Obj b(buses[i], "case.buses[" + std::to_string(i) + "]");
        Bus bus;
        bus.id = b.string("id");
        bus.type = parse_bus_type(b.string("type"), b.path("type"));
        bus.v_set = b.number("v_set", 1.0);
        bus.angle_set = b.number("angle_rad", 0.0);
        bus.p_load = b.number("p_load", 0.0);
        bus.q_load = b.number("q_load", 0.0);
        bus.g_shunt = b.number("g_shunt", 0.0);
        bus.b_shunt = b.number("b_shunt", 0.0);
        b.finish();
        net.buses.push_back(std::move(bus));
    }

    const auto& branches = top.array("branches");
    for (std::size_t i = 0; i < branches.size(); ++i) {
        Obj b(branches[i], "case.branches[" + std::to_string(i) + "]");
        Branch br;
        br.id = b.string("id");
        const auto kind = b.string("kind");
        if (kind == "line") {
            br.kind = BranchKind::line;
        } else if (kind == "transformer") {
            br.kind = BranchKind::transformer;
        } else {
            throw ValidationError(b.path("kind") + ": must be line or transformer");
        }
        br.params.from_bus = b.string("from");
        br.params.to_bus = b.string("to");
        br.params.r_pu = b.number("r");
        br.params.x_pu = b.number("x");
        br.params.b_pu = b.number("b", 0.0);
        b.finish();
        net.branches.push_back(std::move(br));
    }

    const auto& gens = top.array("generators");
    for (std::size_t i = 0; i < gens.size(); ++i) {
        Obj g(gens[i], "case.generators[" + std::to_string(i) + "]");
        Generator gen;
        gen.id = g.string("id");
        gen.bus = g.string("bus");
        const auto type = g.string("type");
        gen.p_pu = g.number("p", 0.0);
        gen.q_pu = g.number("q", 0.0);
        Obj params(g.at("params"), g.path("params"));
        if (type == "vsbi") {
            gen.kind = GeneratorKind::vsbi;
            gen.rating_mva = params.number("s_base");
            gen.vsbi.scr = params.number("scr");
            gen.vsbi.x_over_r = params.number("x_over_r");
            gen.converter.s_rated_mva = gen.rating_mva;
        } else if (type == "gfol" || type == "gfor") {
            gen.kind = type == "gfol" ? GeneratorKind::gfol : GeneratorKind::gfor;
            gen.converter = parse_converter(params, type == "gfol" ? ConverterMode::gfol : ConverterMode::gfor);
            gen.rating_mva = gen.converter.s_rated_mva;
            try {
                gen.converter.validate();
            } catch (const ValidationError& e) {
                throw ValidationError(g.path("params") + ": " + e.what());
            }
        } else {
            throw ValidationError(g.path("type") + ": must be gfol, gfor or vsbi");
        }
        params.finish();
        g.finish();
        net.generators.push_back(std::move(gen));
    }

    if (top.has("analysis")) {
        auto& an = out.analysis;
        Obj a(top.at("analysis"), "case.analysis");
        an.f_min_hz = a.number("f_min_hz", an.f_min_hz);
        an.f_max_hz = a.number("f_max_hz", an.f_max_hz);
        an.f_step_hz = a.number("f_step_hz", an.f_step_hz);
        an.synthetic_capacitance = a.number("synthetic_capacitance", an.synthetic_capacitance);
        if (a.has("ranges")) {
            an.ranges.ranges.clear();
            const auto& rs = a.array("ranges");
            for (std::size_t i = 0; i < rs.size(); ++i) {
                Obj r(rs[i], a.path("ranges") + "[" + std::to_string(i) + "]");
                an.ranges.ranges.push_back({r.string("name"), r.number("f_lo_hz"), r.number("f_hi_hz")});
                r.finish();
            }
        }
        if (a.has("reference")) {
            Obj r(a.at("reference"), a.path("reference"));
            an.reference.scr = r.number("scr");
            an.reference.x_over_r = r.number("x_over_r");
            r.finish();
        }
        a.finish();
    }
    top.finish();

    net.validate();
    out.analysis.ranges.validate();
    out.analysis.grid();  // throws on a bad grid
    if (!(out.analysis.reference.scr > 0.0) || !(out.analysis.reference.x_over_r >= 0.0))
        throw ValidationError("case.analysis.reference: scr must be > 0 and x_over_r >= 0");
    if (!(out.analysis.synthetic_capacitance > 0.0))
        throw ValidationError("case.analysis.synthetic_capacitance must be > 0");
    return out;
}

CaseFile load_case(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open case file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

std::string serialize_case(const CaseFile& c) {
    const auto& net = c.network;
    Json root;
    root["name"] = net.name;
    root["base"] = {{"mva", net.base_mva}, {"kv", net.base_kv}, {"f_hz", net.f0_hz}};
    root["buses"] = Json::array();
    for (const auto& b : net.buses) {
        Json j;
        j["id"] = b.id;
        j["type"] = to_string(b.type);
        j["v_set"] = b.v_set;
        j["angle_rad"] = b.angle_set;
        j["p_load"] = b.p_load;
        j["q_load"] = b.q_load;
        j["g_shunt"] = b.g_shunt;
        j["b_shunt"] = b.b_shunt;
        root["buses"].push_back(std::move(j));
    }
    root["branches"] = Json::array();
    for (const auto& br : net.branches) {
        Json j;
        j["id"] = br.id;
        j["kind"] = to_string(br.kind);
        j["from"] = br.params.from_bus;
        j["to"] = br.params.to_bus;
        j["r"] = br.params.r_pu;
        j["x"] = br.params.x_pu;
        j["b"] = br.params.b_pu;
        root["branches"].push_back(std::move(j));
    }
    root["generators"] = Json::array();
    for (const auto& g : net.generators) {
        Json j;
        j["id"] = g.id;
        j["bus"] = g.bus;
        j["type"] = to_string(g.kind);
        j["p"] = g.p_pu;
        j["q"] = g.q_pu;
        if (g.kind == GeneratorKind::vsbi) {
            j["params"] = {{"s_base", g.rating_mva}, {"scr", g.vsbi.scr}, {"x_over_r", g.vsbi.x_over_r}};
        } else {
            j["params"] = converter_json(g.converter);
        }
        root["generators"].push_back(std::move(j));
    }
    const auto& an = c.analysis;
    Json a;
    a["f_min_hz"] = an.f_min_hz;
    a["f_max_hz"] = an.f_max_hz;
    a["f_step_hz"] = an.f_step_hz;
    a["ranges"] = Json::array();
    for (const auto& r : an.ranges.ranges)
        a["ranges"].push_back({{"name", r.name}, {"f_lo_hz", r.f_lo_hz}, {"f_hi_hz", r.f_hi_hz}});
    a["reference"] = {{"scr", an.reference.scr}, {"x_over_r", an.reference.x_over_r}};
    a["synthetic_capacitance"] = an.synthetic_capacitance;
    root["analysis"] = std::move(a);
    return root.dump(2) + "\n";
}

}  // namespace dsi
