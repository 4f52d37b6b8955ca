#include "dsi/cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsi/case_io.hpp"
#include "dsi/dsi.hpp"
#include "dsi/timedomain.hpp"

namespace dsi {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Flags shared by every subcommand that runs an analysis.
struct CommonFlags {
    std::string case_path;
    std::string out_dir = ".";
    std::optional<double> f_min, f_max, f_step;
    std::optional<double> ref_scr, ref_xr;
    unsigned threads = 0;
    ConditionTolerances tol;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("case", f.case_path, "case file (JSON)")->required();
    cmd->add_option("--out-dir", f.out_dir, "directory for CSV files and report.json");
    cmd->add_option("--fmin", f.f_min, "lowest grid frequency in Hz");
    cmd->add_option("--fmax", f.f_max, "highest grid frequency in Hz");
    cmd->add_option("--fstep", f.f_step, "grid step in Hz");
    cmd->add_option("--ref-scr", f.ref_scr, "reference short-circuit ratio (system base)");
    cmd->add_option("--ref-xr", f.ref_xr, "reference X/R ratio");
    cmd->add_option("--threads", f.threads, "worker threads (0: DSI_THREADS or 1)");
    cmd->add_option("--tol-repeated", f.tol.repeated, "relative distance below which eigenvalues count as repeated");
    cmd->add_option("--tol-zero", f.tol.zero_real, "relative |Re| below which an eigenvalue counts as imaginary");
    cmd->add_option("--tol-unstable", f.tol.unstable, "real part above which an eigenvalue counts as unstable");
    cmd->add_option("--tol-uncontrollable", f.tol.uncontrollable,
                    "PBH threshold for waiving repeated uncontrollable modes");
}

CaseFile load_with_overrides(const CommonFlags& f) {
    auto cf = load_case(f.case_path);
    auto& an = cf.analysis;
    if (f.f_min) an.f_min_hz = *f.f_min;
    if (f.f_max) an.f_max_hz = *f.f_max;
    if (f.f_step) an.f_step_hz = *f.f_step;
    if (f.ref_scr) an.reference.scr = *f.ref_scr;
    if (f.ref_xr) an.reference.x_over_r = *f.ref_xr;
    if (!(an.reference.scr > 0.0) || !(an.reference.x_over_r >= 0.0))
        throw ValidationError("reference needs scr > 0 and x/r >= 0");
    return cf;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

class CsvWriter {
public:
    explicit CsvWriter(const fs::path& path) : out_(path) {
        if (!out_) throw ValidationError("cannot write " + path.string());
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

Json complex_list(const std::vector<Complex>& ev, const std::vector<std::size_t>& idx) {
    Json a = Json::array();
    for (auto i : idx) a.push_back({{"index", i}, {"re", ev[i].real()}, {"im", ev[i].imag()}});
    return a;
}

Json condition_json(const ConditionReport& r) {
    Json j;
    j["passed"] = r.passed();
    j["states"] = r.eigenvalues.size();
    double max_re = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.eigenvalues.size(); ++i)
        if (std::find(r.excluded_indices.begin(), r.excluded_indices.end(), i) == r.excluded_indices.end())
            max_re = std::max(max_re, r.eigenvalues[i].real());
    if (!r.eigenvalues.empty()) j["max_real_part"] = max_re;
    j["repeated_flag"] = r.repeated_flag;
    j["zero_real_flag"] = r.zero_real_flag;
    j["unstable_flag"] = r.unstable_flag;
    j["repeated"] = complex_list(r.eigenvalues, r.repeated_indices);
    j["zero_real"] = complex_list(r.eigenvalues, r.zero_real_indices);
    j["unstable"] = complex_list(r.eigenvalues, r.unstable_indices);
    j["excluded_symmetry_modes"] = complex_list(r.eigenvalues, r.excluded_indices);
    j["uncontrollable_repeated"] = complex_list(r.eigenvalues, r.uncontrollable_repeated_indices);
    j["tolerances"] = {{"repeated", r.tolerances.repeated},
                       {"zero_real", r.tolerances.zero_real},
                       {"unstable", r.tolerances.unstable},
                       {"floor", r.tolerances.floor},
                       {"uncontrollable", r.tolerances.uncontrollable}};
    return j;
}

Json config_json(const CaseFile& cf, const CommonFlags& f) {
    const auto& an = cf.analysis;
    Json j;
    j["case"] = f.case_path;
    j["case_name"] = cf.network.name;
    j["f_min_hz"] = an.f_min_hz;
    j["f_max_hz"] = an.f_max_hz;
    j["f_step_hz"] = an.f_step_hz;
    j["reference"] = {{"scr", an.reference.scr}, {"x_over_r", an.reference.x_over_r}};
    j["threads"] = resolve_threads(f.threads);
    j["synthetic_capacitance"] = an.synthetic_capacitance;
    return j;
}

void write_report(const fs::path& dir, const Json& report) {
    std::ofstream out(dir / "report.json");
    if (!out) throw ValidationError("cannot write " + (dir / "report.json").string());
    out << report.dump(2) << '\n';
}

// Runs `body`, turning library errors into exit codes. The report collected so
// far is written in every case once the output directory exists.
int guarded(const CommonFlags& f, const std::string& command, std::ostream& err,
            const std::function<int(Json&)>& body) {
    Json report;
    report["command"] = command;
    report["version"] = kVersion;
    report["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION);
    int code = kExitOk;
    try {
        fs::create_directories(f.out_dir);
    } catch (const std::exception& e) {
        err << "error: cannot create output directory " << f.out_dir << ": " << e.what() << '\n';
        return kExitUsage;
    }
    try {
        code = body(report);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        report["error"] = {{"kind", "validation"}, {"message", e.what()}};
        code = kExitUsage;
    } catch (const ConditionError& e) {
        err << "error: " << e.what() << '\n';
        report["error"] = {{"kind", "conditions"}, {"message", e.what()}};
        code = kExitNumerical;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << '\n';
        report["error"] = {{"kind", "numerical"}, {"message", e.what()}};
        code = kExitNumerical;
    }
    report["exit_code"] = code;
    try {
        write_report(f.out_dir, report);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return code == kExitOk ? kExitUsage : code;
    }
    return code;
}

AssemblyOptions assembly_options(const CaseFile& cf) {
    AssemblyOptions o;
    o.synthetic_capacitance = cf.analysis.synthetic_capacitance;
    return o;
}

Json timings(double ss, double cond, double dsi) {
    return {{"state_space_s", ss}, {"condition_check_s", cond}, {"dsi_s", dsi}, {"total_s", ss + cond + dsi}};
}

// ---------------------------------------------------------------------------

int cmd_component(const CommonFlags& f, const std::string& gen_id, std::ostream& out, std::ostream& err) {
    return guarded(f, "component", err, [&](Json& report) {
        const auto cf = load_with_overrides(f);
        report["configuration"] = config_json(cf, f);
        report["configuration"]["generator"] = gen_id;
        const auto grid = cf.analysis.grid();

        auto t0 = Clock::now();
        const auto op = solve_power_flow(cf.network);
        const auto sys = assemble_system(cf.network, op, assembly_options(cf));
        const auto y_sus = extract_subsystem(sys, gen_id);
        const double t_ss = seconds_since(t0);

        t0 = Clock::now();
        const auto cond = check_conditions(y_sus, f.tol);
        const double t_cond = seconds_since(t0);
        report["conditions"] = {{"subsystem", condition_json(cond)}};
        if (!cond.passed()) {
            report["timings"] = timings(t_ss, t_cond, 0.0);
            throw ConditionError("subsystem '" + gen_id + "' fails the eigenvalue conditions: " + cond.summary(), cond);
        }

        t0 = Clock::now();
        const auto w0 = cf.network.omega0();
        const auto ref = VsbiReference::make(cf.analysis.reference.scr, cf.analysis.reference.x_over_r, w0, w0);
        SweepOptions sweep;
        sweep.threads = f.threads;
        const auto dsi = dsi_component(frequency_response(y_sus, grid, sweep), vsbi_admittance(ref, grid));
        const double t_dsi = seconds_since(t0);
        report["timings"] = timings(t_ss, t_cond, t_dsi);

        CsvWriter csv(fs::path(f.out_dir) / "dsi_component.csv");
        csv.row({"f_hz", "dsi"});
        for (std::size_t i = 0; i < grid.size(); ++i) csv.row({fmt(grid.hz(i)), fmt(dsi[i])});
        out << "dsi_component.csv: " << grid.size() << " points for " << gen_id << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_system(const CommonFlags& f, std::ostream& out, std::ostream& err) {
    return guarded(f, "system", err, [&](Json& report) {
        const auto cf = load_with_overrides(f);
        report["configuration"] = config_json(cf, f);
        const auto grid = cf.analysis.grid();
        cf.analysis.ranges.check_covers(grid);

        auto t0 = Clock::now();
        const auto op = solve_power_flow(cf.network);
        const auto sys = assemble_system(cf.network, op, assembly_options(cf));
        const double t_ss = seconds_since(t0);
        report["power_flow"] = {{"iterations", op.iterations}, {"max_mismatch", op.max_mismatch}};
        report["states"] = sys.model.num_states();
        report["symmetry_modes"] = sys.symmetry_modes;
        if (sys.angle_reference) report["angle_reference"] = *sys.angle_reference;

        t0 = Clock::now();
        const auto cond = check_conditions(sys.model, f.tol, sys.symmetry_modes);
        Json subs = Json::object();
        for (const auto& g : cf.network.generators)
            subs[g.id] = condition_json(check_conditions(extract_subsystem(sys, g.id), f.tol));
        const double t_cond = seconds_since(t0);
        report["conditions"] = {{"system", condition_json(cond)}, {"subsystems", subs}};
        if (!cond.passed()) {
            report["timings"] = timings(t_ss, t_cond, 0.0);
            throw ConditionError("assembled system fails the eigenvalue conditions: " + cond.summary(), cond);
        }

        t0 = Clock::now();
        const auto w0 = cf.network.omega0();
        const auto ref = VsbiReference::make(cf.analysis.reference.scr, cf.analysis.reference.x_over_r, w0, w0);
        BusImpedanceOptions zo;
        zo.sweep.threads = f.threads;
        const auto z = bus_impedances(sys, grid, zo);
        const auto dsi = dsi_from_bus_impedances(grid, sys.bus_ids, z, vsbi_impedance(ref, grid));
        const auto agg = aggregate_and_normalize(dsi, cf.analysis.ranges);
        const double t_dsi = seconds_since(t0);
        report["timings"] = timings(t_ss, t_cond, t_dsi);

        Json degenerate = Json::array();
        for (std::size_t r = 0; r < agg.range_names.size(); ++r)
            if (agg.degenerate[r]) degenerate.push_back(agg.range_names[r]);
        report["degenerate_ranges"] = degenerate;

        {
            CsvWriter csv(fs::path(f.out_dir) / "dsi_system.csv");
            std::vector<std::string> header{"f_hz"};
            for (const auto& b : sys.bus_ids) header.push_back("dsi_bus_" + b);
            csv.row(header);
            for (std::size_t i = 0; i < grid.size(); ++i) {
                std::vector<std::string> row{fmt(grid.hz(i))};
                for (Eigen::Index b = 0; b < dsi.values.cols(); ++b)
                    row.push_back(fmt(dsi.values(static_cast<Eigen::Index>(i), b)));
                csv.row(row);
            }
        }
        {
            CsvWriter csv(fs::path(f.out_dir) / "dsi_ranges.csv");
            csv.row({"bus_id", "range_name", "aggregate", "normalized"});
            for (std::size_t b = 0; b < agg.bus_ids.size(); ++b)
                for (std::size_t r = 0; r < agg.range_names.size(); ++r) {
                    const auto rr = static_cast<Eigen::Index>(r), bb = static_cast<Eigen::Index>(b);
                    csv.row({agg.bus_ids[b], agg.range_names[r], fmt(agg.max(rr, bb)), fmt(agg.normalized(rr, bb))});
                }
        }
        out << "dsi_system.csv: " << grid.size() << " points x " << sys.bus_ids.size() << " buses, "
            << sys.model.num_states() << " states\n";
        return static_cast<int>(kExitOk);
    });
}

struct StepFlags {
    std::optional<std::string> generator;
    std::vector<std::string> inputs;
    std::vector<double> magnitudes;
    std::optional<double> poc_step;
    std::optional<std::string> load_bus;
    double load_fraction = 0.01;
    double duration = 0.5;
    double dt = 50e-6;
    bool reference = false;
};

void write_series(const fs::path& path, const std::vector<double>& t, const Labels& labels,
                  const std::vector<const RealMatrix*>& blocks) {
    CsvWriter csv(path);
    std::vector<std::string> header{"t_s"};
    header.insert(header.end(), labels.begin(), labels.end());
    csv.row(header);
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::vector<std::string> row{fmt(t[k])};
        for (const auto* m : blocks)
            for (Eigen::Index j = 0; j < m->cols(); ++j) row.push_back(fmt((*m)(static_cast<Eigen::Index>(k), j)));
        csv.row(row);
    }
}

int cmd_step(const CommonFlags& f, const StepFlags& s, std::ostream& out, std::ostream& err) {
    return guarded(f, "step", err, [&](Json& report) {
        const auto cf = load_with_overrides(f);
        report["configuration"] = config_json(cf, f);
        if (s.inputs.size() != s.magnitudes.size())
            throw ValidationError("every --step-input needs a matching --magnitude");
        const int modes = (!s.inputs.empty()) + s.poc_step.has_value() + s.load_bus.has_value();
        if (modes != 1) throw ValidationError("give exactly one of --step-input, --poc-step or --load-step");
        if (s.poc_step && !s.generator) throw ValidationError("--poc-step needs --generator");
        if (s.load_bus && s.generator) throw ValidationError("--load-step acts on the whole system; drop --generator");

        StepExperiment exp;
        exp.duration = s.duration;
        exp.dt = s.dt;
        report["configuration"]["duration_s"] = s.duration;
        report["configuration"]["dt_s"] = s.dt;

        auto t0 = Clock::now();
        const auto op = solve_power_flow(cf.network);
        const auto sys = assemble_system(cf.network, op, assembly_options(cf));
        const double t_ss = seconds_since(t0);
        const auto w0 = cf.network.omega0();
        const auto ref = VsbiReference::make(cf.analysis.reference.scr, cf.analysis.reference.x_over_r, w0, w0);
        Json warnings = Json::array();
        const fs::path dir(f.out_dir);

        t0 = Clock::now();
        if (s.generator) {
            const auto model = extract_subsystem(sys, *s.generator);
            report["configuration"]["generator"] = *s.generator;
            if (s.poc_step) {
                const auto b = cf.network.bus_index(cf.network.generators[cf.network.generator_index(*s.generator)].bus);
                const Eigen::Vector2d dv = *s.poc_step * phasor_to_qd(op.voltage(b));
                exp.steps = {{model.input_labels()[0], dv(0)}, {model.input_labels()[1], dv(1)}};
            }
            for (std::size_t i = 0; i < s.inputs.size(); ++i) exp.steps.push_back({s.inputs[i], s.magnitudes[i]});
            if (s.reference) {
                Eigen::Vector2d dv = Eigen::Vector2d::Zero();
                for (const auto& st : exp.steps) {
                    if (st.label == model.input_labels()[0]) dv(0) += st.magnitude;
                    else if (st.label == model.input_labels()[1]) dv(1) += st.magnitude;
                    else throw ValidationError("unknown input '" + st.label + "'");
                }
                const auto r = component_step(model, ref, dv, exp);
                for (const auto& w : r.component.warnings) warnings.push_back(w);
                RealMatrix mag = Eigen::Map<const Eigen::VectorXd>(r.error_magnitude.data(),
                                                                   static_cast<Eigen::Index>(r.error_magnitude.size()));
                write_series(dir / "step.csv", r.component.t,
                             {"i_q", "i_d", "ref_i_q", "ref_i_d", "err_i_q", "err_i_d", "err_mag"},
                             {&r.component.values, &r.reference.values, &r.error.error, &mag});
                report["error_linf"] = r.linf;
            } else {
                const auto ts = step_response(model, exp);
                for (const auto& w : ts.warnings) warnings.push_back(w);
                write_series(dir / "step.csv", ts.t, ts.labels, {&ts.values});
            }
        } else if (s.load_bus) {
            report["configuration"]["load_step"] = {{"bus", *s.load_bus}, {"fraction", s.load_fraction}};
            if (s.reference) {
                const auto traces = one_at_a_time_errors(cf.network, exp, *s.load_bus, s.load_fraction,
                                                         cf.analysis.reference.scr, cf.analysis.reference.x_over_r,
                                                         assembly_options(cf));
                if (traces.empty()) throw ValidationError("the case has no converter to compare");
                Labels labels;
                std::vector<const RealMatrix*> blocks;
                Json errs = Json::object();
                for (const auto& tr : traces) {
                    labels.push_back("dv_" + tr.bus_id);
                    labels.push_back("ref_dv_" + tr.bus_id);
                    labels.push_back("err_dv_" + tr.bus_id);
                    blocks.push_back(&tr.system.values);
                    blocks.push_back(&tr.reference.values);
                    blocks.push_back(&tr.error.error);
                    errs[tr.generator_id] = {{"bus", tr.bus_id}, {"linf", tr.error.linf[0]}, {"l2", tr.error.l2[0]}};
                    for (const auto& w : tr.system.warnings) warnings.push_back(w);
                }
                write_series(dir / "step.csv", traces.front().system.t, labels, blocks);
                report["errors"] = errs;
            } else {
                exp.steps = load_step_injection(cf.network, op, *s.load_bus, s.load_fraction);
                const auto ts = step_response(sys.model, exp, sys.symmetry_modes);
                for (const auto& w : ts.warnings) warnings.push_back(w);
                write_series(dir / "step.csv", ts.t, ts.labels, {&ts.values});
            }
        } else {
            for (std::size_t i = 0; i < s.inputs.size(); ++i) exp.steps.push_back({s.inputs[i], s.magnitudes[i]});
            const auto ts = step_response(sys.model, exp, sys.symmetry_modes);
            for (const auto& w : ts.warnings) warnings.push_back(w);
            write_series(dir / "step.csv", ts.t, ts.labels, {&ts.values});
        }
        report["timings"] = {{"state_space_s", t_ss}, {"simulation_s", seconds_since(t0)}};
        Json unique = Json::array();
        for (const auto& w : warnings)
            if (std::find(unique.begin(), unique.end(), w) == unique.end()) unique.push_back(w);
        report["warnings"] = unique;
        for (const auto& w : unique) err << "warning: " << w.get<std::string>() << '\n';
        out << "step.csv written to " << f.out_dir << '\n';
        return static_cast<int>(kExitOk);
    });
}

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
    try {
        const auto cf = load_case(path);
        const auto& net = cf.network;
        out << "ok: " << (net.name.empty() ? path : net.name) << ": " << net.buses.size() << " buses, "
            << net.branches.size() << " branches, " << net.generators.size() << " generators, "
            << cf.analysis.grid().size() << " grid points\n";
        return kExitOk;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dynamic similarity index of converters and network buses against a voltage source reference"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonFlags comp_flags, sys_flags, step_flags;
    std::string gen_id, validate_path;
    StepFlags step;

    auto* comp = app.add_subcommand("component", "DSI of one generator's admittance against the reference");
    add_common(comp, comp_flags);
    comp->add_option("generator", gen_id, "generator id")->required();

    auto* sys = app.add_subcommand("system", "per-bus DSI of the assembled network");
    add_common(sys, sys_flags);

    auto* st = app.add_subcommand("step", "linear step response of a generator or of the network");
    add_common(st, step_flags);
    st->add_option("--generator", step.generator, "simulate this generator's own model");
    st->add_option("--step-input", step.inputs, "input label to step (repeatable)");
    st->add_option("--magnitude", step.magnitudes, "step size for the matching --step-input (repeatable)");
    st->add_option("--poc-step", step.poc_step, "relative step of the POC voltage along its operating phasor");
    st->add_option("--load-step", step.load_bus, "bus whose load is increased");
    st->add_option("--fraction", step.load_fraction, "relative load increase for --load-step");
    st->add_option("--duration", step.duration, "simulated time in s");
    st->add_option("--dt", step.dt, "integration step in s");
    st->add_flag("--reference", step.reference, "also simulate the reference and write the error");

    auto* val = app.add_subcommand("validate", "check a case file against the schema");
    val->add_option("case", validate_path, "case file (JSON)")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion& e) {
        out << kVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    if (*comp) return cmd_component(comp_flags, gen_id, out, err);
    if (*sys) return cmd_system(sys_flags, out, err);
    if (*st) return cmd_step(step_flags, step, out, err);
    return cmd_validate(validate_path, out, err);
}

}  // namespace dsi
