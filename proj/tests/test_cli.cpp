#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dsi/case_io.hpp"
#include "dsi/cli.hpp"

namespace fs = std::filesystem;

namespace {

std::string case_path(const std::string& name) { return std::string(DSI_CASE_DIR) + "/" + name; }

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    args.insert(args.begin(), "dsi");
    std::ostringstream out, err;
    const int code = dsi::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("dsi_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("usage errors exit with 2, help with 0") {
    CHECK(cli({}).code == dsi::kExitUsage);
    CHECK(cli({"frobnicate"}).code == dsi::kExitUsage);
    CHECK(cli({"system", case_path("ieee9_modified.json"), "--no-such-flag"}).code == dsi::kExitUsage);
    CHECK(cli({"--help"}).code == dsi::kExitOk);
    CHECK(cli({"--version"}).out.find(dsi::kVersion) != std::string::npos);
}

TEST_CASE("validate") {
    CHECK(cli({"validate", case_path("ieee9_modified.json")}).code == dsi::kExitOk);
    const auto dir = scratch("validate");
    fs::create_directories(dir);
    std::ofstream(dir / "bad.json") << R"({"name": "x", "bogus": 1})";
    const auto r = cli({"validate", (dir / "bad.json").string()});
    CHECK(r.code == dsi::kExitUsage);
    CHECK(cli({"validate", (dir / "missing.json").string()}).code == dsi::kExitUsage);
}

TEST_CASE("component run writes one row per grid point and a report") {
    const auto dir = scratch("component");
    const auto r = cli({"component", case_path("single_converter_gfor.json"), "gfor", "--out-dir", dir.string()});
    REQUIRE(r.code == dsi::kExitOk);
    CHECK(read_csv(dir / "dsi_component.csv").size() == 6667);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["command"] == "component");
    CHECK(rep["conditions"]["subsystem"]["passed"] == true);
    const auto& t = rep["timings"];
    CHECK(t["total_s"].get<double>() ==
          doctest::Approx(t["state_space_s"].get<double>() + t["condition_check_s"].get<double>() +
                          t["dsi_s"].get<double>()));
}

TEST_CASE("unknown generator is a usage error naming the valid ids") {
    const auto dir = scratch("unknown");
    const auto r = cli({"component", case_path("ieee9_modified.json"), "gfor2", "--out-dir", dir.string()});
    CHECK(r.code == dsi::kExitUsage);
    CHECK(r.err.find("gfor1") != std::string::npos);
    CHECK(r.err.find("gfor6") != std::string::npos);
}

TEST_CASE("a source compared with a reference of its own data scores zero") {
    const auto dir = scratch("self");
    const auto r = cli({"component", case_path("two_thevenin.json"), "strong", "--ref-scr", "20", "--ref-xr", "10",
                        "--out-dir", dir.string()});
    REQUIRE(r.code == dsi::kExitOk);
    double worst = 0.0;
    for (const auto& row : read_csv(dir / "dsi_component.csv")) worst = std::max(worst, row[1]);
    CHECK(worst < 1e-10);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["configuration"]["reference"]["scr"] == 20.0);
}

TEST_CASE("system run: matrix, ranges, report and determinism") {
    const auto a = scratch("system_a"), b = scratch("system_b");
    const std::vector<std::string> common{"--fstep", "1.5", "--threads", "2"};
    auto args = std::vector<std::string>{"system", case_path("ieee9_modified.json"), "--out-dir", a.string()};
    args.insert(args.end(), common.begin(), common.end());
    REQUIRE(cli(args).code == dsi::kExitOk);
    args[3] = b.string();
    args.back() = "1";
    REQUIRE(cli(args).code == dsi::kExitOk);
    CHECK(slurp(a / "dsi_system.csv") == slurp(b / "dsi_system.csv"));
    CHECK(slurp(a / "dsi_ranges.csv") == slurp(b / "dsi_ranges.csv"));

    const auto rows = read_csv(a / "dsi_system.csv");
    CHECK(rows.front().size() == 10);
    const auto ranges = slurp(a / "dsi_ranges.csv");
    CHECK(std::count(ranges.begin(), ranges.end(), '\n') == 1 + 9 * 4);
    const auto rep = nlohmann::json::parse(slurp(a / "report.json"));
    CHECK(rep["conditions"]["subsystems"].size() == 3);
    CHECK(rep["configuration"]["f_step_hz"] == 1.5);
    CHECK(rep["timings"]["dsi_s"].get<double>() > 0.0);
}

TEST_CASE("condition failure exits with 1 and still writes the report") {
    const auto dir = scratch("conditions");
    const auto r = cli({"system", case_path("ieee9_modified.json"), "--tol-repeated", "0.5", "--out-dir", dir.string()});
    CHECK(r.code == dsi::kExitNumerical);
    REQUIRE(fs::exists(dir / "report.json"));
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["error"]["kind"] == "conditions");
    CHECK(rep["conditions"]["system"]["repeated_flag"] == true);
    CHECK_FALSE(fs::exists(dir / "dsi_system.csv"));
}

TEST_CASE("step runs") {
    const auto dir = scratch("step");
    auto r = cli({"step", case_path("single_converter_gfol.json"), "--generator", "gfol", "--step-input", "u_q_poc",
                  "--magnitude", "0.01", "--duration", "0.05", "--out-dir", dir.string()});
    REQUIRE(r.code == dsi::kExitOk);
    CHECK(read_csv(dir / "step.csv").size() == 1001);

    r = cli({"step", case_path("single_converter_gfol.json"), "--generator", "gfol", "--step-input", "u_q_poc",
             "--magnitude", "0", "--duration", "0.05", "--out-dir", dir.string()});
    REQUIRE(r.code == dsi::kExitOk);
    for (const auto& row : read_csv(dir / "step.csv"))
        for (std::size_t j = 1; j < row.size(); ++j) CHECK(row[j] == 0.0);

    r = cli({"step", case_path("single_converter_gfol.json"), "--generator", "gfol", "--step-input", "u_q_poc",
             "--magnitude", "0.01", "--dt", "1e-3", "--duration", "0.05", "--out-dir", dir.string()});
    REQUIRE(r.code == dsi::kExitOk);
    const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(rep["warnings"].size() == 1);

    CHECK(cli({"step", case_path("single_converter_gfol.json"), "--generator", "gfol", "--step-input", "u_q_poc",
               "--out-dir", dir.string()})
              .code == dsi::kExitUsage);
    CHECK(cli({"step", case_path("single_converter_gfol.json"), "--generator", "gfol", "--step-input", "nope",
               "--magnitude", "1", "--out-dir", dir.string()})
              .code == dsi::kExitUsage);
}

TEST_CASE("case files survive a serialize / parse round trip") {
    for (const char* name : {"two_thevenin.json", "single_converter_gfol.json", "ieee9_modified.json"}) {
        CAPTURE(name);
        const auto a = dsi::load_case(case_path(name));
        const auto text = dsi::serialize_case(a);
        const auto b = dsi::parse_case(text);
        CHECK(dsi::serialize_case(b) == text);
        CHECK(b.network.generators.size() == a.network.generators.size());
    }
}

TEST_CASE("schema violations are validation errors") {
    const auto base = nlohmann::json::parse(slurp(case_path("single_converter_gfor.json")));
    auto extra = base;
    extra["generators"][1]["params"]["tau_pll"] = 0.1;  // a gfol parameter on a gfor unit
    CHECK_THROWS_AS(dsi::parse_case(extra.dump()), dsi::ValidationError);
    auto missing = base;
    missing["generators"][1]["params"].erase("m_p");
    CHECK_THROWS_AS(dsi::parse_case(missing.dump()), dsi::ValidationError);
    auto unknown = base;
    unknown["buses"][0]["colour"] = "red";
    CHECK_THROWS_AS(dsi::parse_case(unknown.dump()), dsi::ValidationError);
    CHECK_THROWS_AS(dsi::parse_case("{not json"), dsi::ValidationError);
}
