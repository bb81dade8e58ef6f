#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "nlevel/errors.hpp"
#include "nlevel/runner.hpp"

using namespace nlevel;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlevel_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path config(const std::string& name) { return fs::path(NLEVEL_CONFIG_DIR) / name; }

// Runs the CLI with stdout and stderr captured in out/log.txt; returns the exit code.
int cli(const std::string& args, const fs::path& out, const std::string& env = "") {
    const std::string cmd = env + " \"" + std::string(NLEVEL_CLI_PATH) + "\" " + args + " --out \"" + out.string() +
                            "\" > \"" + (out / "log.txt").string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << text;
    return p;
}

std::vector<std::string> lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("number formatting round-trips") {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) {
        const std::string s = format_double(x);
        CHECK(std::stod(s) == x);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("CSV table and atomic writes") {
    CsvTable t({"a", "b", "c"});
    t.row().add(1).add(0.5).add(std::string("x"));
    CHECK(t.str() == "a,b,c\n1,0.5,x\n");

    const fs::path dir = scratch("atomic");
    write_atomic(dir / "f.txt", "one");
    write_atomic(dir / "f.txt", "two");
    CHECK(slurp(dir / "f.txt") == "two");
    int files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++files;
    CHECK(files == 1);
}

TEST_CASE("config resolution") {
    const Json base = parse_config_text(R"({"model": {"family": "two_level_avoided", "delta": 0.5}, "epsilon": [0.1]})");
    SUBCASE("defaults are filled in") {
        const RunConfig c = resolve_config(base, "smatrix");
        CHECK(c.resolved["ode_tol"].get<double>() == 1e-10);
        CHECK(c.resolved["region"]["im_hi"].get<double>() == 1.2);
        CHECK(c.resolved["task"] == "smatrix");
        CHECK(c.threads == 1);
    }
    SUBCASE("thread precedence") {
        Json j = base;
        CHECK(resolve_config(j, "smatrix", {}, 3).threads == 3);
        j["threads"] = 2;
        CHECK(resolve_config(j, "smatrix", {}, 3).threads == 2);
        RunOverrides o;
        o.threads = 5;
        CHECK(resolve_config(j, "smatrix", o, 3).threads == 5);
    }
    SUBCASE("epsilon override") {
        RunOverrides o;
        o.epsilons = std::vector<double>{0.3, 0.2};
        CHECK(resolve_config(base, "smatrix", o).resolved["epsilon"].size() == 2);
    }
    SUBCASE("errors name the field") {
        Json j = base;
        j.erase("epsilon");
        CHECK_THROWS_WITH_AS(resolve_config(j, "compare"), doctest::Contains("'epsilon'"), ConfigError);
        CHECK_NOTHROW(resolve_config(j, "validate"));
        j["task"] = "sweep";
        CHECK_THROWS_AS(resolve_config(j, "validate"), ConfigError);
        Json k = base;
        k["model"]["delta"] = "half";
        CHECK_THROWS_WITH_AS(resolve_config(k, "smatrix"), doctest::Contains("model.delta"), ConfigError);
        Json e = base;
        e["epsilon"] = "auto";
        CHECK_THROWS_AS(resolve_config(e, "smatrix"), ConfigError);
        CHECK_NOTHROW(resolve_config(e, "compare"));
        CHECK_THROWS_WITH_AS(parse_config_text("{\"model\": }", "x.json"), doctest::Contains("x.json:1:"),
                             ConfigError);
    }
}

TEST_CASE("cli: validate") {
    const fs::path out = scratch("validate");
    CHECK(cli("validate --config \"" + config("two_level.json").string() + "\"", out) == 0);
    const Json rep = Json::parse(slurp(out / "report.json"));
    CHECK(rep["task"] == "validate");
    CHECK(rep["status"] == "ok");
    CHECK(rep["config"]["model"]["delta"].get<double>() == 0.5);
    CHECK(fs::exists(out / "crossings.csv"));

    const fs::path bad = scratch("validate_fail");
    const fs::path cfg =
        write_config(bad, R"json({"model": {"family": "custom", "entries": [["tanh(z)", "0"], ["0", "-tanh(z)"]]}})json");
    CHECK(cli("validate --config \"" + cfg.string() + "\"", bad) == 2);
    CHECK(Json::parse(slurp(bad / "report.json"))["status"] == "validation_failed");
}

TEST_CASE("cli: config errors exit with 1") {
    const fs::path out = scratch("config_errors");
    const fs::path cfg = write_config(out, R"({"model": {"family": "two_level_avoided", "delta": 0.5}})");
    CHECK(cli("compare --config \"" + cfg.string() + "\"", out) == 1);
    CHECK(slurp(out / "log.txt").find("'epsilon'") != std::string::npos);
    write_config(out, "{\"model\": [1, 2,");
    CHECK(cli("compare --config \"" + cfg.string() + "\"", out) == 1);
    CHECK(slurp(out / "log.txt").find("invalid JSON") != std::string::npos);
    CHECK(cli("compare --config \"" + (out / "missing.json").string() + "\"", out) == 1);
    CHECK(cli("nonsense --config \"" + cfg.string() + "\"", out) == 1);
    // predictions need a crossing diagram
    CHECK(cli("predict --config \"" + config("two_channel.json").string() + "\"", out) == 1);
}

TEST_CASE("cli: compare output") {
    const fs::path a = scratch("compare_a"), b = scratch("compare_b");
    const std::string args = "compare --config \"" + config("three_level.json").string() + "\"";
    REQUIRE(cli(args, a) == 0);
    REQUIRE(cli(args + " --threads 3", b) == 0);
    const std::string csv = slurp(a / "compare.csv");
    CHECK(csv == slurp(b / "compare.csv"));

    const auto rows = lines(csv);
    REQUIRE(rows.size() >= 2);
    CHECK(rows[0] == "row,col,epsilon,abs_s_num,abs_s_pred,rel_err,eps_log_s,budget");
    // 17 significant digits in every floating field
    std::istringstream fields(rows[1]);
    std::vector<std::string> f;
    for (std::string x; std::getline(fields, x, ',');) f.push_back(x);
    REQUIRE(f.size() == 8);
    for (std::size_t i = 3; i < f.size(); ++i) {
        std::string digits;
        for (char ch : f[i].substr(0, f[i].find('e')))
            if (std::isdigit(static_cast<unsigned char>(ch))) digits += ch;
        digits.erase(0, digits.find_first_not_of('0'));
        CHECK(digits.size() <= 17);
        CHECK(std::stod(f[i]) == std::stod(format_double(std::stod(f[i]))));
    }

    const Json rep = Json::parse(slurp(a / "report.json"));
    CHECK(rep["config"]["threads"] == 1);
    const Json& el = rep["results"]["elements"];
    REQUIRE(el.size() == 3);
    for (const auto& e : el) {
        CHECK(e["records"].size() == 5);
        CHECK(e.contains("fit"));
    }
}

TEST_CASE("cli: overrides") {
    const fs::path out = scratch("overrides");
    const std::string args = "smatrix --config \"" + config("two_level.json").string() + "\" --epsilon 0.3,0.15";
    REQUIRE(cli(args, out, "NLEVEL_THREADS=2") == 0);
    const Json rep = Json::parse(slurp(out / "report.json"));
    CHECK(rep["config"]["epsilon"] == Json::array({0.3, 0.15}));
    CHECK(rep["config"]["threads"] == 2);
    CHECK(lines(slurp(out / "smatrix.csv")).front().find("epsilon") != std::string::npos);

    REQUIRE(cli(args + " --threads 4", out, "NLEVEL_THREADS=2") == 0);
    CHECK(Json::parse(slurp(out / "report.json"))["config"]["threads"] == 4);
}
