#include "nlevel/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nlevel/asymptotics.hpp"
#include "nlevel/complex_geometry.hpp"
#include "nlevel/errors.hpp"
#include "nlevel/expression.hpp"
#include "nlevel/smatrix_direct.hpp"
#include "nlevel/superasymptotic.hpp"
#include "nlevel/symmetry.hpp"

namespace nlevel {

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open " + tmp.string() + " for writing");
        f << content;
        f.flush();
        if (!f) throw Error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

CsvTable& CsvTable::row() {
    rows_.emplace_back();
    return *this;
}

CsvTable& CsvTable::add(double x) {
    rows_.back().push_back(format_double(x));
    return *this;
}

CsvTable& CsvTable::add(int x) {
    rows_.back().push_back(std::to_string(x));
    return *this;
}

CsvTable& CsvTable::add(const std::string& s) {
    rows_.back().push_back(s);
    return *this;
}

std::string CsvTable::str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& v) {
        for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
}

// ---------------------------------------------------------------------------------------------
// Config parsing

Json parse_config_text(const std::string& text, const std::string& origin) {
    try {
        return Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON");
    }
}

Json load_config_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

namespace {

const Json& require(const Json& obj, const std::string& key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError("missing field '" + where + key + "'");
    return obj.at(key);
}

double number(const Json& v, const std::string& name) {
    if (!v.is_number()) throw ConfigError("field '" + name + "' must be a number");
    return v.get<double>();
}

int integer(const Json& v, const std::string& name) {
    if (!v.is_number_integer()) throw ConfigError("field '" + name + "' must be an integer");
    return v.get<int>();
}

// Reads obj[key] or inserts the default, so the stored object ends up fully resolved.
double fill(Json& obj, const std::string& key, double def, const std::string& where) {
    if (!obj.contains(key)) obj[key] = def;
    return number(obj[key], where + key);
}

int fill_int(Json& obj, const std::string& key, int def, const std::string& where) {
    if (!obj.contains(key)) obj[key] = def;
    return integer(obj[key], where + key);
}

bool fill_bool(Json& obj, const std::string& key, bool def, const std::string& where) {
    if (!obj.contains(key)) obj[key] = def;
    if (!obj[key].is_boolean()) throw ConfigError("field '" + where + key + "' must be a boolean");
    return obj[key].get<bool>();
}

std::vector<std::vector<std::string>> string_matrix(const Json& v, const std::string& name) {
    if (!v.is_array() || v.empty()) throw ConfigError("field '" + name + "' must be a non-empty array of rows");
    std::vector<std::vector<std::string>> out;
    for (const auto& row : v) {
        if (!row.is_array() || row.size() != v.size())
            throw ConfigError("field '" + name + "' must be a square array of expression strings");
        out.emplace_back();
        for (const auto& e : row) {
            if (e.is_string()) out.back().push_back(e.get<std::string>());
            else if (e.is_number()) out.back().push_back(format_double(e.get<double>()));
            else throw ConfigError("field '" + name + "' entries must be strings or numbers");
        }
    }
    return out;
}

const std::vector<std::string> kEpsilonTasks = {"smatrix", "sweep", "predict", "compare", "superasym", "symmetry"};
const std::vector<std::string> kAutoTasks = {"sweep", "compare"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

void resolve_model(Json& m) {
    const std::string family = require(m, "family", "model.").is_string() ? m["family"].get<std::string>() : "";
    if (family == "two_level_avoided" || family == "three_level_adiabatic") {
        number(require(m, "delta", "model."), "model.delta");
    } else if (family == "two_channel") {
        number(require(m, "energy", "model."), "model.energy");
        if (!m.contains("potential")) m["potential"] = "example";
        const Json& p = m["potential"];
        if (p.is_string()) {
            const std::string s = p.get<std::string>();
            if (s != "example" && s != "example_complex")
                throw ConfigError("field 'model.potential' must be \"example\", \"example_complex\" or a 2x2 expression array");
        } else {
            string_matrix(p, "model.potential");
        }
        fill(m, "strip_alpha", 1.2, "model.");
        fill(m, "decay_a", 1.0, "model.");
    } else if (family == "custom") {
        string_matrix(require(m, "entries", "model."), "model.entries");
        if (m.contains("unperturbed")) string_matrix(m["unperturbed"], "model.unperturbed");
        fill(m, "strip_alpha", 1.2, "model.");
        fill(m, "decay_a", 1.0, "model.");
        fill(m, "limit_t", 40.0, "model.");
    } else {
        throw ConfigError("field 'model.family' must be one of two_level_avoided, three_level_adiabatic, "
                          "two_channel, custom");
    }
}

}  // namespace

GeneratorModel build_model(const Json& m) {
    const std::string family = m.at("family").get<std::string>();
    if (family == "two_level_avoided") return two_level_avoided(m.at("delta").get<double>());
    if (family == "three_level_adiabatic") return three_level_adiabatic(m.at("delta").get<double>());
    if (family == "custom") {
        std::vector<std::vector<std::string>> unperturbed;
        if (m.contains("unperturbed")) unperturbed = string_matrix(m.at("unperturbed"), "model.unperturbed");
        return custom_model(string_matrix(m.at("entries"), "model.entries"), m.at("strip_alpha").get<double>(),
                            m.at("decay_a").get<double>(), m.at("limit_t").get<double>(), unperturbed);
    }
    const double alpha = m.at("strip_alpha").get<double>();
    const double a = m.at("decay_a").get<double>();
    const double E = m.at("energy").get<double>();
    const Json& p = m.at("potential");
    if (p.is_string()) {
        auto [V, Vp] = example_channel_potential(p.get<std::string>() == "example_complex");
        return two_channel_schrodinger(E, V, Vp, alpha, a);
    }
    const auto entries = string_matrix(p, "model.potential");
    const std::size_t mch = entries.size();
    std::vector<Expression> f, df;
    for (const auto& row : entries)
        for (const auto& e : row) {
            f.push_back(Expression::parse(e));
            df.push_back(f.back().derivative());
        }
    auto make = [mch](std::vector<Expression> ex) {
        return MatrixFunction([mch, ex](Complex z) {
            ComplexMatrix v(mch, mch);
            for (std::size_t r = 0; r < mch; ++r)
                for (std::size_t c = 0; c < mch; ++c) v(r, c) = ex[r * mch + c](z);
            return v;
        });
    };
    return two_channel_schrodinger(E, make(f), make(df), alpha, a);
}

RunConfig resolve_config(const Json& config, const std::string& task, const RunOverrides& overrides, int env_threads) {
    if (!config.is_object()) throw ConfigError("config must be a JSON object");
    if (!contains(task_names(), task)) throw ConfigError("unknown task '" + task + "'");
    RunConfig cfg;
    cfg.task = task;
    Json r = config;
    if (r.contains("task") && (!r["task"].is_string() || r["task"].get<std::string>() != task))
        throw ConfigError("field 'task' does not match the subcommand '" + task + "'");
    r["task"] = task;

    // r is vector-backed: references into it die when keys are added, so re-fetch after inserts
    if (!r.contains("model")) throw ConfigError("missing field 'model'");
    resolve_model(r["model"]);
    try {
        build_model(r["model"]);
    } catch (const ParseError& e) {
        throw ConfigError(std::string("model expression: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("model parameters: ") + e.what());
    } catch (const DimensionMismatch& e) {
        throw ConfigError(std::string("model parameters: ") + e.what());
    }

    if (overrides.epsilons) r["epsilon"] = *overrides.epsilons;
    if (contains(kEpsilonTasks, task)) {
        const Json& eps = require(r, "epsilon", "");
        if (eps.is_string()) {
            if (eps.get<std::string>() != "auto" || !contains(kAutoTasks, task))
                throw ConfigError("field 'epsilon' must be a list of positive numbers"
                                  " (\"auto\" is accepted by sweep and compare)");
            Json& a = r["auto_epsilon"];
            if (a.is_null()) a = Json::object();
            fill(a, "max", 0.2, "auto_epsilon.");
            fill_int(a, "count", 6, "auto_epsilon.");
        } else {
            if (!eps.is_array() || eps.empty()) throw ConfigError("field 'epsilon' must be a non-empty list");
            for (const auto& e : eps)
                if (!e.is_number() || !(e.get<double>() > 0.0))
                    throw ConfigError("field 'epsilon' must contain positive numbers only");
        }
    }

    const double ode_tol = fill(r, "ode_tol", 1e-10, "");
    if (!(ode_tol > 0.0 && ode_tol < 1e-3)) throw ConfigError("field 'ode_tol' must lie in (0, 1e-3)");

    const Json& model = r["model"];
    const double alpha = model.contains("strip_alpha") ? model["strip_alpha"].get<double>()
                                                        : build_model(model).strip_alpha;
    Json& region = r["region"];
    if (region.is_null()) region = Json::object();
    fill(region, "re_lo", -3.0, "region.");
    fill(region, "re_hi", 3.0, "region.");
    fill(region, "im_lo", -alpha, "region.");
    fill(region, "im_hi", alpha, "region.");
    fill(r, "grid_step", 0.05, "");

    if (task == "predict" || task == "compare" || task == "superasym") {
        if (!r.contains("sources")) r["sources"] = Json::array();
        if (!r["sources"].is_array()) throw ConfigError("field 'sources' must be a list of 1-based indices");
        for (const auto& s : r["sources"])
            if (!s.is_number_integer() || s.get<int>() < 1)
                throw ConfigError("field 'sources' must be a list of 1-based indices");
    }
    if (task == "superasym") {
        Json& s = r["superasym"];
        if (s.is_null()) s = Json::object();
        fill_int(s, "q_max", 14, "superasym.");
        fill(s, "panel_length", 0.1, "superasym.");
        fill_int(s, "nodes_per_panel", 20, "superasym.");
        fill(s, "window", 12.0, "superasym.");
        fill_bool(s, "improved", false, "superasym.");
    }
    if (task == "loops" || task == "degeneracies") {
        if (r.contains("loops")) {
            if (!r["loops"].is_array()) throw ConfigError("field 'loops' must be a list");
            for (const auto& l : r["loops"]) {
                const Json& v = require(l, "vertices", "loops[].");
                if (!v.is_array() || v.size() < 3) throw ConfigError("field 'loops[].vertices' needs at least 3 points");
                for (const auto& p : v)
                    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
                        throw ConfigError("field 'loops[].vertices' entries must be [re, im]");
            }
        }
        if (r.contains("level_lines")) {
            Json& ll = r["level_lines"];
            integer(require(ll, "j", "level_lines."), "level_lines.j");
            integer(require(ll, "k", "level_lines."), "level_lines.k");
            fill_int(ll, "nx", 61, "level_lines.");
            fill_int(ll, "ny", 41, "level_lines.");
        }
    }

    int threads = 0;
    if (overrides.threads) threads = *overrides.threads;
    else if (r.contains("threads")) threads = integer(r["threads"], "threads");
    else if (env_threads > 0) threads = env_threads;
    if (threads <= 0) threads = 1;
    r["threads"] = threads;
    cfg.threads = threads;
    cfg.resolved = r;
    return cfg;
}

// ---------------------------------------------------------------------------------------------
// Tasks

namespace {

Json cjson(Complex c) { return Json::array({c.real(), c.imag()}); }

Json mjson(const ComplexMatrix& m) {
    Json out = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(cjson(m(r, c)));
        out.push_back(row);
    }
    return out;
}

Json vjson(const std::vector<int>& v, int offset = 1) {
    Json out = Json::array();
    for (int x : v) out.push_back(x + offset);
    return out;
}

struct Context {
    const RunConfig& cfg;
    const Json& c;
    GeneratorModel model;
    std::ostream& log;
    Json results = Json::object();
    std::vector<std::pair<std::string, std::string>> files;
    bool validation_failed = false;

    double ode_tol() const { return c["ode_tol"].get<double>(); }
    std::vector<double> epsilons() const { return c["epsilon"].get<std::vector<double>>(); }
    Region region() const {
        const Json& r = c["region"];
        return Region{r["re_lo"].get<double>(), r["re_hi"].get<double>(), r["im_lo"].get<double>(),
                      r["im_hi"].get<double>()};
    }
    void csv(const std::string& name, const CsvTable& t) { files.emplace_back(name, t.str()); }
};

Json window_json(const TailWindow& w) {
    return Json{{"T_minus", w.T_minus},       {"T_plus", w.T_plus},     {"tail_estimate", w.tail_estimate},
                {"envelope", w.envelope},     {"fit_constant", w.fit_constant}, {"fit_rate", w.fit_rate}};
}

Json crossings_json(const std::vector<CrossingEntry>& v) {
    Json out = Json::array();
    for (const auto& e : v)
        out.push_back({{"t", e.t}, {"j", e.j + 1}, {"k", e.k + 1}, {"position", e.position + 1},
                       {"derivative_difference", e.derivative_difference}});
    return out;
}

void task_validate(Context& ctx) {
    const HypothesisReport rep = validate(ctx.model);
    const double gap_floor = 1e-8 * std::max(1.0, ctx.model.limit_plus.norm());
    const bool gap_ok = rep.gap_min > gap_floor;
    const bool analytic_ok = rep.analyticity_residual < 1e-6 && rep.derivative_residual < 1e-6;
    const bool pass = gap_ok && rep.decay_ok() && analytic_ok;
    ctx.validation_failed = !pass;
    ctx.results = {{"gap_min", rep.gap_min},
                   {"gap_argmin", rep.gap_argmin},
                   {"decay_fit_exponent", rep.decay_fit_exponent},
                   {"decay_fit_rate", rep.decay_fit_rate},
                   {"decay_trivial", rep.decay_trivial},
                   {"analyticity_residual", rep.analyticity_residual},
                   {"derivative_residual", rep.derivative_residual},
                   {"crossing_table", crossings_json(rep.crossing_table)},
                   {"unperturbed_crossings", crossings_json(rep.unperturbed_crossings)},
                   {"sigma", vjson(ctx.model.sigma)},
                   {"checks", {{"gap", gap_ok}, {"decay", rep.decay_ok()}, {"analyticity", analytic_ok}}},
                   {"pass", pass}};
    CsvTable t({"member", "t", "j", "k", "position", "derivative_difference"});
    auto rows = [&](const std::string& member, const std::vector<CrossingEntry>& v) {
        for (const auto& e : v)
            t.row().add(member).add(e.t).add(e.j + 1).add(e.k + 1).add(e.position + 1).add(e.derivative_difference);
    };
    rows("model", rep.crossing_table);
    rows("unperturbed", rep.unperturbed_crossings);
    ctx.csv("crossings.csv", t);
}

struct DirectRun {
    TailWindow window;
    std::shared_ptr<const FrameTable> table;
    std::vector<SMatrixResult> results;
};

DirectRun direct_run(Context& ctx, const std::vector<double>& eps) {
    DirectRun d;
    d.window = tail_window(ctx.model, ctx.ode_tol());
    d.table = build_frame_table(ctx.model, d.window);
    d.results.resize(eps.size());
    parallel_for(eps.size(), ctx.cfg.threads, [&](std::size_t i) {
        d.results[i] = s_matrix(*d.table, eps[i], ctx.ode_tol(), d.window.tail_estimate);
    });
    return d;
}

void smatrix_rows(CsvTable& t, const SMatrixResult& r) {
    for (Eigen::Index a = 0; a < r.S.rows(); ++a)
        for (Eigen::Index b = 0; b < r.S.cols(); ++b)
            t.row()
                .add(r.epsilon)
                .add(int(a) + 1)
                .add(int(b) + 1)
                .add(r.S(a, b).real())
                .add(r.S(a, b).imag())
                .add(std::abs(r.S(a, b)));
}

double unitarity_residual(const GeneratorModel& model, const FrameTable& table, const ComplexMatrix& S) {
    const ComplexMatrix J = model.metric_J.value_or(ComplexMatrix::Identity(model.dim, model.dim));
    return verify_s_unitarity(S, j_normalize(table.frame0(), J));
}

void task_smatrix(Context& ctx, bool scaling) {
    std::vector<double> eps;
    if (ctx.c["epsilon"].is_string()) {
        // Without a prediction the automatic list spans a decade below eps_max.
        const double emax = ctx.c["auto_epsilon"]["max"].get<double>();
        const int n = ctx.c["auto_epsilon"]["count"].get<int>();
        for (int i = 0; i < n; ++i) eps.push_back(emax * std::pow(0.1, double(i) / std::max(1, n - 1)));
    } else {
        eps = ctx.epsilons();
    }
    const DirectRun d = direct_run(ctx, eps);
    Json records = Json::array();
    CsvTable t({"epsilon", "row", "col", "re", "im", "abs"});
    CsvTable sc({"epsilon", "norm_s_minus_identity", "norm_ratio", "unitarity_residual", "budget"});
    const double budget = ctx.ode_tol() + d.window.tail_estimate;
    for (const auto& r : d.results) {
        smatrix_rows(t, r);
        const double dev = spectral_norm(r.S - ComplexMatrix::Identity(r.S.rows(), r.S.cols()));
        const double unit = unitarity_residual(ctx.model, *d.table, r.S);
        records.push_back({{"epsilon", r.epsilon},
                           {"S", mjson(r.S)},
                           {"T_minus", r.T_minus},
                           {"T_plus", r.T_plus},
                           {"ode_tol", r.ode_tol},
                           {"tail_estimate", r.tail_estimate},
                           {"step_count", r.step_count},
                           {"norm_s_minus_identity", dev},
                           {"unitarity_residual", unit}});
        sc.row().add(r.epsilon).add(dev).add(dev / r.epsilon).add(unit).add(budget);
    }
    ctx.results = {{"window", window_json(d.window)}, {"records", records}};
    ctx.csv("smatrix.csv", t);
    if (scaling) ctx.csv("scaling.csv", sc);
}

Json degeneracy_json(const std::vector<DegeneracyPoint>& pts) {
    Json out = Json::array();
    for (const auto& p : pts) {
        Json e = {{"z0", cjson(p.z0)},
                  {"j", p.j + 1},
                  {"k", p.k + 1},
                  {"multiplicity", p.multiplicity},
                  {"discriminant_residual", p.discriminant_residual}};
        e["conjugate_partner"] = p.conjugate_partner ? cjson(*p.conjugate_partner) : Json(nullptr);
        out.push_back(e);
    }
    return out;
}

DegeneracySearch degeneracies(Context& ctx) {
    return find_degeneracies(ctx.model, ctx.region(), ctx.c["grid_step"].get<double>());
}

void level_line_csv(Context& ctx) {
    if (!ctx.c.contains("level_lines")) return;
    const Json& ll = ctx.c["level_lines"];
    const auto samples = level_lines(ctx.model, ll["j"].get<int>() - 1, ll["k"].get<int>() - 1, ctx.region(),
                                     ll["nx"].get<int>(), ll["ny"].get<int>());
    CsvTable t({"z_re", "z_im", "value"});
    for (const auto& s : samples) t.row().add(s.re).add(s.im).add(s.value);
    ctx.csv("level_lines.csv", t);
}

void task_degeneracies(Context& ctx) {
    const DegeneracySearch ds = degeneracies(ctx);
    Json failed = Json::array();
    for (auto z : ds.failed_cells) failed.push_back(cjson(z));
    ctx.results = {{"degeneracies", degeneracy_json(ds.points)}, {"failed_cells", failed}};
    CsvTable t({"index", "re", "im", "j", "k", "multiplicity", "discriminant_residual"});
    int i = 1;
    for (const auto& p : ds.points)
        t.row().add(i++).add(p.z0.real()).add(p.z0.imag()).add(p.j + 1).add(p.k + 1).add(p.multiplicity).add(
            p.discriminant_residual);
    ctx.csv("degeneracies.csv", t);
    level_line_csv(ctx);
}

Json monodromy_json(const MonodromyResult& m) {
    Json thetas = Json::array(), ints = Json::array(), verts = Json::array();
    for (Eigen::Index j = 0; j < m.thetas.size(); ++j) {
        thetas.push_back(cjson(m.thetas(j)));
        ints.push_back(cjson(m.integrals(j)));
    }
    for (auto v : m.loop.vertices) verts.push_back(cjson(v));
    return {{"vertices", verts},
            {"orientation", m.loop.orientation},
            {"sigma0", vjson(m.sigma0)},
            {"theta", thetas},
            {"integrals", ints},
            {"proportionality_residual", m.proportionality_residual}};
}

void task_loops(Context& ctx) {
    const DegeneracySearch ds = degeneracies(ctx);
    std::vector<PathSpec> loops;
    std::vector<std::string> names;
    if (ctx.c.contains("loops")) {
        int i = 1;
        for (const auto& l : ctx.c["loops"]) {
            std::vector<Complex> v;
            for (const auto& p : l["vertices"]) v.emplace_back(p[0].get<double>(), p[1].get<double>());
            loops.push_back(PathSpec::loop(v));
            names.push_back("config_" + std::to_string(i++));
        }
    } else {
        int i = 1;
        for (const auto& p : ds.points) {
            loops.push_back(crossing_loop(ctx.model, p.z0, ds.points, p.z0.imag() > 0.0 ? -1 : 1));
            names.push_back("degeneracy_" + std::to_string(i++));
        }
    }
    std::vector<MonodromyResult> mono(loops.size());
    parallel_for(loops.size(), ctx.cfg.threads, [&](std::size_t i) { mono[i] = monodromy(ctx.model, loops[i]); });
    Json lj = Json::array();
    CsvTable t({"loop", "label", "sigma0", "theta_re", "theta_im", "integral_re", "integral_im"});
    for (std::size_t i = 0; i < mono.size(); ++i) {
        Json e = monodromy_json(mono[i]);
        e["name"] = names[i];
        lj.push_back(e);
        for (std::size_t j = 0; j < mono[i].sigma0.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            t.row()
                .add(names[i])
                .add(int(j) + 1)
                .add(mono[i].sigma0[j] + 1)
                .add(mono[i].thetas(jj).real())
                .add(mono[i].thetas(jj).imag())
                .add(mono[i].integrals(jj).real())
                .add(mono[i].integrals(jj).imag());
        }
    }

    Json paths = Json::array();
    CsvTable pt({"j", "side", "method", "terminal_height", "min_forward_margin", "min_differential_margin", "pass"});
    if (ctx.model.has_diagram()) {
        for (int j = 0; j < ctx.model.dim; ++j) {
            if (required_side(ctx.model, j) == 0) continue;
            try {
                const CandidatePath cp = construct_candidate_path(ctx.model, j, ds.points);
                double fwd = INFINITY, dif = INFINITY;
                for (const auto& p : cp.report.pairs) {
                    fwd = std::min(fwd, p.forward_margin);
                    dif = std::min(dif, p.differential_margin);
                }
                Json verts = Json::array();
                for (auto v : cp.path.vertices) verts.push_back(cjson(v));
                paths.push_back({{"j", j + 1},
                                 {"side", cp.side},
                                 {"method", cp.method},
                                 {"terminal_height", cp.terminal_height},
                                 {"dissipative", cp.report.pass()},
                                 {"vertices", verts}});
                pt.row().add(j + 1).add(cp.side).add(cp.method).add(cp.terminal_height).add(fwd).add(dif).add(
                    std::string(cp.report.pass() ? "true" : "false"));
            } catch (const ConstructionFailure& e) {
                paths.push_back({{"j", j + 1}, {"error", e.what()}});
            }
        }
    }
    ctx.results = {{"degeneracies", degeneracy_json(ds.points)}, {"loops", lj}, {"candidate_paths", paths}};
    ctx.csv("loops.csv", t);
    ctx.csv("paths.csv", pt);
    level_line_csv(ctx);
}

std::vector<int> tracked_sources(Context& ctx) {
    std::vector<int> out;
    if (!ctx.model.has_diagram())
        throw ConfigError("task '" + ctx.cfg.task + "' needs a model with a crossing diagram (field 'model.family')");
    for (const auto& s : ctx.c["sources"]) {
        const int j = s.get<int>() - 1;
        if (j >= ctx.model.dim) throw ConfigError("field 'sources' index exceeds the model dimension");
        out.push_back(j);
    }
    if (out.empty())
        for (int j = 0; j < ctx.model.dim; ++j)
            if (ctx.model.sigma[static_cast<std::size_t>(j)] != j) out.push_back(j);
    return out;
}

std::vector<Prediction> predictions(Context& ctx, const std::vector<DegeneracyPoint>& degs, Json& skipped) {
    std::vector<Prediction> out;
    for (int j : tracked_sources(ctx)) {
        try {
            out.push_back(predict_element(ctx.model, j, degs));
        } catch (const NoCrossingChain& e) {
            skipped.push_back({{"source", j + 1}, {"reason", e.what()}});
        }
    }
    return out;
}

Json prediction_json(const Prediction& p) {
    Json loops = Json::array();
    for (const auto& l : p.loops)
        loops.push_back({{"z0", cjson(l.z0)},
                         {"branch", l.branch + 1},
                         {"next", l.next + 1},
                         {"theta", cjson(l.theta)},
                         {"integral", cjson(l.integral)}});
    return {{"row", p.target + 1},
            {"col", p.source + 1},
            {"gamma", p.gamma_total},
            {"prefactor", cjson(p.prefactor)},
            {"alignment", cjson(p.alignment)},
            {"integral_sum", cjson(p.integral_sum)},
            {"loops", loops}};
}

void task_predict(Context& ctx) {
    const DegeneracySearch ds = degeneracies(ctx);
    Json skipped = Json::array();
    const auto preds = predictions(ctx, ds.points, skipped);
    const auto eps = ctx.epsilons();
    Json pj = Json::array();
    CsvTable t({"row", "col", "epsilon", "re", "im", "abs_s_pred", "eps_log_s_pred"});
    for (const auto& p : preds) {
        Json e = prediction_json(p);
        if (ctx.model.dim > 2) {
            Json bounds = Json::array();
            const CandidatePath cp = construct_candidate_path(ctx.model, p.source, ds.points);
            for (int l = 0; l < ctx.model.dim; ++l) {
                if (ctx.model.sigma[static_cast<std::size_t>(l)] == p.target) continue;
                bounds.push_back({{"row", ctx.model.sigma[static_cast<std::size_t>(l)] + 1},
                                  {"col", p.source + 1},
                                  {"exponent", bound_element(ctx.model, p, l, cp.terminal_height)}});
            }
            e["bounds"] = bounds;
        }
        pj.push_back(e);
        for (double x : eps) {
            const Complex v = p.value(x);
            t.row().add(p.target + 1).add(p.source + 1).add(x).add(v.real()).add(v.imag()).add(std::abs(v)).add(
                x * p.log_modulus(x));
        }
    }
    ctx.results = {{"degeneracies", degeneracy_json(ds.points)}, {"predictions", pj}, {"skipped", skipped}};
    ctx.csv("predict.csv", t);
}

Json fit_json(const SweepFit& f) {
    return {{"gamma_fit", f.gamma_fit},
            {"log_prefactor_fit", f.log_prefactor_fit},
            {"gamma_predicted", f.gamma_predicted},
            {"gamma_relative_error", std::abs(f.gamma_fit - f.gamma_predicted) / f.gamma_predicted},
            {"eps_log_s_smallest", f.eps_log_s_smallest},
            {"rel_error_slope", f.rel_error_slope},
            {"rel_error_intercept", f.rel_error_intercept}};
}

void task_compare(Context& ctx) {
    const DegeneracySearch ds = degeneracies(ctx);
    Json skipped = Json::array();
    const auto preds = predictions(ctx, ds.points, skipped);
    const TailWindow w = tail_window(ctx.model, ctx.ode_tol());
    const auto table = build_frame_table(ctx.model, w);
    const double budget = ctx.ode_tol() + w.tail_estimate;
    Json out = Json::array();
    CsvTable t({"row", "col", "epsilon", "abs_s_num", "abs_s_pred", "rel_err", "eps_log_s", "budget"});
    for (const auto& p : preds) {
        std::vector<double> eps;
        if (ctx.c["epsilon"].is_string())
            eps = auto_epsilons(p.gamma_total, budget, ctx.c["auto_epsilon"]["max"].get<double>(),
                                ctx.c["auto_epsilon"]["count"].get<int>(), std::abs(p.prefactor));
        else
            eps = ctx.epsilons();
        const SweepResult r = sweep(*table, w, p, eps, ctx.ode_tol(), ctx.cfg.threads);
        Json recs = Json::array();
        for (const auto& x : r.records) {
            recs.push_back({{"epsilon", x.epsilon},
                            {"s_numeric", cjson(x.s_numeric)},
                            {"s_predicted", cjson(x.s_predicted)},
                            {"rel_error_modulus", x.rel_error_modulus}});
            t.row()
                .add(x.row + 1)
                .add(x.col + 1)
                .add(x.epsilon)
                .add(std::abs(x.s_numeric))
                .add(std::abs(x.s_predicted))
                .add(x.rel_error_modulus)
                .add(x.epsilon * std::log(std::abs(x.s_numeric)))
                .add(x.budget);
        }
        Json e = prediction_json(p);
        e["records"] = recs;
        e["fit"] = fit_json(r.fit);
        out.push_back(e);
    }
    ctx.results = {{"window", window_json(w)}, {"elements", out}, {"skipped", skipped}};
    ctx.csv("compare.csv", t);
}

double factorial_envelope(const EnvelopeFit& f, double eps, int q) {
    return f.b_hat * std::exp(q * std::log(eps * f.c_hat) + std::lgamma(q + 1.0));
}

void task_superasym(Context& ctx) {
    const Json& s = ctx.c["superasym"];
    SuperOptions so;
    so.q_max = s["q_max"].get<int>();
    so.panel_length = s["panel_length"].get<double>();
    so.nodes_per_panel = s["nodes_per_panel"].get<int>();
    so.window = s["window"].get<double>();
    so.threads = ctx.cfg.threads;
    const auto eps = ctx.epsilons();
    const auto grid = std::make_shared<const PathGrid>(
        PathGrid::make(PathSpec::segment(-so.window, so.window), so.panel_length, so.nodes_per_panel));
    Json seqs = Json::array();
    CsvTable t({"epsilon", "q", "diff", "envelope", "e_deviation"});
    for (double x : eps) {
        const RenormSequence rs = renorm_sequence(ctx.model, x, grid, so.q_max, so.threads);
        const EnvelopeFit f = fit_envelope(rs.diffs, x);
        for (int q = 1; q <= rs.q_max; ++q)
            t.row().add(x).add(q).add(rs.diffs[static_cast<std::size_t>(q)]).add(factorial_envelope(f, x, q)).add(
                rs.e_deviation[static_cast<std::size_t>(q)]);
        seqs.push_back({{"epsilon", x},
                        {"c_hat", f.c_hat},
                        {"b_hat", f.b_hat},
                        {"q_star", f.q_star},
                        {"argmin", f.argmin},
                        {"interior_minimum", f.interior_minimum},
                        {"envelope_bounds", f.envelope_bounds},
                        {"diffs", rs.diffs},
                        {"e_deviation", rs.e_deviation}});
    }
    ctx.results = {{"sequences", seqs}};
    if (!s["improved"].get<bool>()) {
        ctx.csv("superasym.csv", t);
        return;
    }
    const DegeneracySearch ds = degeneracies(ctx);
    Json skipped = Json::array();
    const auto preds = predictions(ctx, ds.points, skipped);
    const TailWindow w = tail_window(ctx.model, ctx.ode_tol());
    const auto table = build_frame_table(ctx.model, w);
    std::vector<SMatrixResult> direct(eps.size());
    parallel_for(eps.size(), ctx.cfg.threads,
                 [&](std::size_t i) { direct[i] = s_matrix(*table, eps[i], ctx.ode_tol(), w.tail_estimate); });
    Json imp = Json::array();
    CsvTable it({"row", "col", "epsilon", "abs_s_num", "abs_s_plain", "abs_s_improved", "rel_err_plain",
                 "rel_err_improved", "q_used"});
    for (const auto& p : preds) {
        for (std::size_t i = 0; i < eps.size(); ++i) {
            const ImprovedPrediction ip = improved_prediction(ctx.model, p, eps[i], so);
            const double num = std::abs(direct[i].S(p.target, p.source));
            const double plain = std::abs(p.value(eps[i]));
            const double better = std::abs(ip.prediction.value(eps[i]));
            it.row()
                .add(p.target + 1)
                .add(p.source + 1)
                .add(eps[i])
                .add(num)
                .add(plain)
                .add(better)
                .add(std::abs(num - plain) / plain)
                .add(std::abs(num - better) / better)
                .add(ip.q_used);
            Json alpha = Json::array();
            for (Eigen::Index k = 0; k < ip.phases.beta_plus.size(); ++k)
                alpha.push_back(cjson(ip.phases.alpha_star(k, k)));
            imp.push_back({{"row", p.target + 1},
                           {"col", p.source + 1},
                           {"epsilon", eps[i]},
                           {"q_used", ip.q_used},
                           {"q_star", ip.fit.q_star},
                           {"argmin", ip.fit.argmin},
                           {"gamma_star", ip.prediction.gamma_total},
                           {"prefactor_star", cjson(ip.prediction.prefactor)},
                           {"alignment", cjson(ip.prediction.alignment)},
                           {"alpha_star_element", cjson(ip.phases.alpha_star(p.target, p.source))}});
        }
    }
    ctx.results["improved"] = imp;
    ctx.results["skipped"] = skipped;
    ctx.csv("superasym.csv", t);
    ctx.csv("improved.csv", it);
}

void task_symmetry(Context& ctx) {
    const auto eps = ctx.epsilons();
    const DirectRun d = direct_run(ctx, eps);
    const double budget = ctx.ode_tol() + d.window.tail_estimate;
    const bool metric = ctx.model.metric_J.has_value();
    const ComplexMatrix J = ctx.model.metric_J.value_or(ComplexMatrix::Identity(ctx.model.dim, ctx.model.dim));
    MetricData md = j_normalize(d.table->frame0(), J);
    std::vector<int> order;
    if (metric && ctx.model.dim % 2 == 0) order = plus_first_order(d.table->frame0().eigenvalues);
    Json recs = Json::array();
    CsvTable t({"epsilon", "quantity", "value", "budget"});
    for (const auto& r : d.results) {
        Json e = {{"epsilon", r.epsilon}};
        const double u = verify_s_unitarity(r.S, md);
        e["unitarity_residual"] = u;
        e["unitarity_within_budget"] = within_budget(u, ctx.ode_tol(), d.window.tail_estimate);
        t.row().add(r.epsilon).add(std::string("unitarity")).add(u).add(budget);
        ComplexMatrix SJ = to_metric_basis(r.S, md);
        if (!order.empty()) {
            SJ = permute(SJ, order);
            const BlockReport b = verify_block_symmetries(SJ, ctx.model.dim / 2);
            e["blocks"] = {{"conj_pp_mm", b.conj_pp_mm}, {"conj_pm_mp", b.conj_pm_mp},
                           {"identity_pp", b.identity_pp}, {"cross", b.cross},
                           {"identity_mm", b.identity_mm}, {"symmetric_product", b.symmetric_product}};
            e["conj_within_budget"] = within_budget(b.max_conj(), ctx.ode_tol(), d.window.tail_estimate);
            t.row().add(r.epsilon).add(std::string("block_conjugation")).add(b.max_conj()).add(budget);
            t.row().add(r.epsilon).add(std::string("block_metric")).add(b.max_metric()).add(budget);
            t.row().add(r.epsilon).add(std::string("symmetric_product")).add(b.symmetric_product).add(budget);
        }
        try {
            const DerivedReport dr = derived_elements(SJ, ctx.model);
            Json ents = Json::array();
            for (const auto& x : dr.entries) {
                ents.push_back({{"name", x.name},
                                {"row", x.row + 1},
                                {"col", x.col + 1},
                                {"derived", cjson(x.derived)},
                                {"numeric", cjson(x.numeric)},
                                {"relative_residual", x.relative_residual}});
                t.row().add(r.epsilon).add(x.name).add(x.relative_residual).add(budget);
            }
            e["derived"] = ents;
        } catch (const DivisionGuard& ex) {
            e["derived"] = {{"skipped", ex.what()}};
        } catch (const NotApplicable& ex) {
            e["derived"] = {{"skipped", ex.what()}};
        }
        recs.push_back(e);
    }
    Json out = {{"window", window_json(d.window)}, {"metric", metric ? "indefinite" : "identity"}, {"records", recs}};
    Json rho = Json::array();
    for (Eigen::Index j = 0; j < md.rho.size(); ++j) rho.push_back(md.rho(j));
    out["rho"] = rho;
    if (!order.empty()) {
        out["plus_first_order"] = vjson(order);
        const auto g = g_symmetry_residual(ctx.model);
        out["g_symmetry_residual"] = g.first;
        out["conjugation_residual"] = g.second;
    }
    ctx.results = out;
    ctx.csv("symmetry.csv", t);
}

}  // namespace

int run(const RunConfig& cfg, std::ostream& log) {
    std::filesystem::create_directories(cfg.out_dir);
    Context ctx{cfg, cfg.resolved, build_model(cfg.resolved["model"]), log, Json::object(), {}, false};
    Json report = {{"task", cfg.task}, {"config", cfg.resolved}};
    int code = 0;
    try {
        if (cfg.task == "validate") task_validate(ctx);
        else if (cfg.task == "smatrix") task_smatrix(ctx, false);
        else if (cfg.task == "sweep") task_smatrix(ctx, true);
        else if (cfg.task == "degeneracies") task_degeneracies(ctx);
        else if (cfg.task == "loops") task_loops(ctx);
        else if (cfg.task == "predict") task_predict(ctx);
        else if (cfg.task == "compare") task_compare(ctx);
        else if (cfg.task == "superasym") task_superasym(ctx);
        else if (cfg.task == "symmetry") task_symmetry(ctx);
        report["status"] = ctx.validation_failed ? "validation_failed" : "ok";
        report["results"] = ctx.results;
        code = ctx.validation_failed ? 2 : 0;
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        log << "numerical failure: " << e.what() << '\n';
        report["status"] = "numerical_failure";
        report["error"] = e.what();
        ctx.files.clear();
        code = 3;
    }
    for (const auto& [name, content] : ctx.files) write_atomic(cfg.out_dir / name, content);
    write_atomic(cfg.out_dir / "report.json", report.dump(2) + "\n");
    return code;
}

}  // namespace nlevel
