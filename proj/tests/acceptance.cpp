// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "nlevel/asymptotics.hpp"
#include "nlevel/runner.hpp"
#include "nlevel/superasymptotic.hpp"
#include "nlevel/symmetry.hpp"

using namespace nlevel;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [fail]");
    }
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

double max_abs(const ComplexMatrix& A) { return A.cwiseAbs().maxCoeff(); }

GeneratorModel sech_model() {
    return custom_model({{"tanh(z)", "0.3*sech(z) + 0.2"}, {"0.3*sech(z) + 0.2", "-tanh(z)"}}, 1.2, 1.0, 40.0,
                        {{"tanh(z)", "0"}, {"0", "-tanh(z)"}});
}

GeneratorModel two_channel(bool complex_control) {
    auto [V, Vp] = example_channel_potential(complex_control);
    return two_channel_schrodinger(4.0, V, Vp);
}

Prediction first_prediction(const GeneratorModel& m) {
    return predict_element(m, 0, find_degeneracies(m, Region{}).points);
}

// ---------------------------------------------------------------------------------------------

Outcome projector_algebra() {
    Outcome o;
    std::mt19937 rng(20240601);
    std::normal_distribution<double> g;
    auto random_matrix = [&](int n) {
        ComplexMatrix A(n, n);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) A(r, c) = Complex(g(rng), g(rng));
        return A;
    };
    double worst = 0.0, min_order = INFINITY;
    int checked = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + trial % 5;
        const ComplexMatrix H = random_matrix(n), Hp = random_matrix(n);
        const SpectralFrame f = eig_simple(H);
        const FrameResiduals r = frame_residuals(H, f);
        const auto d = projector_derivative(H, Hp, f);
        ComplexMatrix sum = ComplexMatrix::Zero(n, n), pdp = ComplexMatrix::Zero(n, n);
        double dscale = 1.0;
        for (int j = 0; j < n; ++j) {
            const auto& dj = d[static_cast<std::size_t>(j)];
            sum += dj;
            pdp += f.projector(j) * dj * f.projector(j);
            dscale = std::max(dscale, max_abs(dj));
        }
        const ComplexMatrix K = k_matrix(f, d);
        const double kscale = std::max(1.0, max_abs(K));
        worst = std::max({worst, r.completeness, r.orthogonality, r.reconstruction, max_abs(sum) / dscale,
                          max_abs(pdp) / dscale, max_abs(K - k_matrix_direct(f, Hp)) / kscale});

        // central differences along H + h H'; the step is scaled to the smallest gap
        double gap = INFINITY;
        for (int j = 0; j < n; ++j)
            for (int k = j + 1; k < n; ++k) gap = std::min(gap, std::abs(f.eigenvalues(j) - f.eigenvalues(k)));
        const double h0 = 0.02 * gap / std::max(1.0, spectral_norm(Hp));
        auto err = [&](double h) {
            const SpectralFrame a = eig_simple(H + h * Hp), b = eig_simple(H - h * Hp);
            const auto ia = match_labels(f.eigenvalues, a.eigenvalues);
            const auto ib = match_labels(f.eigenvalues, b.eigenvalues);
            double e = 0.0;
            for (int j = 0; j < n; ++j) {
                const ComplexMatrix fd =
                    (a.projector(ia[static_cast<std::size_t>(j)]) - b.projector(ib[static_cast<std::size_t>(j)])) /
                    (2.0 * h);
                e = std::max(e, max_abs(fd - d[static_cast<std::size_t>(j)]));
            }
            return e;
        };
        const double e1 = err(h0), e2 = err(h0 / 2.0);
        // below 1e-7 relative the difference quotient is rounding-dominated and carries no order
        if (e1 > 1e-7 * dscale) {
            min_order = std::min(min_order, std::log2(e1 / e2));
            ++checked;
        }
    }
    o.require(worst <= 1e-9, "max invariant residual " + fmt("%.2e", worst));
    // orders are quoted to one decimal
    o.require(checked >= 400 && std::round(10.0 * min_order) / 10.0 >= 2.0,
              "min observed order " + fmt("%.3f", min_order) + " over " + std::to_string(checked) + " matrices");
    return o;
}

Outcome s_minus_identity() {
    Outcome o;
    const std::vector<double> eps = {0.2, 0.1, 0.05, 0.025};
    struct Item {
        std::string name;
        GeneratorModel model;
    };
    const std::vector<Item> items = {{"two_level(0.5)", two_level_avoided(0.5)},
                                     {"three_level(0.3)", three_level_adiabatic(0.3)},
                                     {"two_channel(E=4)", two_channel(false)}};
    for (const auto& it : items) {
        const TailWindow w = tail_window(it.model, 1e-10);
        const auto table = build_frame_table(it.model, w);
        std::vector<double> v(eps.size());
        parallel_for(eps.size(), 4, [&](std::size_t i) {
            const SMatrixResult r = s_matrix(*table, eps[i], 1e-10, w.tail_estimate);
            v[i] = spectral_norm(r.S - ComplexMatrix::Identity(it.model.dim, it.model.dim)) / eps[i];
        });
        const double ratio = *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
        std::string vals;
        for (double x : v) vals += (vals.empty() ? "" : ",") + fmt("%.3g", x);
        o.require(ratio < 2.0, it.name + " ratio " + fmt("%.3f", ratio) + " (" + vals + ")");
    }
    return o;
}

Outcome pros_unitarity() {
    Outcome o;
    const double tol = 1e-10;
    for (bool channel : {false, true}) {
        const GeneratorModel m = channel ? two_channel(false) : three_level_adiabatic(0.1);
        const TailWindow w = tail_window(m, tol);
        const auto table = build_frame_table(m, w);
        const ComplexMatrix J = m.metric_J.value_or(ComplexMatrix::Identity(m.dim, m.dim));
        const MetricData md = j_normalize(table->frame0(), J);
        const double res = verify_s_unitarity(s_matrix(*table, 0.05, tol, w.tail_estimate).S, md);
        const double budget = 50.0 * (tol + w.tail_estimate);
        o.require(res <= budget, std::string(channel ? "two_channel" : "three_level") + " " + fmt("%.2e", res) +
                                     " <= " + fmt("%.2e", budget));
    }
    return o;
}

Outcome decay_rates() {
    Outcome o;
    {
        const GeneratorModel m = two_level_avoided(0.5);
        const Prediction p = first_prediction(m);
        const SweepResult r = sweep(m, p, {0.2, 0.1, 0.05, 0.033, 0.025}, 1e-10, 4);
        const double rel = std::abs(r.fit.gamma_fit - p.gamma_total) / p.gamma_total;
        o.require(rel <= 0.03, "two_level s21 Gamma " + fmt("%.5f", r.fit.gamma_fit) + " vs " +
                                   fmt("%.5f", p.gamma_total) + " (" + fmt("%.2f%%", 100 * rel) + ")");
    }
    {
        const GeneratorModel m = three_level_adiabatic(0.1);
        const Prediction p = first_prediction(m);
        const SweepResult r = sweep(m, p, {0.012, 0.01, 0.008, 0.006, 0.005}, 1e-10, 4);
        const double rel = std::abs(r.fit.gamma_fit - p.gamma_total) / p.gamma_total;
        o.require(p.target == 2 && rel <= 0.05, "three_level s31 Gamma " + fmt("%.5f", r.fit.gamma_fit) + " vs " +
                                                    fmt("%.5f", p.gamma_total) + " (" + fmt("%.2f%%", 100 * rel) +
                                                    ")");
    }
    return o;
}

// rel_error_modulus must not grow by more than the noise band as eps decreases.
bool monotone_within_band(const std::vector<SweepRecord>& recs) {
    for (std::size_t i = 1; i < recs.size(); ++i)
        if (recs[i].rel_error_modulus > 1.1 * recs[i - 1].rel_error_modulus) return false;
    return true;
}

std::string rel_errors(const std::vector<SweepRecord>& recs) {
    std::string s;
    for (const auto& r : recs) s += (s.empty() ? "" : ",") + fmt("%.2e", r.rel_error_modulus);
    return s;
}

Outcome prefactor_convergence() {
    Outcome o;
    const GeneratorModel m = sech_model();
    const SweepResult r = sweep(m, first_prediction(m), {0.2, 0.1, 0.05, 0.025}, 1e-10, 4);
    o.require(monotone_within_band(r.records), "sech coupling (" + rel_errors(r.records) + ")");
    return o;
}

// Clockwise rectangle standing on the real axis around z0 only, based at Re z0 - 1.
PathSpec enclosing_loop(Complex z0, double half_width, double height_factor) {
    return rectangle_loop(z0.real() - 1.0, z0.real() - half_width, z0.real() + half_width,
                          height_factor * z0.imag(), -1);
}

PathSpec enclosing_polygon(Complex z0, double half_width, double height_factor) {
    const double x = z0.real(), y = z0.imag();
    const Complex b(x - 1.0);
    const PathSpec p = PathSpec::loop({b, Complex(x + half_width, 0.0), Complex(x + 1.5 * half_width, 0.6 * height_factor * y),
                                       Complex(x, height_factor * y), Complex(x - half_width, 0.4 * height_factor * y),
                                       Complex(x - half_width, 0.0), b});
    return p.orientation == -1 ? p : p.reversed();
}

Outcome monodromy_checks() {
    Outcome o;
    int loops = 0;
    double worst = 0.0;
    bool sigma_ok = true;
    for (const GeneratorModel& m : {two_level_avoided(0.5), three_level_adiabatic(0.1)}) {
        const auto degs = find_degeneracies(m, Region{}).points;
        for (const auto& d : degs) {
            // labels at the base point follow the sorted real-axis order
            std::vector<int> expected(static_cast<std::size_t>(m.dim));
            for (int j = 0; j < m.dim; ++j) expected[static_cast<std::size_t>(j)] = j;
            std::swap(expected[static_cast<std::size_t>(d.j)], expected[static_cast<std::size_t>(d.k)]);
            const double w = 0.12;
            const MonodromyResult a = monodromy(m, enclosing_loop(d.z0, w, 2.0));
            const MonodromyResult b = monodromy(m, enclosing_loop(d.z0, 1.5 * w, 1.4));
            const MonodromyResult c = monodromy(m, enclosing_polygon(d.z0, w, 1.7));
            for (const MonodromyResult* r : {&a, &b, &c}) sigma_ok = sigma_ok && r->sigma0 == expected;
            for (const MonodromyResult* r : {&b, &c}) {
                for (int j = 0; j < m.dim; ++j) {
                    const Complex dt = a.thetas(j) - r->thetas(j);
                    worst = std::max({worst, std::abs(std::remainder(dt.real(), 2.0 * M_PI)), std::abs(dt.imag()),
                                      std::abs(a.integrals(j) - r->integrals(j))});
                }
            }
            ++loops;
        }
    }
    o.require(sigma_ok, std::to_string(loops) + " degeneracies, sigma0 transpositions");
    o.require(worst <= 1e-8, "homotopic loop spread " + fmt("%.2e", worst));
    return o;
}

Outcome dissipativity() {
    Outcome o;
    int n = 0;
    bool ok = true;
    for (const GeneratorModel& m : {two_level_avoided(0.5), three_level_adiabatic(0.1)}) {
        const auto degs = find_degeneracies(m, Region{}).points;
        for (int j = 0; j < m.dim; ++j) {
            const CandidatePath cp = construct_candidate_path(m, j, degs);
            const int expect = m.sigma[static_cast<std::size_t>(j)] > j ? 1 : -1;
            ok = ok && check_dissipative(m, cp.path, j).pass() && cp.side == expect &&
                 cp.terminal_height * expect >= 0.0;
            ++n;
        }
    }
    o.require(ok, std::to_string(n) + " indices");
    return o;
}

Outcome superasymptotics() {
    Outcome o;
    {
        const GeneratorModel m = two_level_avoided(0.5);
        const auto grid = std::make_shared<const PathGrid>(PathGrid::make(PathSpec::segment(-12.0, 12.0), 0.1, 20));
        const RenormSequence rs = renorm_sequence(m, 0.05, grid, 14, 4);
        const EnvelopeFit f = fit_envelope(rs.diffs, 0.05);
        o.require(f.interior_minimum, "interior minimum at q = " + std::to_string(f.argmin));
        o.require(f.envelope_bounds, "envelope bounds diffs for q <= q* = " + std::to_string(f.q_star));
        const RenormSequence half = renorm_sequence(m, 0.025, grid, 1, 4);
        const double ratio = rs.e_deviation[1] / half.e_deviation[1];
        o.require(std::abs(ratio - 4.0) <= 0.8, "e^1 - e halving ratio " + fmt("%.3f", ratio));
    }
    {
        const GeneratorModel m = sech_model();
        const Prediction p = first_prediction(m);
        const TailWindow w = tail_window(m, 1e-12);
        const auto table = build_frame_table(m, w);
        const std::vector<double> eps = {0.06, 0.05, 0.04, 0.03, 0.025};
        std::vector<double> plain(eps.size()), better(eps.size());
        parallel_for(eps.size(), 4, [&](std::size_t i) {
            const double num = std::abs(s_matrix(*table, eps[i], 1e-12, w.tail_estimate).S(1, 0));
            const double a = std::abs(p.value(eps[i]));
            const double b = std::abs(improved_prediction(m, p, eps[i]).prediction.value(eps[i]));
            plain[i] = std::abs(num - a) / a;
            better[i] = std::abs(num - b) / b;
        });
        bool ok = true;
        std::string s;
        for (std::size_t i = 0; i < eps.size(); ++i) {
            ok = ok && better[i] <= plain[i];
            s += (s.empty() ? "" : ",") + fmt("%.1e", better[i]) + "<=" + fmt("%.1e", plain[i]);
        }
        o.require(ok, "improved vs plain rel_error (" + s + ")");
    }
    return o;
}

Outcome block_symmetry() {
    Outcome o;
    const double tol = 1e-10;
    for (bool control : {false, true}) {
        const GeneratorModel m = two_channel(control);
        const TailWindow w = tail_window(m, tol);
        const auto table = build_frame_table(m, w);
        const MetricData md = j_normalize(table->frame0(), *m.metric_J);
        const auto order = plus_first_order(table->frame0().eigenvalues);
        const ComplexMatrix S = s_matrix(*table, 0.05, tol, w.tail_estimate).S;
        const BlockReport b = verify_block_symmetries(permute(to_metric_basis(S, md), order), m.dim / 2);
        const double budget = 50.0 * (tol + w.tail_estimate);
        if (!control) {
            const double worst = std::max({b.max_conj(), b.max_metric(), b.symmetric_product});
            o.require(worst <= budget, "real V block residual " + fmt("%.2e", worst) + " <= " + fmt("%.2e", budget));
        } else {
            o.require(b.max_conj() >= 1e3 * budget,
                      "complex control " + fmt("%.2e", b.max_conj() / budget) + "x budget");
        }
    }
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

Outcome determinism() {
    Outcome o;
    const Json cfg = load_config_file(fs::path(NLEVEL_CONFIG_DIR) / "three_level.json");
    std::vector<std::string> csv;
    for (int threads : {1, 1, 4}) {
        RunOverrides ov;
        ov.threads = threads;
        RunConfig rc = resolve_config(cfg, "compare", ov);
        rc.out_dir = fs::temp_directory_path() / ("nlevel_acceptance_" + std::to_string(csv.size()));
        fs::remove_all(rc.out_dir);
        std::ostringstream log;
        if (run(rc, log) != 0) {
            o.require(false, "compare run failed: " + log.str());
            return o;
        }
        csv.push_back(slurp(rc.out_dir / "compare.csv"));
    }
    o.require(!csv[0].empty() && csv[0] == csv[1] && csv[0] == csv[2],
              "3 runs (threads 1, 1, 4), " + std::to_string(csv[0].size()) + " bytes");
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
        double limit_s;  // runtime limit, 0 when none is set
    };
    const std::vector<Criterion> all = {
        {1, "projector algebra", projector_algebra, 10.0},
        {2, "S = I + O(eps)", s_minus_identity, 300.0},
        {3, "unitarity with respect to R", pros_unitarity, 0.0},
        {4, "decay rates", decay_rates, 900.0},
        {5, "prefactor convergence", prefactor_convergence, 0.0},
        {6, "monodromy", monodromy_checks, 0.0},
        {7, "dissipative paths", dissipativity, 0.0},
        {8, "superasymptotics", superasymptotics, 0.0},
        {9, "real-potential block symmetry", block_symmetry, 0.0},
        {10, "determinism", determinism, 0.0},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0.0) o.require(secs < c.limit_s, "runtime " + fmt("%.1f s", secs) + " < " + fmt("%.0f s", c.limit_s));
        else o.detail += "; runtime " + fmt("%.1f s", secs);
        std::printf("criterion %2d %-30s %s  %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
