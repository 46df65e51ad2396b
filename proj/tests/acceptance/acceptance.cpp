// Acceptance checks. One criterion per invocation:
//   acceptance <criterion> [--out DIR]
// prints a single PASS/FAIL line and exits 0/1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <boost/math/distributions/chi_squared.hpp>

#include "../unit/grad_check.hpp"
#include "../unit/quadrature.hpp"
#include "infmem/config.hpp"
#include "infmem/errors.hpp"
#include "infmem/harness.hpp"
#include "infmem/io.hpp"
#include "infmem/memory.hpp"
#include "infmem/model.hpp"

namespace fs = std::filesystem;
using namespace infmem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path fresh(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// miniature model, memory filled by two segments, then every parameter on the third
Outcome gradient_suite(const fs::path&) {
    ModelConfig c;
    c.vocab = 8;
    c.layers = 1;
    c.heads = 2;
    c.embed = 8;
    c.input_len = 8;
    c.stm_len = 8;
    c.ff_hidden = 16;
    c.basis_count = 8;
    c.basis_widths = {0.05, 0.1};
    c.ltm = LtmMode::linspace;
    c.kl_weight = 1e-3;
    Model m(c, 11);
    std::mt19937_64 rng(12);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto [name, v] : m.parameters()) {
        for (double& x : v.mutable_value().data()) {
            x += n(rng);
        }
    }
    ModelState st = initial_state(m, 13);
    {
        NoGradGuard guard;
        const std::vector<int> a{1, 5, 2, 7, 3, 3, 0, 6};
        const std::vector<int> b{4, 4, 1, 0, 2, 6, 5, 7};
        forward(m, a, st);
        forward(m, b, st);
    }
    if (!st.layers[0].memory.initialized()) {
        return {false, "memory not initialised before the checked segment"};
    }
    const std::vector<int> tokens{3, 1, 4, 1, 5, 2, 6, 5};
    const std::vector<int> target{1, 4, 1, 5, 2, 6, 5, 3};
    auto loss = [&] {
        ModelState copy = st;
        const ForwardResult fr = forward(m, tokens, copy);
        return ad::add(nll_loss(fr.logits, target), ad::scale(kl_loss(fr.variances, c.kl_sigma0, c.kl_form), c.kl_weight));
    };
    std::vector<std::pair<std::string, Var>> leaves(m.parameters().begin(), m.parameters().end());
    const auto res = testing::check_gradients(loss, leaves, 1e-6, 1e-4, 1e-7);
    std::string detail = fmt("%zu entries over %zu tensors, worst rel err %.2e (tol 1e-4, abs 1e-7)", res.checked,
                             leaves.size(), res.worst_rel);
    if (!res.ok) {
        detail += "; first mismatch " + res.report.substr(0, res.report.find('\n'));
    }
    return {res.ok && res.checked == m.parameter_count(), detail};
}

Outcome quadrature(const fs::path&) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> log_sd(std::log(1e-3), std::log(0.5));
    std::uniform_real_distribution<double> wide(-1.0, 2.0);
    const BasisSpec spec = make_basis(16, std::vector<double>{0.01, 0.05});
    std::uniform_int_distribution<std::size_t> pick(0, spec.size() - 1);
    double worst_eb = 0.0;
    double worst_mass = 0.0;
    const int cases = 1000;
    for (int k = 0; k < cases; ++k) {
        const double mu = unit(rng);
        const double sd = std::exp(log_sd(rng));
        const std::size_t j = pick(rng);
        const double closed = expected_basis(mu, sd * sd, spec)[j];
        std::vector<double> breaks;
        testing::add_peak_breaks(breaks, mu, sd);
        testing::add_peak_breaks(breaks, spec.centers[j], spec.widths[j]);
        const double q = testing::integrate(
            [&](double t) { return testing::normal_pdf(t, mu, sd) * testing::normal_pdf(t, spec.centers[j], spec.widths[j]); }, -10.0,
            11.0, breaks);
        worst_eb = std::max(worst_eb, std::abs(closed - q));

        const double m2 = wide(rng);
        const double s2 = std::exp(log_sd(rng));
        double a = wide(rng);
        double b = wide(rng);
        if (a > b) {
            std::swap(a, b);
        }
        std::vector<double> br;
        testing::add_peak_breaks(br, m2, s2);
        const double qm = testing::integrate([&](double t) { return testing::normal_pdf(t, m2, s2); }, a, b, br);
        worst_mass = std::max(worst_mass, std::abs(gaussian_interval_mass(m2, s2 * s2, a, b) - qm));
    }
    return {worst_eb <= 1e-8 && worst_mass <= 1e-8,
            fmt("%d cases each; expected_basis max err %.2e, interval mass max err %.2e (tol 1e-8)", cases, worst_eb,
                worst_mass)};
}

Outcome regression_tradeoff(const fs::path& out) {
    SweepOptions o;
    o.lengths = {1024};
    o.basis = {16, 32, 64, 128, 256, 512};
    o.embed = 32;
    o.seeds = 10;
    o.seed = 1;
    fresh(out);
    const auto rows = sweep_basis(o, out / "sweep.csv");
    bool monotone = true;
    std::string curve;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        curve += fmt("%s%zu:%.4f", i ? " " : "", rows[i].basis, rows[i].mse);
        if (i > 0 && rows[i].mse > rows[i - 1].mse) {
            monotone = false;
        }
    }
    const double ratio = rows.back().mse / rows[rows.size() - 2].mse;
    return {monotone && ratio > 0.5,
            fmt("mse by N {%s}; non-increasing=%s, MSE(512)/MSE(256)=%.3f (need > 0.5)", curve.c_str(),
                monotone ? "yes" : "no", ratio)};
}

Outcome sorting(const fs::path& out) {
    RunConfig base = load_config(fs::path(INFMEM_SOURCE_DIR) / "configs" / "desk.cfg");
    fresh(out);
    const auto t0 = std::chrono::steady_clock::now();
    std::map<std::string, EvalResult> results;
    CsvWriter csv(out / "sorting.csv", {"variant", "length", "accuracy", "nll", "train_seconds"});
    for (LtmMode mode : {LtmMode::linspace, LtmMode::off, LtmMode::sticky}) {
        RunConfig cfg = base;
        cfg.model.ltm = mode;
        cfg.out_dir = (out / std::string(ltm_mode_name(mode))).string();
        const auto t1 = std::chrono::steady_clock::now();
        const TrainSummary s = train_run(cfg);
        const double secs = seconds_since(t1);
        const EvalResult r = eval_run(s.checkpoint, "test", cfg.out_dir);
        results[std::string(ltm_mode_name(mode))] = r;
        csv.row(std::vector<std::string>{std::string(ltm_mode_name(mode)), std::to_string(cfg.data.length), csv_number(r.accuracy),
                                         csv_number(r.nll), csv_number(secs)});
        std::fprintf(stderr, "sorting %s: accuracy %.4f nll %.4f (%.0f s)\n", std::string(ltm_mode_name(mode)).c_str(), r.accuracy,
                     r.nll, secs);
    }
    const double lin = results["linspace"].accuracy;
    const double off = results["off"].accuracy;
    const double sticky = results["sticky"].accuracy;
    const double total = seconds_since(t0);
    const bool margin = lin - off >= 0.05;
    const bool above_chance = lin >= 0.05 + 0.20 && off >= 0.05 + 0.20;
    return {margin && above_chance,
            fmt("test accuracy linspace %.4f, stm-only %.4f, sticky %.4f; margin %+.4f (need >= 0.05), both >= 0.25: "
                "%s; %.0f s total",
                lin, off, sticky, lin - off, above_chance ? "yes" : "no", total)};
}

Outcome boundedness(const fs::path& out) {
    BenchOptions o;
    o.basis = 64;
    o.embed = 64;
    o.length = 64;
    o.heads = 2;
    o.updates = 100;
    o.repeats = 7;
    fresh(out);
    std::string detail;
    bool ok = true;
    for (UpdateMode mode : {UpdateMode::linspace, UpdateMode::sticky}) {
        o.mode = mode;
        const char* name = mode == UpdateMode::linspace ? "linspace" : "sticky";
        const auto rows = bench_memory(o, out / (std::string("bench_") + name + ".csv"));
        bool constant = true;
        for (const auto& r : rows) {
            constant = constant && r.state_bytes == rows[0].state_bytes;
        }
        auto mean = [&](std::size_t lo, std::size_t hi, auto field) {
            double s = 0.0;
            for (std::size_t i = lo; i < hi; ++i) {
                s += rows[i].*field;
            }
            return s / static_cast<double>(hi - lo);
        };
        const double upd = mean(90, 100, &BenchRow::update_ms) / mean(0, 10, &BenchRow::update_ms);
        const double rd = mean(90, 100, &BenchRow::read_ms) / mean(0, 10, &BenchRow::read_ms);
        ok = ok && constant && upd <= 1.5 && rd <= 1.5;
        detail += fmt("%s%s: %zu bytes %s, update time ratio %.2f, read time ratio %.2f", detail.empty() ? "" : "; ",
                      name, rows[0].state_bytes, constant ? "constant" : "NOT constant", upd, rd);
    }
    return {ok, detail + " (ratios are updates 91-100 over 1-10, need <= 1.5)"};
}

Outcome sticky_statistics(const fs::path&) {
    const double alpha = 0.01;
    const std::size_t m = 10000;
    // concentration: μ = 0.5 with tiny variance
    AttentionRecord peak{1, 1, {0.5}, {1e-6}};
    Rng rng(41);
    const auto a = sticky_locations(std::span(&peak, 1), 10, m, rng);
    const auto inside = std::count_if(a.positions.begin(), a.positions.end(), [](double t) { return t >= 0.4 && t <= 0.6; });
    const double frac = static_cast<double>(inside) / static_cast<double>(m);
    // uniformity: a flat mixture of 1000 narrow densities over [0,1]
    AttentionRecord flat;
    flat.heads = 2;
    flat.queries = 500;
    for (std::size_t i = 0; i < 1000; ++i) {
        flat.mean.push_back((static_cast<double>(i) + 0.5) / 1000.0);
        flat.variance.push_back(1e-6);
    }
    const std::size_t bins = 10;
    const auto b = sticky_locations(std::span(&flat, 1), bins, m, rng);
    std::vector<double> counts(bins, 0.0);
    for (double t : b.positions) {
        counts[std::min<std::size_t>(bins - 1, static_cast<std::size_t>(t * bins))] += 1.0;
    }
    const double expected = static_cast<double>(m) / static_cast<double>(bins);
    double chi2 = 0.0;
    for (double c : counts) {
        chi2 += (c - expected) * (c - expected) / expected;
    }
    const boost::math::chi_squared dist(static_cast<double>(bins - 1));
    const double crit = boost::math::quantile(boost::math::complement(dist, alpha));
    const double pvalue = boost::math::cdf(boost::math::complement(dist, chi2));
    const bool sorted = std::is_sorted(a.positions.begin(), a.positions.end()) &&
                        std::is_sorted(b.positions.begin(), b.positions.end());
    const bool ok = frac >= 0.95 && chi2 < crit && sorted && a.positions.size() == m && b.positions.size() == m;
    return {ok, fmt("M=%zu: %.4f of samples in [0.4,0.6] (need >= 0.95); flat mixture chi2=%.2f, p=%.3f, critical "
                    "%.3f at alpha=%.2f",
                    m, frac, chi2, pvalue, crit, alpha)};
}

std::vector<std::vector<double>> curves(const fs::path& csv) {
    const CsvTable t = read_csv(csv);
    std::vector<std::vector<double>> rows;
    for (const auto& r : t.rows) {
        std::vector<double> v;
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (t.columns[c] != "tokens_per_s") {
                v.push_back(std::stod(r[c]));
            }
        }
        rows.push_back(v);
    }
    return rows;
}

Outcome determinism(const fs::path& out) {
    RunConfig base;
    base.model.embed = 32;
    base.model.input_len = 16;
    base.model.stm_len = 16;
    base.model.ff_hidden = 64;
    base.model.basis_count = 16;
    base.data.train = 50;
    base.data.val = 10;
    base.data.test = 10;
    base.data.length = 100;
    base.train.steps = 100;
    base.train.batch = 2;
    base.train.lr = 1e-3;
    base.train.seed = 7;
    base.train.emit_every = 5;
    fresh(out);
    std::string detail;
    bool ok = true;
    for (LtmMode mode : {LtmMode::linspace, LtmMode::sticky, LtmMode::off}) {
        RunConfig cfg = base;
        cfg.model.ltm = mode;
        const std::string name(ltm_mode_name(mode));
        RunConfig a = cfg, b = cfg, c = cfg;
        a.out_dir = (out / (name + "_a")).string();
        b.out_dir = (out / (name + "_b")).string();
        c.out_dir = (out / (name + "_resumed")).string();
        train_run(a);
        train_run(b);
        train_run(c, {}, 50);
        fs::copy_file(fs::path(c.out_dir) / "checkpoint.bin", fs::path(c.out_dir) / "step50.bin");
        train_run(c, fs::path(c.out_dir) / "step50.bin");
        const auto ca = curves(fs::path(a.out_dir) / "train.csv");
        const auto cb = curves(fs::path(b.out_dir) / "train.csv");
        const auto cc = curves(fs::path(c.out_dir) / "train.csv");
        const bool identical = ca == cb && !ca.empty();
        double worst = ca.size() == cc.size() ? 0.0 : INFINITY;
        for (std::size_t i = 0; i < ca.size() && i < cc.size(); ++i) {
            for (std::size_t j = 0; j < ca[i].size(); ++j) {
                worst = std::max(worst, std::abs(ca[i][j] - cc[i][j]));
            }
        }
        const Checkpoint pa = load_checkpoint(fs::path(a.out_dir) / "checkpoint.bin");
        const Checkpoint pb = load_checkpoint(fs::path(b.out_dir) / "checkpoint.bin");
        bool same_params = true;
        for (std::size_t i = 0; i < pa.model->parameters().size(); ++i) {
            const auto x = pa.model->parameters()[i].second.value().data();
            const auto y = pb.model->parameters()[i].second.value().data();
            same_params = same_params && std::equal(x.begin(), x.end(), y.begin(), y.end());
        }
        ok = ok && identical && same_params && worst <= 1e-8;
        detail += fmt("%s%s: repeat %s, params %s, resume max diff %.1e", detail.empty() ? "" : "; ", name.c_str(),
                      identical ? "identical" : "DIFFERENT", same_params ? "bit-equal" : "DIFFERENT", worst);
    }
    return {ok, detail + " (100 steps vs 50 + resume + 50, tol 1e-8; tokens_per_s excluded)"};
}

Outcome out_of_scope(const fs::path&) {
    return {true,
            "pretrained-LM fine-tuning perplexities (Wikitext-103, PG-19), from-scratch Wikitext-103 LM and "
            "document-grounded dialogue metrics are not reproduced; no criterion depends on them"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<Outcome(const fs::path&)>> criteria{
        {"gradient_suite", gradient_suite},
        {"quadrature", quadrature},
        {"regression_tradeoff", regression_tradeoff},
        {"desk_sorting", sorting},
        {"boundedness", boundedness},
        {"sticky_statistics", sticky_statistics},
        {"determinism_resume", determinism},
        {"out_of_scope", out_of_scope},
    };
    if (argc < 2 || !criteria.count(argv[1])) {
        std::fprintf(stderr, "usage: acceptance <criterion> [--out DIR]\ncriteria:");
        for (const auto& [k, v] : criteria) {
            std::fprintf(stderr, " %s", k.c_str());
        }
        std::fprintf(stderr, "\n");
        return 2;
    }
    const std::string name = argv[1];
    fs::path out = fs::path("acceptance_out") / name;
    for (int i = 2; i + 1 < argc; ++i) {
        if (std::strcmp(argv[i], "--out") == 0) {
            out = argv[i + 1];
        }
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = criteria.at(name)(out);
    } catch (const std::exception& e) {
        o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
    return o.pass ? 0 : 1;
}
