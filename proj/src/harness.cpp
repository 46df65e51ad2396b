#include "infmem/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "infmem/errors.hpp"
#include "infmem/seed.hpp"

namespace infmem {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kEvalStream = 0xe7a1;

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v.empty() ? 0.0 : v[v.size() / 2];
}

void dump_diagnostic(const std::filesystem::path& dir, const Model& model, std::uint64_t step, const std::string& what) {
    std::ofstream out(dir / "diagnostic.txt", std::ios::trunc);
    out << "step = " << step + 1 << "\nerror = " << what << "\n";
    for (const auto& [name, v] : model.parameters()) {
        double sq = 0.0;
        bool finite = true;
        for (double x : v.value().data()) {
            sq += x * x;
            finite = finite && std::isfinite(x);
        }
        out << name << " norm=" << std::sqrt(sq) << (finite ? "" : " NON-FINITE") << "\n";
    }
}

}  // namespace

std::vector<SortingInstance> load_split(const RunConfig& cfg, const std::string& split) {
    if (cfg.data_dir.empty()) {
        return generate_split(cfg.data, split);
    }
    return read_split(std::filesystem::path(cfg.data_dir) / (split + ".txt"));
}

void gen_data(const RunConfig& cfg) {
    if (cfg.data_dir.empty()) {
        throw InvalidArgument("gen-data needs data.dir (or --out) to write into");
    }
    gen_dataset(cfg.data, cfg.data_dir);
}

TrainSummary train_run(const RunConfig& cfg, const std::filesystem::path& resume, std::uint64_t stop_at) {
    const std::filesystem::path out(cfg.out_dir);
    RunLock lock(out);
    const auto data = load_split(cfg, "train");

    std::unique_ptr<Model> model;
    std::unique_ptr<Adam> adam;
    if (!resume.empty()) {
        Checkpoint ck = load_checkpoint(resume);
        if (!(ck.config.model == cfg.model)) {
            throw InvalidArgument("checkpoint " + resume.string() + " was trained with a different model config");
        }
        if (!ck.adam) {
            throw InvalidArgument("checkpoint " + resume.string() + " has no optimizer state to resume from");
        }
        model = std::move(ck.model);
        adam = std::make_unique<Adam>(*model, AdamConfig{.lr = cfg.train.lr, .clip = cfg.train.clip,
                                                         .total_steps = cfg.train.steps});
        adam->first_moment() = ck.adam->first_moment();
        adam->second_moment() = ck.adam->second_moment();
        adam->set_steps_taken(ck.adam->steps_taken());
    } else {
        model = std::make_unique<Model>(cfg.model, derive_seed(cfg.train.seed, {kInitStream}));
        adam = std::make_unique<Adam>(*model, AdamConfig{.lr = cfg.train.lr, .clip = cfg.train.clip,
                                                         .total_steps = cfg.train.steps});
    }
    {
        std::ofstream c(out / "config.cfg", std::ios::trunc);
        c << format_config(cfg);
        if (!c) {
            throw IoError("cannot write " + (out / "config.cfg").string());
        }
    }
    CsvWriter csv(out / "train.csv", {"step", "nll", "kl", "total", "lr", "tokens_per_s"});
    const std::uint64_t until = stop_at > 0 ? std::min(stop_at, cfg.train.steps) : cfg.train.steps;
    TrainSummary summary;
    summary.checkpoint = out / "checkpoint.bin";
    ModelState last;
    auto emit = [&](const TrainRow& r) {
        csv.row(std::vector<double>{static_cast<double>(r.step), r.nll, r.kl, r.total, r.lr, r.tokens_per_s});
        summary.last_nll = r.nll;
    };
    while (adam->steps_taken() < until) {
        std::uint64_t next = until;
        if (cfg.checkpoint_every > 0) {
            next = std::min(until, (adam->steps_taken() / cfg.checkpoint_every + 1) * cfg.checkpoint_every);
        }
        try {
            train(*model, *adam, data, cfg.train, next, emit, &last);
        } catch (const NumericError& e) {
            dump_diagnostic(out, *model, adam->steps_taken(), e.what());
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(adam->steps_taken() + 1) +
                               "; see " + (out / "diagnostic.txt").string());
        }
        save_checkpoint(summary.checkpoint, cfg, *model, adam.get(), last.layers.empty() ? nullptr : &last);
        if (next < until) {
            std::filesystem::copy_file(summary.checkpoint, out / ("checkpoint_" + std::to_string(next) + ".bin"),
                                       std::filesystem::copy_options::overwrite_existing);
        }
    }
    if (!std::filesystem::exists(summary.checkpoint)) {
        save_checkpoint(summary.checkpoint, cfg, *model, adam.get(), nullptr);
    }
    summary.steps = adam->steps_taken();
    return summary;
}

EvalResult eval_run(const std::filesystem::path& checkpoint, const std::string& split,
                    const std::filesystem::path& out_dir, const std::string& data_dir_override) {
    Checkpoint ck = load_checkpoint(checkpoint);
    RunConfig cfg = ck.config;
    if (!data_dir_override.empty()) {
        cfg.data_dir = data_dir_override;
    }
    auto data = load_split(cfg, split);
    if (cfg.eval_limit > 0 && data.size() > cfg.eval_limit) {
        data.resize(cfg.eval_limit);
    }
    const EvalResult r = evaluate_split(*ck.model, data, derive_seed(cfg.train.seed, {kEvalStream}));
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    CsvWriter csv(out_dir / "eval.csv", {"split", "accuracy", "nll"});
    csv.row(std::vector<std::string>{split, csv_number(r.accuracy), csv_number(r.nll)});
    return r;
}

double reconstruction_mse(std::size_t length, std::size_t embed, std::size_t basis, std::span<const double> widths,
                          double ridge, std::size_t seeds, std::uint64_t seed) {
    if (seeds == 0 || length == 0 || embed == 0) {
        throw InvalidArgument("reconstruction_mse needs positive length, embed and seed count");
    }
    const BasisSpec spec = make_basis(basis, std::vector<double>(widths.begin(), widths.end()));
    const auto op = regression_operator(spec, unit_positions(length), ridge);
    double total = 0.0;
    for (std::size_t s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(seed, {length, embed, s}));
        std::normal_distribution<double> normal(0.0, 1.0);
        Tensor x = Tensor::matrix(length, embed);
        for (double& v : x.data()) {
            v = normal(rng);
        }
        const Tensor coeffs = fit_signal(x, op);
        const Tensor approx = kernels::matmul_tn(op.design, coeffs);
        double sq = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = approx[i] - x[i];
            sq += d * d;
        }
        total += sq / static_cast<double>(x.size());
    }
    return total / static_cast<double>(seeds);
}

std::vector<SweepRow> sweep_basis(const SweepOptions& opt, const std::filesystem::path& csv_path) {
    if (opt.lengths.empty() || opt.basis.empty()) {
        throw InvalidArgument("sweep-basis needs at least one length and one basis size");
    }
    CsvWriter csv(csv_path, {"length", "N", "mse", "accuracy"});
    std::vector<SweepRow> rows;
    for (std::size_t length : opt.lengths) {
        for (std::size_t n : opt.basis) {
            SweepRow row;
            row.length = length;
            row.basis = n;
            row.mse = reconstruction_mse(length, opt.embed, n, opt.widths, opt.ridge, opt.seeds, opt.seed);
            row.accuracy = std::numeric_limits<double>::quiet_NaN();
            if (opt.train_steps > 0) {
                RunConfig run = opt.run;
                run.model.basis_count = n;
                run.model.basis_widths = opt.widths;
                run.model.ridge = opt.ridge;
                run.data.length = length;
                run.data_dir.clear();
                run.train.steps = opt.train_steps;
                const auto train_set = generate_split(run.data, "train");
                auto val = generate_split(run.data, "val");
                if (run.eval_limit > 0 && val.size() > run.eval_limit) {
                    val.resize(run.eval_limit);
                }
                Model model(run.model, derive_seed(run.train.seed, {kInitStream}));
                Adam adam(model, AdamConfig{.lr = run.train.lr, .clip = run.train.clip, .total_steps = run.train.steps});
                train(model, adam, train_set, run.train, run.train.steps, [](const TrainRow&) {});
                row.accuracy = evaluate_split(model, val, derive_seed(run.train.seed, {kEvalStream})).accuracy;
            }
            csv.row(std::vector<double>{static_cast<double>(length), static_cast<double>(n), row.mse, row.accuracy});
            rows.push_back(row);
        }
    }
    return rows;
}

std::vector<BenchRow> bench_memory(const BenchOptions& opt, const std::filesystem::path& csv_path) {
    if (opt.heads == 0 || opt.embed % opt.heads != 0) {
        throw InvalidArgument("bench-memory: embed must be divisible by heads");
    }
    if (opt.repeats == 0) {
        throw InvalidArgument("bench-memory: repeats must be positive");
    }
    Rng rng(opt.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random = [&](Shape shape, double sd) {
        Tensor t(std::move(shape));
        for (double& v : t.data()) {
            v = sd * normal(rng);
        }
        return t;
    };
    const std::size_t d = opt.embed / opt.heads;
    const double se = 1.0 / std::sqrt(static_cast<double>(opt.embed));
    LtmParams params;
    for (std::size_t h = 0; h < opt.heads; ++h) {
        params.heads.push_back({Var::constant(random({opt.embed, d}, se)), Var::constant(random({opt.embed, d}, se))});
        params.affine.push_back({Var::constant(random({opt.basis, 1}, 0.1)), Var::constant(Tensor::matrix(1, 1)),
                                 Var::constant(random({opt.basis, 1}, 0.1)), Var::constant(Tensor::matrix(1, 1))});
    }
    params.out = Var::constant(random({opt.embed, opt.embed}, se));
    auto spec = std::make_shared<const BasisSpec>(make_basis(opt.basis, std::vector<double>{0.01, 0.05}));
    MemoryState mem(spec, opt.embed, 0.75, opt.basis, 0.5);

    CsvWriter csv(csv_path, {"update_count", "state_bytes", "update_ms", "read_ms"});
    std::vector<BenchRow> rows;
    AttentionRecord record;
    NoGradGuard guard;
    for (std::size_t u = 0; u < opt.updates; ++u) {
        const Tensor x = random({opt.length, opt.embed}, 1.0);
        std::vector<Var> queries;
        for (std::size_t h = 0; h < opt.heads; ++h) {
            queries.push_back(Var::constant(random({opt.length, d}, 1.0)));
        }
        std::span<const AttentionRecord> records;
        if (!record.empty()) {
            records = std::span<const AttentionRecord>(&record, 1);
        }
        // Every repeat starts from the same state and RNG stream; the last result is kept.
        std::vector<double> update_ms;
        MemoryState next;
        for (std::size_t r = 0; r < opt.repeats; ++r) {
            Rng local(derive_seed(opt.seed, {u}));
            const auto t0 = std::chrono::steady_clock::now();
            next = update(mem, x, opt.mode, records, 32, local);
            update_ms.push_back(elapsed_ms(t0));
        }
        mem = std::move(next);
        std::vector<double> read_ms;
        for (std::size_t r = 0; r < opt.repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            LtmOutput lo = ltm_attend(mem, queries, params);
            read_ms.push_back(elapsed_ms(t0));
            record = std::move(lo.record);
        }
        BenchRow row{mem.update_count(), memory_state_bytes(mem), median(update_ms), median(read_ms)};
        csv.row(std::vector<double>{static_cast<double>(row.update_count), static_cast<double>(row.state_bytes),
                                    row.update_ms, row.read_ms});
        rows.push_back(row);
    }
    return rows;
}

void inspect_memory(const std::filesystem::path& checkpoint, const std::filesystem::path& out_dir,
                    const std::string& split, std::size_t index, std::size_t points, std::size_t bins) {
    if (points < 2 || bins == 0) {
        throw InvalidArgument("inspect-memory needs at least 2 points and 1 bin");
    }
    Checkpoint ck = load_checkpoint(checkpoint);
    if (ck.config.model.ltm == LtmMode::off) {
        throw InvalidArgument("checkpoint " + checkpoint.string() + " has no long-term memory to inspect");
    }
    const auto data = load_split(ck.config, split);
    if (index >= data.size()) {
        throw InvalidArgument("instance " + std::to_string(index) + " out of range for split " + split + " (" +
                              std::to_string(data.size()) + " instances)");
    }
    const InstanceResult r = run_instance(*ck.model, data[index], derive_seed(ck.config.train.seed, {kEvalStream, index}),
                                          false);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const std::size_t e = ck.config.model.embed;
    std::vector<std::string> cols{"layer", "t"};
    for (std::size_t j = 0; j < e; ++j) {
        cols.push_back("value_" + std::to_string(j));
    }
    std::filesystem::remove(out_dir / "memory_samples.csv", ec);
    std::filesystem::remove(out_dir / "sticky_hist.csv", ec);
    CsvWriter samples(out_dir / "memory_samples.csv", cols);
    CsvWriter hist(out_dir / "sticky_hist.csv", {"layer", "bin", "lo", "hi", "prob"});
    for (std::size_t l = 0; l < r.state.layers.size(); ++l) {
        const LayerState& ls = r.state.layers[l];
        if (!ls.memory.initialized()) {
            continue;
        }
        for (std::size_t k = 0; k < points; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(points - 1);
            std::vector<double> row{static_cast<double>(l), t};
            const auto v = evaluate(ls.memory, t);
            row.insert(row.end(), v.begin(), v.end());
            samples.row(row);
        }
        Rng rng(0);
        const StickySample s = sticky_locations(std::span<const AttentionRecord>(&ls.record, 1), bins, 1, rng);
        for (std::size_t b = 0; b < bins; ++b) {
            const double lo = static_cast<double>(b) / static_cast<double>(bins);
            const double hi = static_cast<double>(b + 1) / static_cast<double>(bins);
            hist.row(std::vector<double>{static_cast<double>(l), static_cast<double>(b), lo, hi, s.bin_probs[b]});
        }
    }
}

}  // namespace infmem
