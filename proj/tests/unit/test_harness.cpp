#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "infmem/config.hpp"
#include "infmem/errors.hpp"
#include "infmem/harness.hpp"
#include "infmem/io.hpp"
#include "infmem/seed.hpp"

namespace infmem {
namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("infmem_harness_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig small_run(const std::filesystem::path& out) {
    RunConfig c;
    c.model.layers = 1;
    c.model.heads = 2;
    c.model.embed = 8;
    c.model.input_len = 8;
    c.model.stm_len = 8;
    c.model.ff_hidden = 16;
    c.model.basis_count = 8;
    c.model.basis_widths = {0.05, 0.1};
    c.model.sticky_bins = 4;
    c.data.train = 12;
    c.data.val = 6;
    c.data.test = 6;
    c.data.length = 30;
    c.data.seed = 3;
    c.train.steps = 20;
    c.train.batch = 2;
    c.train.lr = 3e-3;
    c.train.emit_every = 5;
    c.out_dir = out.string();
    return c;
}

std::vector<double> vals(const Tensor& t) {
    return {t.data().begin(), t.data().end()};
}

// every column except tokens_per_s, which is wall-clock
std::vector<std::vector<double>> curves(const std::filesystem::path& csv) {
    const CsvTable t = read_csv(csv);
    std::vector<std::vector<double>> out;
    for (const auto& row : t.rows) {
        std::vector<double> r;
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (t.columns[c] != "tokens_per_s") {
                r.push_back(std::stod(row[c]));
            }
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST(Config, RoundTrip) {
    RunConfig c = small_run("some/dir");
    c.model.ltm = LtmMode::sticky;
    c.model.kl_form = KlForm::standard;
    c.model.basis_widths = {0.1, 1.0 / 3.0, 0.07};
    c.model.tau = 0.3;
    c.model.gate = false;
    c.model.shared_affine = true;
    c.data_dir = "data/x";
    c.train.lr = 1.0 / 7.0;
    c.checkpoint_every = 9;
    c.eval_limit = 4;
    const RunConfig back = parse_config(format_config(c));
    EXPECT_EQ(back, c);
    EXPECT_EQ(format_config(back), format_config(c));
}

TEST(Config, DefaultsRoundTrip) {
    EXPECT_EQ(parse_config(format_config(RunConfig{})), RunConfig{});
}

TEST(Config, ParseErrors) {
    try {
        parse_config("[model]\nlayers = 2\nbogus = 1\n");
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
    }
    EXPECT_THROW(parse_config("[model]\nlayers = two\n"), InvalidArgument);
    EXPECT_THROW(parse_config("[model]\nltm = sometimes\n"), InvalidArgument);
    EXPECT_THROW(parse_config("layers 2\n"), InvalidArgument);
    EXPECT_THROW(load_config("/nonexistent/c.cfg"), IoError);
}

TEST(Config, CommentsAndBlankLines) {
    const RunConfig c = parse_config("# desk\n\n[train]\nsteps = 77   # inline\n[model]\nltm = off\n");
    EXPECT_EQ(c.train.steps, 77u);
    EXPECT_EQ(c.model.ltm, LtmMode::off);
}

TEST(Config, EnvOverrides) {
    RunConfig c;
    std::string a = "INFMEM_TRAIN_STEPS=50";
    std::string b = "INFMEM_MODEL_LTM=sticky";
    std::string d = "UNRELATED=1";
    char* env[] = {a.data(), b.data(), d.data(), nullptr};
    apply_env_overrides(c, env);
    EXPECT_EQ(c.train.steps, 50u);
    EXPECT_EQ(c.model.ltm, LtmMode::sticky);
    std::string bad = "INFMEM_TRAIN_BATCH=lots";
    char* env2[] = {bad.data(), nullptr};
    EXPECT_THROW(apply_env_overrides(c, env2), InvalidArgument);
}

TEST(Csv, EmptyRunIsHeaderOnly) {
    const auto dir = scratch_dir("csv_empty");
    { CsvWriter w(dir / "train.csv", {"step", "nll", "kl", "total", "lr", "tokens_per_s"}); }
    EXPECT_EQ(slurp(dir / "train.csv"), "step,nll,kl,total,lr,tokens_per_s\n");
    const CsvTable t = read_csv(dir / "train.csv");
    EXPECT_EQ(t.columns.size(), 6u);
    EXPECT_TRUE(t.rows.empty());
}

TEST(Csv, RoundTripIsLossless) {
    const auto dir = scratch_dir("csv_rt");
    const std::vector<std::vector<double>> rows{{1.0, 0.1, 1.0 / 3.0}, {2.0, 1e-300, -2.5e17}, {3.0, M_PI, 0.0}};
    {
        CsvWriter w(dir / "x.csv", {"a", "b", "c"});
        w.row(rows[0]);
    }
    {
        CsvWriter w(dir / "x.csv", {"a", "b", "c"});  // append
        w.row(rows[1]);
        w.row(rows[2]);
    }
    const CsvTable t = read_csv(dir / "x.csv");
    ASSERT_EQ(t.rows.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_EQ(std::stod(t.rows[i][j]), rows[i][j]);
        }
    }
    EXPECT_EQ(t.column("c"), 2u);
    EXPECT_THROW(CsvWriter(dir / "x.csv", {"a", "b"}), IoError);
    CsvWriter w(dir / "y.csv", {"a", "b"});
    EXPECT_THROW(w.row(std::vector<double>{1.0}), ShapeError);
    EXPECT_THROW(CsvWriter(dir / "no/such/dir/z.csv", {"a"}), IoError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto dir = scratch_dir("ckpt");
    RunConfig cfg = small_run(dir);
    cfg.model.ltm = LtmMode::sticky;
    Model model(cfg.model, 5);
    Adam adam(model, AdamConfig{.lr = 1e-3, .total_steps = 10});
    const auto data = generate_split(cfg.data, "train");
    ModelState last;
    train(model, adam, data, cfg.train, 3, [](const TrainRow&) {}, &last);
    ASSERT_FALSE(last.layers.empty());
    ASSERT_TRUE(last.layers[0].memory.initialized());
    save_checkpoint(dir / "c.bin", cfg, model, &adam, &last);

    const Checkpoint ck = load_checkpoint(dir / "c.bin");
    EXPECT_EQ(ck.config, cfg);
    ASSERT_TRUE(ck.adam);
    EXPECT_EQ(ck.adam->steps_taken(), 3u);
    const auto a = model.parameters();
    const auto b = ck.model->parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].first, b[i].first);
        EXPECT_EQ(vals(a[i].second.value()), vals(b[i].second.value())) << a[i].first;
        EXPECT_EQ(vals(adam.first_moment()[i]), vals(ck.adam->first_moment()[i]));
        EXPECT_EQ(vals(adam.second_moment()[i]), vals(ck.adam->second_moment()[i]));
    }
    ASSERT_EQ(ck.state.layers.size(), last.layers.size());
    EXPECT_EQ(serialize_memory(ck.state.layers[0].memory), serialize_memory(last.layers[0].memory));

    // saving what was loaded reproduces the file
    save_checkpoint(dir / "d.bin", ck.config, *ck.model, ck.adam.get(), &ck.state);
    EXPECT_EQ(slurp(dir / "c.bin"), slurp(dir / "d.bin"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
    const auto dir = scratch_dir("ckpt_bad");
    std::ofstream(dir / "junk.bin") << "not a checkpoint";
    EXPECT_THROW(load_checkpoint(dir / "junk.bin"), IoError);
    EXPECT_THROW(load_checkpoint(dir / "missing.bin"), IoError);
    RunConfig cfg = small_run(dir);
    Model model(cfg.model, 1);
    save_checkpoint(dir / "c.bin", cfg, model, nullptr, nullptr);
    std::string bytes = slurp(dir / "c.bin");
    bytes.resize(bytes.size() / 2);
    std::ofstream(dir / "t.bin", std::ios::binary) << bytes;
    EXPECT_THROW(load_checkpoint(dir / "t.bin"), IoError);
}

TEST(RunLock, IsExclusive) {
    const auto dir = scratch_dir("lock");
    {
        RunLock a(dir);
        EXPECT_THROW(RunLock b(dir), StateError);
    }
    EXPECT_NO_THROW(RunLock c(dir));
    // a lock left by a process that no longer exists is reclaimed
    std::ofstream(dir / ".lock") << "999999999\n";
    EXPECT_NO_THROW(RunLock d(dir));
}

TEST(Harness, TrainingIsDeterministic) {
    const auto a = scratch_dir("det_a");
    const auto b = scratch_dir("det_b");
    train_run(small_run(a));
    train_run(small_run(b));
    const auto ca = curves(a / "train.csv");
    EXPECT_EQ(ca.size(), 4u);
    EXPECT_EQ(ca, curves(b / "train.csv"));
    const Checkpoint x = load_checkpoint(a / "checkpoint.bin");
    const Checkpoint y = load_checkpoint(b / "checkpoint.bin");
    const auto px = x.model->parameters();
    const auto py = y.model->parameters();
    for (std::size_t i = 0; i < px.size(); ++i) {
        EXPECT_EQ(vals(px[i].second.value()), vals(py[i].second.value()));
    }
    EXPECT_TRUE(std::filesystem::exists(a / "config.cfg"));
    EXPECT_FALSE(std::filesystem::exists(a / ".lock"));
    EXPECT_EQ(load_config(a / "config.cfg"), small_run(a));
}

TEST(Harness, ResumeMatchesUninterruptedRun) {
    for (LtmMode mode : {LtmMode::linspace, LtmMode::sticky, LtmMode::off}) {
        const auto a = scratch_dir("full");
        const auto b = scratch_dir("split");
        RunConfig ca = small_run(a);
        ca.model.ltm = mode;
        RunConfig cb = ca;
        cb.out_dir = b.string();
        train_run(ca);
        const TrainSummary half = train_run(cb, {}, 10);
        EXPECT_EQ(half.steps, 10u);
        std::filesystem::copy_file(b / "checkpoint.bin", b / "half.bin");
        const TrainSummary rest = train_run(cb, b / "half.bin");
        EXPECT_EQ(rest.steps, 20u);
        const auto fa = curves(a / "train.csv");
        const auto fb = curves(b / "train.csv");
        ASSERT_EQ(fa.size(), fb.size()) << ltm_mode_name(mode);
        for (std::size_t i = 0; i < fa.size(); ++i) {
            for (std::size_t j = 0; j < fa[i].size(); ++j) {
                EXPECT_NEAR(fa[i][j], fb[i][j], 1e-8) << ltm_mode_name(mode) << " row " << i;
            }
        }
    }
}

TEST(Harness, PeriodicCheckpoints) {
    const auto dir = scratch_dir("periodic");
    RunConfig c = small_run(dir);
    c.checkpoint_every = 8;
    train_run(c);
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_8.bin"));
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint_16.bin"));
    EXPECT_EQ(load_checkpoint(dir / "checkpoint_8.bin").adam->steps_taken(), 8u);
    EXPECT_EQ(load_checkpoint(dir / "checkpoint.bin").adam->steps_taken(), 20u);
}

TEST(Harness, ResumeRejectsDifferentModel) {
    const auto dir = scratch_dir("mismatch");
    RunConfig c = small_run(dir);
    c.train.steps = 2;
    train_run(c);
    std::filesystem::copy_file(dir / "checkpoint.bin", dir / "old.bin");
    c.model.embed = 16;
    EXPECT_THROW(train_run(c, dir / "old.bin"), InvalidArgument);
}

TEST(Harness, UntrainedEvalIsNearChance) {
    const auto dir = scratch_dir("chance");
    RunConfig c = small_run(dir);
    c.data.val = 200;
    c.data.length = 200;
    Model model(c.model, 17);
    save_checkpoint(dir / "c.bin", c, model, nullptr, nullptr);
    const EvalResult r = eval_run(dir / "c.bin", "val", dir);
    EXPECT_EQ(r.instances, 200u);
    EXPECT_NEAR(r.accuracy, 0.05, 0.02);
    const CsvTable t = read_csv(dir / "eval.csv");
    ASSERT_EQ(t.rows.size(), 1u);
    EXPECT_EQ(t.rows[0][t.column("split")], "val");
}

TEST(Harness, EvalReadsDatasetDirectory) {
    const auto dir = scratch_dir("evaldir");
    RunConfig c = small_run(dir);
    c.data_dir = (dir / "data").string();
    gen_data(c);
    Model model(c.model, 3);
    save_checkpoint(dir / "c.bin", c, model, nullptr, nullptr);
    const EvalResult from_files = eval_run(dir / "c.bin", "test", dir);
    RunConfig mem = c;
    mem.data_dir.clear();
    save_checkpoint(dir / "m.bin", mem, model, nullptr, nullptr);
    const EvalResult in_memory = eval_run(dir / "m.bin", "test", dir);
    EXPECT_EQ(from_files.accuracy, in_memory.accuracy);
    EXPECT_EQ(from_files.nll, in_memory.nll);
    EXPECT_EQ(read_csv(dir / "eval.csv").rows.size(), 2u);
}

TEST(Harness, SweepEmitsOneRowPerPair) {
    const auto dir = scratch_dir("sweep");
    SweepOptions o;
    o.lengths = {100, 200};
    o.basis = {8, 16, 32};
    o.embed = 4;
    o.seeds = 2;
    const auto rows = sweep_basis(o, dir / "sweep.csv");
    EXPECT_EQ(rows.size(), 6u);
    const CsvTable t = read_csv(dir / "sweep.csv");
    ASSERT_EQ(t.rows.size(), 6u);
    for (const char* col : {"length", "N", "mse", "accuracy"}) {
        EXPECT_NO_THROW((void)t.column(col)) << col;
    }
    for (const auto& r : rows) {
        EXPECT_GT(r.mse, 0.0);
        EXPECT_LT(r.mse, 1.5);
        EXPECT_TRUE(std::isnan(r.accuracy));
    }
}

TEST(Harness, BenchStateSizeIsConstant) {
    const auto dir = scratch_dir("bench");
    BenchOptions o;
    o.basis = 16;
    o.embed = 8;
    o.length = 8;
    o.updates = 12;
    o.repeats = 1;
    o.mode = UpdateMode::sticky;
    const auto rows = bench_memory(o, dir / "bench.csv");
    ASSERT_EQ(rows.size(), 12u);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        EXPECT_EQ(rows[i].update_count, i + 1);
        EXPECT_EQ(rows[i].state_bytes, rows[0].state_bytes);
    }
    EXPECT_EQ(read_csv(dir / "bench.csv").rows.size(), 12u);
}

TEST(Harness, InspectMemoryWritesCsvs) {
    const auto dir = scratch_dir("inspect");
    RunConfig c = small_run(dir);
    Model model(c.model, 3);
    save_checkpoint(dir / "c.bin", c, model, nullptr, nullptr);
    inspect_memory(dir / "c.bin", dir / "out", "val", 1, 11, 5);
    const CsvTable s = read_csv(dir / "out" / "memory_samples.csv");
    EXPECT_EQ(s.rows.size(), 11u);
    EXPECT_EQ(s.columns.size(), 2u + 8u);
    const CsvTable h = read_csv(dir / "out" / "sticky_hist.csv");
    ASSERT_EQ(h.rows.size(), 5u);
    double total = 0.0;
    for (const auto& r : h.rows) {
        total += std::stod(r[h.column("prob")]);
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_THROW(inspect_memory(dir / "c.bin", dir / "out", "val", 99, 11, 5), InvalidArgument);
}

}  // namespace infmem
