#include "infmem/infmem.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "infmem/config.hpp"
#include "infmem/errors.hpp"
#include "infmem/harness.hpp"
#include "infmem/io.hpp"
#include "infmem/memory.hpp"
#include "infmem/model.hpp"

extern char** environ;

struct infmem_config {
    infmem::RunConfig cfg;
};

struct infmem_model {
    infmem::RunConfig cfg;
    std::unique_ptr<infmem::Model> model;
};

struct infmem_memory {
    infmem::MemoryState state;
};

namespace {

thread_local std::string g_last_error;

infmem_status fail(infmem_status s, const char* what) {
    g_last_error = what;
    return s;
}

template <class F>
infmem_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return INFMEM_OK;
    } catch (const infmem::Error& e) {
        return fail(static_cast<infmem_status>(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(INFMEM_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(INFMEM_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(INFMEM_ERR_INTERNAL, "unknown exception");
    }
}

void need(const void* p, const char* name) {
    if (p == nullptr) {
        throw infmem::InvalidArgument(std::string(name) + " is null");
    }
}

std::string str(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* infmem_last_error(void) { return g_last_error.c_str(); }

const char* infmem_status_name(infmem_status s) {
    switch (s) {
        case INFMEM_OK: return "ok";
        case INFMEM_ERR_INVALID_ARGUMENT: return "invalid argument";
        case INFMEM_ERR_SHAPE: return "shape mismatch";
        case INFMEM_ERR_NOT_POSITIVE_DEFINITE: return "not positive definite";
        case INFMEM_ERR_NUMERIC: return "numeric error";
        case INFMEM_ERR_IO: return "i/o error";
        case INFMEM_ERR_STATE: return "state error";
        case INFMEM_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* infmem_version(void) { return "0.1.0"; }

infmem_status infmem_config_new(infmem_config** out) {
    return guarded([&] {
        need(out, "out");
        *out = new infmem_config{};
    });
}

infmem_status infmem_config_load(const char* path, infmem_config** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        auto c = std::make_unique<infmem_config>();
        c->cfg = infmem::load_config(path);
        *out = c.release();
    });
}

infmem_status infmem_config_parse(const char* text, infmem_config** out) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        auto c = std::make_unique<infmem_config>();
        c->cfg = infmem::parse_config(text);
        *out = c.release();
    });
}

infmem_status infmem_config_set(infmem_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        need(cfg, "config");
        need(key, "key");
        need(value, "value");
        infmem::set_config_value(cfg->cfg, key, value);
    });
}

infmem_status infmem_config_get(const infmem_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
    return guarded([&] {
        need(cfg, "config");
        need(key, "key");
        for (const auto& [k, v] : infmem::config_entries(cfg->cfg)) {
            if (k == key) {
                if (needed) {
                    *needed = v.size() + 1;
                }
                if (buf && cap > v.size()) {
                    std::memcpy(buf, v.c_str(), v.size() + 1);
                } else if (buf && cap > 0) {
                    buf[0] = '\0';
                }
                return;
            }
        }
        throw infmem::InvalidArgument("unknown config key '" + std::string(key) + "'");
    });
}

infmem_status infmem_config_apply_env(infmem_config* cfg) {
    return guarded([&] {
        need(cfg, "config");
        infmem::apply_env_overrides(cfg->cfg, environ);
    });
}

infmem_status infmem_config_save(const infmem_config* cfg, const char* path) {
    return guarded([&] {
        need(cfg, "config");
        need(path, "path");
        std::ofstream out(path, std::ios::trunc);
        out << infmem::format_config(cfg->cfg);
        out.flush();
        if (!out) {
            throw infmem::IoError(std::string("cannot write ") + path);
        }
    });
}

void infmem_config_free(infmem_config* cfg) { delete cfg; }

infmem_status infmem_gen_data(const infmem_config* cfg) {
    return guarded([&] {
        need(cfg, "config");
        infmem::gen_data(cfg->cfg);
    });
}

infmem_status infmem_train(const infmem_config* cfg, const char* resume, uint64_t stop_at, uint64_t* steps_out) {
    return guarded([&] {
        need(cfg, "config");
        const auto s = infmem::train_run(cfg->cfg, str(resume), stop_at);
        if (steps_out) {
            *steps_out = s.steps;
        }
    });
}

infmem_status infmem_eval(const char* checkpoint, const char* split, const char* out_dir, const char* data_dir,
                          double* accuracy, double* nll) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(split, "split");
        need(out_dir, "out_dir");
        const auto r = infmem::eval_run(checkpoint, split, out_dir, str(data_dir));
        if (accuracy) {
            *accuracy = r.accuracy;
        }
        if (nll) {
            *nll = r.nll;
        }
    });
}

void infmem_sweep_defaults(infmem_sweep_options* opt) {
    if (!opt) {
        return;
    }
    static const infmem::SweepOptions d;
    *opt = infmem_sweep_options{};
    opt->lengths = d.lengths.data();
    opt->n_lengths = d.lengths.size();
    opt->basis = d.basis.data();
    opt->n_basis = d.basis.size();
    opt->embed = d.embed;
    opt->seeds = d.seeds;
    opt->seed = d.seed;
    opt->train_steps = d.train_steps;
}

infmem_status infmem_sweep_basis(const infmem_sweep_options* opt, const char* csv) {
    return guarded([&] {
        need(opt, "options");
        need(csv, "csv");
        if ((opt->n_lengths && !opt->lengths) || (opt->n_basis && !opt->basis)) {
            throw infmem::InvalidArgument("sweep lengths/basis pointer is null");
        }
        infmem::SweepOptions o;
        o.lengths.assign(opt->lengths, opt->lengths + opt->n_lengths);
        o.basis.assign(opt->basis, opt->basis + opt->n_basis);
        o.embed = opt->embed;
        o.seeds = opt->seeds;
        o.seed = opt->seed;
        o.train_steps = opt->train_steps;
        if (opt->run) {
            o.run = opt->run->cfg;
            o.widths = o.run.model.basis_widths;
            o.ridge = o.run.model.ridge;
        }
        infmem::sweep_basis(o, csv);
    });
}

void infmem_bench_defaults(infmem_bench_options* opt) {
    if (!opt) {
        return;
    }
    const infmem::BenchOptions d;
    opt->basis = d.basis;
    opt->embed = d.embed;
    opt->length = d.length;
    opt->heads = d.heads;
    opt->updates = d.updates;
    opt->repeats = d.repeats;
    opt->sticky = d.mode == infmem::UpdateMode::sticky;
    opt->seed = d.seed;
}

infmem_status infmem_bench_memory(const infmem_bench_options* opt, const char* csv) {
    return guarded([&] {
        need(opt, "options");
        need(csv, "csv");
        infmem::BenchOptions o;
        o.basis = opt->basis;
        o.embed = opt->embed;
        o.length = opt->length;
        o.heads = opt->heads;
        o.updates = opt->updates;
        o.repeats = opt->repeats;
        o.mode = opt->sticky ? infmem::UpdateMode::sticky : infmem::UpdateMode::linspace;
        o.seed = opt->seed;
        infmem::bench_memory(o, csv);
    });
}

infmem_status infmem_inspect_memory(const char* checkpoint, const char* out_dir, const char* split, size_t index,
                                    size_t points, size_t bins) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(out_dir, "out_dir");
        need(split, "split");
        infmem::inspect_memory(checkpoint, out_dir, split, index, points, bins);
    });
}

infmem_status infmem_model_new(const infmem_config* cfg, uint64_t seed, infmem_model** out) {
    return guarded([&] {
        need(cfg, "config");
        need(out, "out");
        auto m = std::make_unique<infmem_model>();
        m->cfg = cfg->cfg;
        m->model = std::make_unique<infmem::Model>(cfg->cfg.model, seed);
        *out = m.release();
    });
}

infmem_status infmem_model_load(const char* checkpoint, infmem_model** out) {
    return guarded([&] {
        need(checkpoint, "checkpoint");
        need(out, "out");
        infmem::Checkpoint ck = infmem::load_checkpoint(checkpoint);
        auto m = std::make_unique<infmem_model>();
        m->cfg = ck.config;
        m->model = std::move(ck.model);
        *out = m.release();
    });
}

infmem_status infmem_model_save(const infmem_model* model, const char* checkpoint) {
    return guarded([&] {
        need(model, "model");
        need(checkpoint, "checkpoint");
        infmem::save_checkpoint(checkpoint, model->cfg, *model->model, nullptr, nullptr);
    });
}

size_t infmem_model_vocab(const infmem_model* model) { return model ? model->model->config().vocab : 0; }

size_t infmem_model_parameter_count(const infmem_model* model) {
    return model ? model->model->parameter_count() : 0;
}

infmem_status infmem_model_logits(const infmem_model* model, const int* tokens, size_t n, uint64_t seed,
                                  double* logits) {
    return guarded([&] {
        need(model, "model");
        if (n == 0) {
            return;
        }
        need(tokens, "tokens");
        need(logits, "logits");
        const infmem::Model& m = *model->model;
        const std::size_t v = m.config().vocab;
        infmem::NoGradGuard guard;
        infmem::ModelState state = infmem::initial_state(m, seed);
        std::size_t begin = 0;
        for (std::size_t len : infmem::segment_lengths(n, m.config().input_len)) {
            const auto fr = infmem::forward(m, std::span<const int>(tokens + begin, len), state);
            std::memcpy(logits + begin * v, fr.logits.value().ptr(), len * v * sizeof(double));
            begin += len;
        }
    });
}

void infmem_model_free(infmem_model* model) { delete model; }

infmem_status infmem_memory_new(size_t basis, const double* widths, size_t n_widths, size_t embed, double tau,
                                size_t samples, double ridge, infmem_memory** out) {
    return guarded([&] {
        need(out, "out");
        if (n_widths == 0 || widths == nullptr) {
            throw infmem::InvalidArgument("at least one basis width is required");
        }
        auto spec = std::make_shared<const infmem::BasisSpec>(
            infmem::make_basis(basis, std::span<const double>(widths, n_widths)));
        auto m = std::make_unique<infmem_memory>();
        m->state = infmem::MemoryState(spec, embed, tau, samples == 0 ? basis : samples, ridge);
        *out = m.release();
    });
}

infmem_status infmem_memory_update(infmem_memory* mem, const double* x, size_t rows, const double* means,
                                   const double* variances, size_t n_records, size_t bins, uint64_t seed) {
    return guarded([&] {
        need(mem, "memory");
        need(x, "x");
        const std::size_t e = mem->state.embed();
        infmem::Tensor t = infmem::Tensor::matrix(rows, e);
        std::memcpy(t.ptr(), x, rows * e * sizeof(double));
        infmem::AttentionRecord rec;
        auto mode = infmem::UpdateMode::linspace;
        if (n_records > 0) {
            need(means, "means");
            need(variances, "variances");
            rec.heads = 1;
            rec.queries = n_records;
            rec.mean.assign(means, means + n_records);
            rec.variance.assign(variances, variances + n_records);
            mode = infmem::UpdateMode::sticky;
        }
        infmem::Rng rng(seed);
        std::span<const infmem::AttentionRecord> records;
        if (!rec.empty()) {
            records = std::span<const infmem::AttentionRecord>(&rec, 1);
        }
        mem->state = infmem::update(mem->state, t, mode, records, bins, rng);
    });
}

infmem_status infmem_memory_evaluate(const infmem_memory* mem, double t, double* out) {
    return guarded([&] {
        need(mem, "memory");
        need(out, "out");
        if (!mem->state.initialized()) {
            throw infmem::StateError("memory has not absorbed any signal yet");
        }
        const auto v = infmem::evaluate(mem->state, t);
        std::memcpy(out, v.data(), v.size() * sizeof(double));
    });
}

uint64_t infmem_memory_update_count(const infmem_memory* mem) { return mem ? mem->state.update_count() : 0; }

size_t infmem_memory_state_bytes(const infmem_memory* mem) {
    return mem ? infmem::memory_state_bytes(mem->state) : 0;
}

void infmem_memory_free(infmem_memory* mem) { delete mem; }

}  // extern "C"
