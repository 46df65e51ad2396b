#include "infmem/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "infmem/errors.hpp"

namespace infmem {

namespace {

// shortest form that reads back to the same double
std::string fmt_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw InvalidArgument(key + ": expected a number, got '" + s + "'");
    }
    return v;
}

template <class T>
T parse_uint(const std::string& key, const std::string& s) {
    T v = 0;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) {
        throw InvalidArgument(key + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "on") return true;
    if (s == "false" || s == "0" || s == "off") return false;
    throw InvalidArgument(key + ": expected true/false, got '" + s + "'");
}

std::string fmt_list(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + fmt_double(v[i]);
    }
    return out;
}

std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        out.push_back(parse_double(key, item));
    }
    return out;
}

struct Field {
    const char* key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define INFMEM_UINT(name, member, type)                                                            \
    Field {                                                                                       \
        name, [](const RunConfig& c) { return std::to_string(c.member); },                        \
            [](RunConfig& c, const std::string& v) { c.member = parse_uint<type>(name, v); }      \
    }
#define INFMEM_DOUBLE(name, member)                                                               \
    Field {                                                                                       \
        name, [](const RunConfig& c) { return fmt_double(c.member); },                            \
            [](RunConfig& c, const std::string& v) { c.member = parse_double(name, v); }          \
    }
#define INFMEM_BOOL(name, member)                                                                 \
    Field {                                                                                       \
        name, [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); },        \
            [](RunConfig& c, const std::string& v) { c.member = parse_bool(name, v); }            \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        INFMEM_UINT("model.vocab", model.vocab, std::size_t),
        INFMEM_UINT("model.layers", model.layers, std::size_t),
        INFMEM_UINT("model.heads", model.heads, std::size_t),
        INFMEM_UINT("model.embed", model.embed, std::size_t),
        INFMEM_UINT("model.input_len", model.input_len, std::size_t),
        INFMEM_UINT("model.stm_len", model.stm_len, std::size_t),
        INFMEM_UINT("model.ff_hidden", model.ff_hidden, std::size_t),
        Field{"model.ltm", [](const RunConfig& c) { return std::string(ltm_mode_name(c.model.ltm)); },
              [](RunConfig& c, const std::string& v) { c.model.ltm = parse_ltm_mode(v); }},
        INFMEM_UINT("model.basis_count", model.basis_count, std::size_t),
        Field{"model.basis_widths", [](const RunConfig& c) { return fmt_list(c.model.basis_widths); },
              [](RunConfig& c, const std::string& v) { c.model.basis_widths = parse_list("model.basis_widths", v); }},
        INFMEM_DOUBLE("model.tau", model.tau),
        INFMEM_UINT("model.samples", model.samples, std::size_t),
        INFMEM_UINT("model.sticky_bins", model.sticky_bins, std::size_t),
        INFMEM_DOUBLE("model.ridge", model.ridge),
        INFMEM_DOUBLE("model.kl_weight", model.kl_weight),
        INFMEM_DOUBLE("model.kl_sigma0", model.kl_sigma0),
        Field{"model.kl_form", [](const RunConfig& c) { return std::string(kl_form_name(c.model.kl_form)); },
              [](RunConfig& c, const std::string& v) { c.model.kl_form = parse_kl_form(v); }},
        INFMEM_BOOL("model.gate", model.gate),
        INFMEM_BOOL("model.gate_depthwise", model.gate_depthwise),
        INFMEM_BOOL("model.shared_affine", model.shared_affine),
        Field{"data.dir", [](const RunConfig& c) { return c.data_dir; },
              [](RunConfig& c, const std::string& v) { c.data_dir = v; }},
        INFMEM_UINT("data.train", data.train, std::size_t),
        INFMEM_UINT("data.val", data.val, std::size_t),
        INFMEM_UINT("data.test", data.test, std::size_t),
        INFMEM_UINT("data.length", data.length, std::size_t),
        INFMEM_UINT("data.seed", data.seed, std::uint64_t),
        INFMEM_UINT("train.seed", train.seed, std::uint64_t),
        INFMEM_UINT("train.steps", train.steps, std::uint64_t),
        INFMEM_UINT("train.batch", train.batch, std::size_t),
        INFMEM_DOUBLE("train.lr", train.lr),
        INFMEM_DOUBLE("train.clip", train.clip),
        INFMEM_UINT("train.emit_every", train.emit_every, std::uint64_t),
        INFMEM_UINT("train.checkpoint_every", checkpoint_every, std::uint64_t),
        INFMEM_UINT("eval.limit", eval_limit, std::size_t),
        Field{"run.out", [](const RunConfig& c) { return c.out_dir; },
              [](RunConfig& c, const std::string& v) { c.out_dir = v; }},
    };
    return table;
}

#undef INFMEM_UINT
#undef INFMEM_DOUBLE
#undef INFMEM_BOOL

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) {
        out.emplace_back(f.key, f.get(cfg));
    }
    return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(cfg, value);
            return;
        }
    }
    throw InvalidArgument("unknown config key '" + key + "'");
}

std::string format_config(const RunConfig& cfg) {
    std::string out;
    std::string section;
    for (const auto& [key, value] : config_entries(cfg)) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            out += (section.empty() ? "[" : "\n[") + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        try {
            if (line.front() == '[') {
                if (line.back() != ']') {
                    throw InvalidArgument("unterminated section header");
                }
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw InvalidArgument("expected 'key = value'");
            }
            if (section.empty()) {
                throw InvalidArgument("key outside of a [section]");
            }
            set_config_value(cfg, section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const InvalidArgument& e) {
            throw InvalidArgument("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw IoError("cannot open config " + file.string());
    }
    std::stringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(file.string() + ": " + e.what());
    }
}

void apply_env_overrides(RunConfig& cfg, char** envp) {
    if (envp == nullptr) {
        return;
    }
    for (const auto& f : fields()) {
        std::string name = "INFMEM_";
        for (const char* p = f.key; *p; ++p) {
            name += *p == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
        }
        const std::string prefix = name + "=";
        for (char** e = envp; *e; ++e) {
            if (std::string_view(*e).starts_with(prefix)) {
                try {
                    f.set(cfg, std::string(*e + prefix.size()));
                } catch (const InvalidArgument& err) {
                    throw InvalidArgument(name + ": " + err.what());
                }
            }
        }
    }
}

}  // namespace infmem
