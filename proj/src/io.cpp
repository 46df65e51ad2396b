#include "infmem/io.hpp"

#include <charconv>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include "infmem/errors.hpp"

namespace infmem {

// shortest form that reads back to the same double
std::string csv_number(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

namespace {

std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i].find_first_of(",\n") != std::string::npos) {
            throw InvalidArgument("csv cell '" + cells[i] + "' contains a separator");
        }
        line += (i ? "," : "") + cells[i];
    }
    return line;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(line.substr(start, comma - start));
        if (comma == std::string::npos) {
            return out;
        }
        start = comma + 1;
    }
}

}  // namespace

CsvWriter::CsvWriter(const std::filesystem::path& file, std::vector<std::string> columns)
    : path_(file), columns_(std::move(columns)) {
    std::error_code ec;
    const bool existing = std::filesystem::exists(file, ec) && std::filesystem::file_size(file, ec) > 0;
    if (existing) {
        std::ifstream in(file);
        std::string header;
        std::getline(in, header);
        if (header != join(columns_)) {
            throw IoError(file.string() + ": existing header '" + header + "' does not match '" + join(columns_) + "'");
        }
    }
    out_.open(file, std::ios::binary | std::ios::app);
    if (!out_) {
        throw IoError("cannot open " + file.string() + " for writing");
    }
    if (!existing) {
        out_ << join(columns_) << '\n';
        out_.flush();
    }
    if (!out_) {
        throw IoError("write failed for " + file.string());
    }
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) {
        throw ShapeError(path_.string() + ": row of " + std::to_string(cells.size()) + " cells for " +
                         std::to_string(columns_.size()) + " columns");
    }
    out_ << join(cells) << '\n';
    out_.flush();
    if (!out_) {
        throw IoError("write failed for " + path_.string());
    }
}

void CsvWriter::row(const std::vector<double>& cells) {
    std::vector<std::string> text;
    text.reserve(cells.size());
    for (double v : cells) {
        text.push_back(csv_number(v));
    }
    row(text);
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) {
            return i;
        }
    }
    throw InvalidArgument("csv has no column '" + name + "'");
}

CsvTable read_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw IoError("cannot open " + file.string());
    }
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError(file.string() + " is empty");
    }
    t.columns = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        t.rows.push_back(split(line));
        if (t.rows.back().size() != t.columns.size()) {
            throw IoError(file.string() + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(t.columns.size()) + " cells");
        }
    }
    return t;
}

namespace {

void put_u32(std::ostream& o, std::uint32_t v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_u64(std::ostream& o, std::uint64_t v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_f64(std::ostream& o, double v) { o.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_str(std::ostream& o, const std::string& s) {
    put_u32(o, static_cast<std::uint32_t>(s.size()));
    o.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void put_doubles(std::ostream& o, const double* p, std::size_t n) {
    o.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
}
void put_tensor(std::ostream& o, const Tensor& t) {
    put_u32(o, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) {
        put_u64(o, d);
    }
    put_doubles(o, t.ptr(), t.size());
}

template <class T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) {
        throw IoError("truncated checkpoint");
    }
    return v;
}
std::string get_str(std::istream& in) {
    const auto n = get<std::uint32_t>(in);
    if (n > (1u << 20)) {
        throw IoError("corrupt checkpoint: string of " + std::to_string(n) + " bytes");
    }
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) {
        throw IoError("truncated checkpoint");
    }
    return s;
}
void get_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) {
        throw IoError("truncated checkpoint");
    }
}
Tensor get_tensor(std::istream& in) {
    const auto rank = get<std::uint32_t>(in);
    if (rank > 4) {
        throw IoError("corrupt checkpoint: tensor rank " + std::to_string(rank));
    }
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
        shape.push_back(get<std::uint64_t>(in));
        total *= shape.back();
    }
    if (total > (std::size_t{1} << 32)) {
        throw IoError("corrupt checkpoint: tensor of " + std::to_string(total) + " elements");
    }
    Tensor t(shape);
    get_doubles(in, t.ptr(), t.size());
    return t;
}

void write_state_body(std::ostream& out, const MemoryState& mem) {
    put_u64(out, mem.basis_count());
    put_u64(out, mem.embed());
    put_f64(out, mem.tau());
    put_u64(out, mem.samples());
    put_f64(out, mem.lambda());
    put_u64(out, mem.update_count());
    put_doubles(out, mem.coeffs().ptr(), mem.coeffs().size());
}

}  // namespace

std::string serialize_memory(const MemoryState& mem) {
    std::ostringstream out(std::ios::binary);
    write_state_body(out, mem);
    return out.str();
}

std::size_t memory_state_bytes(const MemoryState& mem) { return serialize_memory(mem).size(); }

void write_memory(std::ostream& out, const MemoryState& mem, const AttentionRecord& record) {
    write_state_body(out, mem);
    put_u64(out, record.heads);
    put_u64(out, record.queries);
    put_doubles(out, record.mean.data(), record.mean.size());
    put_doubles(out, record.variance.data(), record.variance.size());
}

void read_memory(std::istream& in, MemoryState& mem, AttentionRecord& record) {
    const auto n = get<std::uint64_t>(in);
    const auto e = get<std::uint64_t>(in);
    const auto tau = get<double>(in);
    const auto samples = get<std::uint64_t>(in);
    const auto lambda = get<double>(in);
    const auto count = get<std::uint64_t>(in);
    if (n != mem.basis_count() || e != mem.embed() || tau != mem.tau() || samples != mem.samples() ||
        lambda != mem.lambda()) {
        throw IoError("memory block does not match the configured memory (N=" + std::to_string(n) +
                      ", e=" + std::to_string(e) + ")");
    }
    Tensor coeffs = Tensor::matrix(n, e);
    get_doubles(in, coeffs.ptr(), coeffs.size());
    mem.restore(std::move(coeffs), count);
    record.heads = get<std::uint64_t>(in);
    record.queries = get<std::uint64_t>(in);
    if (record.heads * record.queries > (std::size_t{1} << 28)) {
        throw IoError("corrupt checkpoint: attention record too large");
    }
    record.mean.resize(record.heads * record.queries);
    record.variance.resize(record.heads * record.queries);
    get_doubles(in, record.mean.data(), record.mean.size());
    get_doubles(in, record.variance.data(), record.variance.size());
}

void save_checkpoint(const std::filesystem::path& file, const RunConfig& cfg, const Model& model, const Adam* adam,
                     const ModelState* state) {
    const std::filesystem::path tmp = file.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        out.write(kCheckpointMagic, sizeof kCheckpointMagic);
        put_u32(out, kCheckpointVersion);
        const auto entries = config_entries(cfg);
        put_u32(out, static_cast<std::uint32_t>(entries.size()));
        for (const auto& [k, v] : entries) {
            put_str(out, k);
            put_str(out, v);
        }
        const auto& params = model.parameters();
        put_u64(out, adam ? adam->steps_taken() : ~std::uint64_t{0});
        put_u32(out, static_cast<std::uint32_t>(params.size() * (adam ? 3 : 1)));
        for (std::size_t k = 0; k < params.size(); ++k) {
            put_str(out, "param/" + params[k].first);
            put_tensor(out, params[k].second.value());
        }
        if (adam) {
            const Adam& a = *adam;
            for (std::size_t k = 0; k < params.size(); ++k) {
                put_str(out, "adam.m/" + params[k].first);
                put_tensor(out, a.first_moment()[k]);
                put_str(out, "adam.v/" + params[k].first);
                put_tensor(out, a.second_moment()[k]);
            }
        }
        const bool with_memory = state && model.config().ltm != LtmMode::off && !state->layers.empty();
        put_u32(out, with_memory ? static_cast<std::uint32_t>(state->layers.size()) : 0);
        if (with_memory) {
            for (const auto& ls : state->layers) {
                write_memory(out, ls.memory, ls.record);
            }
        }
        out.flush();
        if (!out) {
            throw IoError("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, file, ec);
    if (ec) {
        throw IoError("cannot move checkpoint into place at " + file.string() + ": " + ec.message());
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + file.string());
    }
    try {
        char magic[sizeof kCheckpointMagic];
        in.read(magic, sizeof magic);
        if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
            throw IoError("not a checkpoint (bad magic)");
        }
        const auto version = get<std::uint32_t>(in);
        if (version != kCheckpointVersion) {
            throw IoError("unsupported checkpoint version " + std::to_string(version));
        }
        Checkpoint ck;
        const auto entries = get<std::uint32_t>(in);
        for (std::uint32_t k = 0; k < entries; ++k) {
            const std::string key = get_str(in);
            const std::string value = get_str(in);
            set_config_value(ck.config, key, value);
        }
        ck.model = std::make_unique<Model>(ck.config.model, 0);
        const auto steps = get<std::uint64_t>(in);
        const bool has_adam = steps != ~std::uint64_t{0};
        if (has_adam) {
            ck.adam = std::make_unique<Adam>(
                *ck.model, AdamConfig{.lr = ck.config.train.lr, .clip = ck.config.train.clip,
                                      .total_steps = std::max<std::uint64_t>(ck.config.train.steps, 1)});
            ck.adam->set_steps_taken(steps);
        }
        const auto& params = ck.model->parameters();
        auto index_of = [&](const std::string& name) {
            for (std::size_t k = 0; k < params.size(); ++k) {
                if (params[k].first == name) {
                    return k;
                }
            }
            throw IoError("checkpoint block for unknown parameter '" + name + "'");
        };
        const auto blocks = get<std::uint32_t>(in);
        std::vector<bool> seen(params.size(), false);
        for (std::uint32_t b = 0; b < blocks; ++b) {
            const std::string name = get_str(in);
            Tensor t = get_tensor(in);
            const auto slash = name.find('/');
            const std::string kind = name.substr(0, slash);
            const std::size_t k = index_of(name.substr(slash + 1));
            if (t.shape() != params[k].second.shape()) {
                throw IoError("block " + name + " has shape " + shape_string(t.shape()) + ", model expects " +
                              shape_string(params[k].second.shape()));
            }
            if (kind == "param") {
                Var v = params[k].second;
                v.mutable_value() = std::move(t);
                seen[k] = true;
            } else if (kind == "adam.m" && has_adam) {
                ck.adam->first_moment()[k] = std::move(t);
            } else if (kind == "adam.v" && has_adam) {
                ck.adam->second_moment()[k] = std::move(t);
            } else {
                throw IoError("unexpected block '" + name + "'");
            }
        }
        for (std::size_t k = 0; k < params.size(); ++k) {
            if (!seen[k]) {
                throw IoError("checkpoint lacks parameter '" + params[k].first + "'");
            }
        }
        const auto layers = get<std::uint32_t>(in);
        if (layers > 0) {
            if (layers != ck.config.model.layers) {
                throw IoError("checkpoint has memory for " + std::to_string(layers) + " layers");
            }
            ck.state = initial_state(*ck.model, 0);
            for (auto& ls : ck.state.layers) {
                read_memory(in, ls.memory, ls.record);
            }
        }
        return ck;
    } catch (const IoError& e) {
        throw IoError(file.string() + ": " + e.what());
    }
}

RunLock::RunLock(const std::filesystem::path& dir) : file_(dir / ".lock") {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
    int fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        // stale lock from a run that died
        std::ifstream in(file_);
        long pid = 0;
        if (in >> pid && pid > 0 && ::kill(static_cast<pid_t>(pid), 0) != 0 && errno == ESRCH) {
            std::filesystem::remove(file_, ec);
            fd = ::open(file_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        }
    }
    if (fd < 0) {
        throw StateError("output directory " + dir.string() + " is locked by another run (" + file_.string() + ")");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
}

RunLock::~RunLock() {
    std::error_code ec;
    std::filesystem::remove(file_, ec);
}

}  // namespace infmem
