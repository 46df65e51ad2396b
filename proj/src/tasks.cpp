#include "infmem/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "infmem/errors.hpp"
#include "infmem/seed.hpp"

namespace infmem {

std::vector<int> SortingInstance::sequence() const {
    std::vector<int> seq;
    seq.reserve(input.size() + target.size() + 1);
    seq.insert(seq.end(), input.begin(), input.end());
    seq.push_back(kSepToken);
    seq.insert(seq.end(), target.begin(), target.end());
    return seq;
}

std::vector<int> frequency_order(std::span<const int> input, int vocab) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(vocab), 0);
    for (int t : input) {
        if (t < 0 || t >= vocab) {
            throw InvalidArgument("token " + std::to_string(t) + " outside vocabulary of " + std::to_string(vocab));
        }
        ++counts[static_cast<std::size_t>(t)];
    }
    std::vector<int> ids;
    for (int t = 0; t < vocab; ++t) {
        if (counts[static_cast<std::size_t>(t)] > 0) {
            ids.push_back(t);
        }
    }
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    });
    return ids;
}

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> p(k);
    double total = 0.0;
    do {
        total = 0.0;
        for (double& v : p) {
            v = gamma(rng);
            total += v;
        }
    } while (total <= 0.0);
    for (double& v : p) {
        v /= total;
    }
    return p;
}

SortingInstance gen_instance(std::span<const double> p0, std::span<const double> p1, std::size_t length, Rng& rng) {
    if (length == 0) {
        throw InvalidArgument("instance length must be at least 1");
    }
    if (p0.size() != p1.size() || p0.empty()) {
        throw InvalidArgument("mixture components must be non-empty and of equal size");
    }
    SortingInstance inst;
    inst.p0.assign(p0.begin(), p0.end());
    inst.p1.assign(p1.begin(), p1.end());
    std::discrete_distribution<int> d0(p0.begin(), p0.end());
    std::discrete_distribution<int> d1(p1.begin(), p1.end());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    inst.input.reserve(length);
    for (std::size_t k = 0; k < length; ++k) {
        const double alpha = length == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(length - 1);
        inst.input.push_back(u(rng) < alpha ? d0(rng) : d1(rng));
    }
    inst.target = frequency_order(inst.input, static_cast<int>(p0.size()));
    return inst;
}

SortingInstance gen_instance(int vocab, std::size_t length, std::uint64_t seed) {
    if (vocab <= 0) {
        throw InvalidArgument("vocabulary must be non-empty");
    }
    Rng rng(seed);
    const auto p0 = sample_dirichlet(static_cast<std::size_t>(vocab), kDirichletAlpha, rng);
    const auto p1 = sample_dirichlet(static_cast<std::size_t>(vocab), kDirichletAlpha, rng);
    SortingInstance inst = gen_instance(p0, p1, length, rng);
    inst.seed = seed;
    return inst;
}

double sorting_accuracy(std::span<const int> predicted, std::span<const int> target) {
    if (target.empty()) {
        return predicted.empty() ? 1.0 : 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < target.size() && i < predicted.size(); ++i) {
        hits += predicted[i] == target[i];
    }
    return static_cast<double>(hits) / static_cast<double>(target.size());
}

namespace {

std::uint64_t split_tag(const std::string& split) {
    if (split == "train") return 0;
    if (split == "val") return 1;
    if (split == "test") return 2;
    throw InvalidArgument("unknown split '" + split + "' (train, val, test)");
}

std::size_t split_count(const DatasetSpec& spec, const std::string& split) {
    switch (split_tag(split)) {
        case 0: return spec.train;
        case 1: return spec.val;
        default: return spec.test;
    }
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + file.string() + " for writing");
    }
    out << text;
    out.flush();
    if (!out) {
        throw IoError("write failed for " + file.string());
    }
}

}  // namespace

std::vector<SortingInstance> generate_split(const DatasetSpec& spec, const std::string& split) {
    const std::uint64_t tag = split_tag(split);
    const std::size_t count = split_count(spec, split);
    std::vector<SortingInstance> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        out.push_back(gen_instance(kSortVocab, spec.length, derive_seed(spec.seed, {tag, i})));
    }
    return out;
}

std::string format_instance(const SortingInstance& inst) {
    std::string line;
    line.reserve(3 * (inst.input.size() + inst.target.size()) + 8);
    for (int t : inst.input) {
        line += std::to_string(t);
        line += ' ';
    }
    line += "<sep>";
    for (int t : inst.target) {
        line += ' ';
        line += std::to_string(t);
    }
    return line;
}

SortingInstance parse_instance(const std::string& line) {
    std::istringstream in(line);
    std::string word;
    SortingInstance inst;
    int seps = 0;
    while (in >> word) {
        if (word == "<sep>") {
            ++seps;
            continue;
        }
        std::size_t used = 0;
        int id = -1;
        try {
            id = std::stoi(word, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != word.size() || id < 0 || id >= kSortVocab) {
            throw InvalidArgument("bad token '" + word + "'");
        }
        (seps == 0 ? inst.input : inst.target).push_back(id);
    }
    if (seps != 1) {
        throw InvalidArgument("expected exactly one <sep>, found " + std::to_string(seps));
    }
    return inst;
}

std::vector<SortingInstance> read_split(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw IoError("cannot open dataset " + file.string());
    }
    std::vector<SortingInstance> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(parse_instance(line));
        } catch (const InvalidArgument& e) {
            throw IoError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void gen_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
    if (spec.train + spec.val + spec.test == 0) {
        throw InvalidArgument("dataset needs at least one instance");
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
    for (const std::string split : {"train", "val", "test"}) {
        std::string text;
        for (const auto& inst : generate_split(spec, split)) {
            text += format_instance(inst);
            text += '\n';
        }
        write_text(dir / (split + ".txt"), text);
    }
    std::ostringstream meta;
    meta.precision(17);
    meta << "seed = " << spec.seed << "\nlength = " << spec.length << "\ntrain = " << spec.train
         << "\nval = " << spec.val << "\ntest = " << spec.test << "\nvocab = " << kSortVocab
         << "\ndirichlet_alpha = " << kDirichletAlpha << "\n";
    write_text(dir / "meta.txt", meta.str());
}

}  // namespace infmem
