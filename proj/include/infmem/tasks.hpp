#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "infmem/memory.hpp"

namespace infmem {

inline constexpr int kSortVocab = 20;
inline constexpr int kSepToken = kSortVocab;  // model vocabulary is kSortVocab + 1

struct SortingInstance {
    std::vector<int> input;
    std::vector<int> target;
    std::vector<double> p0;
    std::vector<double> p1;
    std::uint64_t seed = 0;

    // input, SEP, target
    [[nodiscard]] std::vector<int> sequence() const;
};

// Distinct tokens of `input` by descending count, ties by ascending id.
std::vector<int> frequency_order(std::span<const int> input, int vocab);

std::vector<double> sample_dirichlet(std::size_t k, double alpha, Rng& rng);

// Token k ~ α_k p0 + (1 − α_k) p1 with α_k = k / (S − 1).
SortingInstance gen_instance(std::span<const double> p0, std::span<const double> p1, std::size_t length, Rng& rng);
SortingInstance gen_instance(int vocab, std::size_t length, std::uint64_t seed);

// Position-wise exact match over the target length; missing predictions count as misses.
double sorting_accuracy(std::span<const int> predicted, std::span<const int> target);

struct DatasetSpec {
    std::size_t train = 2000;
    std::size_t val = 200;
    std::size_t test = 200;
    std::size_t length = 1000;
    std::uint64_t seed = 1;
    bool operator==(const DatasetSpec&) const = default;
};

inline constexpr double kDirichletAlpha = 1.0;

// Writes train.txt, val.txt, test.txt and meta.txt into `dir`.
void gen_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);
std::vector<SortingInstance> generate_split(const DatasetSpec& spec, const std::string& split);

std::string format_instance(const SortingInstance& inst);
SortingInstance parse_instance(const std::string& line);
std::vector<SortingInstance> read_split(const std::filesystem::path& file);

}  // namespace infmem
