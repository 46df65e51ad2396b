#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <string>
#include <vector>

#include "infmem/config.hpp"
#include "infmem/memory.hpp"
#include "infmem/model.hpp"

namespace infmem {

// Comma-separated, LF, no quoting. Appends to an existing file when its header matches.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& file, std::vector<std::string> columns);
    void row(const std::vector<std::string>& cells);
    void row(const std::vector<double>& cells);
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::vector<std::string> columns_;
    std::ofstream out_;
};

std::string csv_number(double v);

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    [[nodiscard]] std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::filesystem::path& file);

// Memory block: N, e, tau, M, lambda, update count, coefficients, last attention record.
void write_memory(std::ostream& out, const MemoryState& mem, const AttentionRecord& record);
void read_memory(std::istream& in, MemoryState& mem, AttentionRecord& record);
// Byte size of the serialized state (coefficients and scalars; no record).
std::size_t memory_state_bytes(const MemoryState& mem);
std::string serialize_memory(const MemoryState& mem);

struct Checkpoint {
    RunConfig config;
    std::unique_ptr<Model> model;
    std::unique_ptr<Adam> adam;
    ModelState state;  // per-layer memory of the last sequence seen; empty when absent
};

inline constexpr char kCheckpointMagic[8] = {'I', 'N', 'F', 'M', 'E', 'M', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& file, const RunConfig& cfg, const Model& model, const Adam* adam,
                     const ModelState* state);
Checkpoint load_checkpoint(const std::filesystem::path& file);

// Exclusive ownership of a run directory. Throws StateError when another run holds it.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path file_;
};

}  // namespace infmem
