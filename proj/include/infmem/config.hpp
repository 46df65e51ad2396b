#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "infmem/experiment.hpp"
#include "infmem/model.hpp"
#include "infmem/tasks.hpp"

namespace infmem {

struct RunConfig {
    ModelConfig model;
    DatasetSpec data;
    std::string data_dir;  // empty: generate the dataset in memory from `data`
    TrainOptions train;
    std::uint64_t checkpoint_every = 0;  // 0: only the final checkpoint
    std::size_t eval_limit = 0;          // 0: whole split
    std::string out_dir = "runs/default";

    bool operator==(const RunConfig&) const = default;
};

// Every recognised (section, key) with its current value, in file order.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
// key is "section.key"; unknown keys and unparsable values throw InvalidArgument.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

// Format:
//   # comment
//   [section]
//   key = value
std::string format_config(const RunConfig& cfg);
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& file);

// INFMEM_<SECTION>_<KEY>=value overrides, e.g. INFMEM_TRAIN_STEPS=50.
void apply_env_overrides(RunConfig& cfg, char** envp);

}  // namespace infmem
