#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vqs/ingestion.hpp"
#include "vqs/training.hpp"

namespace vqs {

/// Everything a pipeline run can be configured with.
struct RunConfig {
    TrainConfig train;
    std::size_t impute_k = 10;
    std::vector<Platform> platforms;  // positional: mRNA files, then miRNA files
    std::optional<std::filesystem::path> exclude;
    std::size_t kmeans_restarts = 20;
    std::size_t pca_components = 2;

    bool operator==(const RunConfig&) const = default;
};

struct ConfigKey {
    std::string name;         // config-file key; the flag is "--" + name with '_' → '-'
    std::string description;
};

/// Every accepted key, in documentation order.
const std::vector<ConfigKey>& config_keys();

/// Flag spelling of a key, e.g. "learning_rate" → "--learning-rate".
std::string flag_for_key(const std::string& key);

/// Current value of `key` in `cfg`, formatted as it would be written in a file.
std::string config_value(const RunConfig& cfg, const std::string& key);

/// Parse and range-check one value. `origin` names the source in errors.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& origin);

/// Apply "key = value" lines ('#' comments, blank lines allowed) on top of
/// `cfg`. Unknown or repeated keys throw ParseError with the line number.
void apply_config_file(RunConfig& cfg, std::istream& in, const std::string& source_name);
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// Built-in defaults, then the file (if any), then the overrides in order.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace vqs
