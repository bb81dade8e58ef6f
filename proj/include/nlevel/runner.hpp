#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlevel/models.hpp"

namespace nlevel {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {"validate", "smatrix", "sweep",    "degeneracies", "loops",
                                                   "predict",  "compare", "superasym", "symmetry"};
    return names;
}

/// Scalar fields that command-line flags may override.
struct RunOverrides {
    std::optional<std::vector<double>> epsilons;
    std::optional<int> threads;
};

struct RunConfig {
    std::string task;
    std::filesystem::path out_dir = ".";
    Json resolved;  // full config with defaults filled in, embedded in report.json
    int threads = 1;
};

/// Parses JSON text; syntax errors become ConfigError with line and column.
Json parse_config_text(const std::string& text, const std::string& origin = "config");
Json load_config_file(const std::filesystem::path& path);

/// Validates the fields needed by `task` and fills defaults. Throws ConfigError naming the field.
RunConfig resolve_config(const Json& config, const std::string& task, const RunOverrides& overrides = {},
                         int env_threads = 0);

/// Model described by a resolved model block.
GeneratorModel build_model(const Json& model_block);

/// Runs the task and writes report.json plus the task CSV files into cfg.out_dir.
/// Returns 0 on success, 2 on a failed validation and 3 on a numerical failure.
int run(const RunConfig& cfg, std::ostream& log);

/// 17 significant digits.
std::string format_double(double x);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

/// Comma-separated CSV with a header row.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);
    CsvTable& row();
    CsvTable& add(double x);
    CsvTable& add(int x);
    CsvTable& add(const std::string& s);
    std::string str() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

}  // namespace nlevel
