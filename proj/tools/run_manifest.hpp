#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctsat::cli {

/// Provenance record written next to every artifact a command produces.
/// Everything except "timings" is a pure function of the command, its
/// configuration and its inputs.
class RunManifest {
public:
    explicit RunManifest(std::string command);

    void set_config(nlohmann::json config) { config_ = std::move(config); }
    void add_seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }
    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    void add_note(const std::string& key, nlohmann::json value) { notes_[key] = std::move(value); }

    /// Wall time since construction, or since the previous mark, under `stage`.
    void mark(const std::string& stage);

    nlohmann::json to_json() const;
    void write(const std::filesystem::path& path);

private:
    using Clock = std::chrono::steady_clock;
    std::string command_;
    nlohmann::json config_ = nlohmann::json::object();
    nlohmann::json seeds_ = nlohmann::json::object();
    nlohmann::json notes_ = nlohmann::json::object();
    std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
    nlohmann::json timings_ = nlohmann::json::object();
    Clock::time_point start_, last_;
};

/// Resolves an output location: the flag value if given, else the default name
/// under $CTSAT_OUTPUT_DIR, else under the working directory.
std::filesystem::path output_path(const std::string& flag_value, const std::string& default_name);

}  // namespace ctsat::cli
