#include "run_manifest.hpp"

#include <cstdlib>

#include "ctsat/error.hpp"
#include "ctsat/io.hpp"

#ifndef CTSAT_VERSION
#define CTSAT_VERSION "0.0.0"
#endif

namespace ctsat::cli {

RunManifest::RunManifest(std::string command) : command_(std::move(command)), start_(Clock::now()), last_(start_) {}

void RunManifest::add_input(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("input not found: " + path.string());
    inputs_.emplace_back(path.generic_string(), io::sha256_file(path));
}

void RunManifest::add_output(const std::filesystem::path& path) {
    outputs_.emplace_back(path.generic_string(), io::sha256_file(path));
}

void RunManifest::mark(const std::string& stage) {
    const auto now = Clock::now();
    timings_[stage] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
}

nlohmann::json RunManifest::to_json() const {
    auto files = [](const auto& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& [p, h] : v) a.push_back({{"path", p}, {"sha256", h}});
        return a;
    };
    nlohmann::json t = timings_;
    t["total_s"] = std::chrono::duration<double>(Clock::now() - start_).count();
    return {{"command", command_},  {"tool_version", CTSAT_VERSION}, {"config", config_},
            {"seeds", seeds_},      {"inputs", files(inputs_)},      {"outputs", files(outputs_)},
            {"notes", notes_},      {"timings", t}};
}

void RunManifest::write(const std::filesystem::path& path) { io::write_file_atomic(path, io::dump_json(to_json())); }

std::filesystem::path output_path(const std::string& flag_value, const std::string& default_name) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("CTSAT_OUTPUT_DIR"); env && *env) return std::filesystem::path(env) / default_name;
    return default_name;
}

}  // namespace ctsat::cli
