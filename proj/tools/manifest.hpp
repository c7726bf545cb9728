#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace qnoise::pipeline {

/// Run record written next to every subcommand's outputs. Contains no
/// timestamps, so identical configurations reproduce byte-identical
/// manifests.
class RunManifest {
public:
    RunManifest(std::string subcommand, const std::string& config_text, std::uint64_t seed);

    /// Register an emitted file (path relative to the output directory);
    /// checksummed at write time.
    void add_file(const std::filesystem::path& relative_path);
    void stage_ok(const std::string& name);
    void stage_failed(const std::string& name, const std::string& error);
    bool any_failed() const;

    void write(const std::filesystem::path& out_dir) const;

private:
    struct FileEntry {
        std::string path;
        std::string status;
    };
    struct StageEntry {
        std::string name;
        std::string status;
        std::string error;
    };
    std::string subcommand_;
    std::string config_hash_;
    std::uint64_t seed_ = 0;
    std::vector<FileEntry> files_;
    std::vector<StageEntry> stages_;
};

}  // namespace qnoise::pipeline
