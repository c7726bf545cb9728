#include "manifest.hpp"

#include <fstream>

#include "json.hpp"
#include "qnoise/io.hpp"

namespace qnoise::pipeline {

using json = nlohmann::json;
using qnoise::io::fnv1a64;
using qnoise::io::fnv1a64_file;
using qnoise::io::hex64;

RunManifest::RunManifest(std::string subcommand, const std::string& config_text,
                         std::uint64_t seed)
    : subcommand_(std::move(subcommand)), config_hash_(hex64(fnv1a64(config_text))), seed_(seed) {}

void RunManifest::add_file(const std::filesystem::path& relative_path) {
    files_.push_back({relative_path.generic_string(), "ok"});
}

void RunManifest::stage_ok(const std::string& name) { stages_.push_back({name, "ok", ""}); }

void RunManifest::stage_failed(const std::string& name, const std::string& error) {
    stages_.push_back({name, "FAILED", error});
}

bool RunManifest::any_failed() const {
    for (const auto& s : stages_)
        if (s.status == "FAILED") return true;
    return false;
}

void RunManifest::write(const std::filesystem::path& out_dir) const {
    json doc;
    doc["format_version"] = 1;
    doc["subcommand"] = subcommand_;
    doc["config_hash"] = config_hash_;
    doc["seed"] = seed_;
    doc["checksum_algorithm"] = "fnv1a64";

    json files = json::array();
    for (const auto& f : files_) {
        json entry;
        entry["path"] = f.path;
        entry["status"] = f.status;
        entry["checksum"] = hex64(fnv1a64_file(out_dir / f.path));
        files.push_back(entry);
    }
    doc["files"] = files;

    json stages = json::array();
    for (const auto& s : stages_) {
        json entry;
        entry["name"] = s.name;
        entry["status"] = s.status;
        if (!s.error.empty()) entry["error"] = s.error;
        stages.push_back(entry);
    }
    doc["stages"] = stages;

    std::ofstream out(out_dir / "run_manifest.json");
    out << doc.dump(2) << '\n';
}

}  // namespace qnoise::pipeline
