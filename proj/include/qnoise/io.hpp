#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace qnoise::io {

/// A rectangular table of doubles with named columns. All CSV files emitted
/// by the library go through this type so they round-trip losslessly.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // each row has columns.size() entries

    std::size_t n_rows() const { return rows.size(); }
    int column_index(std::string_view name) const;  // -1 if absent
    std::vector<double> column(std::string_view name) const;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

std::string format_double(double v);  // shortest round-trip representation

/// FNV-1a 64-bit hash. Used for config hashes and file checksums in run
/// manifests; stable across platforms and runs.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

/// Derive a stream-specific seed from a run seed and a stage tag, so
/// independent generators never share a raw seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

}  // namespace qnoise::io
