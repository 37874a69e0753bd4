#pragma once

#include "catcorr/common.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>

namespace catcorr {

using json = nlohmann::json;

/// Current major version written into every header; readers reject others.
inline constexpr int kSchemaVersion = 1;

void require_schema_version(const json& j, const std::string& what);

/// Writes via a temporary file and rename so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& j);

/**
 * Parameter blob: `<base>.json` holds the header, `<base>.bin` the values as
 * little-endian f64. The header gains "version", "dtype" and "count" keys.
 */
void write_blob(const std::filesystem::path& base, json header, std::span<const double> values);

struct BlobData {
    json header;
    std::vector<double> values;
};

BlobData read_blob(const std::filesystem::path& base);

/// Lowercase hex FNV-1a 64-bit digest, used for reproducibility checks.
std::string content_hash(const std::string& bytes);

} // namespace catcorr
