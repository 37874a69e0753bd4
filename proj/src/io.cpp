#include "catcorr/io.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace catcorr {

void require_schema_version(const json& j, const std::string& what)
{
    if (!j.is_object() || !j.contains("version") || !j["version"].is_number_integer()) {
        throw InputError(what + ": missing schema version");
    }
    if (j["version"].get<int>() != kSchemaVersion) {
        throw InputError(what + ": unsupported schema version " + std::to_string(j["version"].get<int>()));
    }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw InputError("cannot write " + path.string());
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) {
            throw InputError("short write to " + path.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::filesystem::path& path)
{
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const json& j)
{
    write_file_atomic(path, j.dump(2) + "\n");
}

void write_blob(const std::filesystem::path& base, json header, std::span<const double> values)
{
    header["version"] = kSchemaVersion;
    header["dtype"] = "f64le";
    header["count"] = values.size();
    std::string bytes(values.size() * 8, '\0');
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto bits = std::bit_cast<std::uint64_t>(values[i]);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap64(bits);
        }
        std::memcpy(bytes.data() + 8 * i, &bits, 8);
    }
    std::filesystem::path bin = base;
    bin += ".bin";
    std::filesystem::path hdr = base;
    hdr += ".json";
    write_file_atomic(bin, bytes);
    write_json(hdr, header);
}

BlobData read_blob(const std::filesystem::path& base)
{
    std::filesystem::path bin = base;
    bin += ".bin";
    std::filesystem::path hdr = base;
    hdr += ".json";
    BlobData out;
    out.header = read_json(hdr);
    require_schema_version(out.header, hdr.string());
    if (out.header.value("dtype", "") != "f64le" || !out.header.contains("count")) {
        throw InputError(hdr.string() + ": bad blob header");
    }
    const std::string bytes = read_file(bin);
    const auto count = out.header["count"].get<std::size_t>();
    if (bytes.size() != count * 8) {
        throw StateMismatch(bin.string() + ": blob size does not match header");
    }
    out.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        if constexpr (std::endian::native == std::endian::big) {
            bits = __builtin_bswap64(bits);
        }
        out.values[i] = std::bit_cast<double>(bits);
    }
    return out;
}

std::string content_hash(const std::string& bytes)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace catcorr
