#include "tiered/bytes.hpp"
#include "tiered/error.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

namespace tiered {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:
            return "invalid_argument";
        case ErrorKind::DimensionMismatch:
            return "dimension_mismatch";
        case ErrorKind::NonFinite:
            return "non_finite";
        case ErrorKind::UnknownCluster:
            return "unknown_cluster";
        case ErrorKind::Format:
            return "format";
        case ErrorKind::Io:
            return "io";
        case ErrorKind::Infeasible:
            return "infeasible";
        case ErrorKind::NoConvergence:
            return "no_convergence";
        case ErrorKind::StaleInput:
            return "stale_input";
        case ErrorKind::Internal:
            return "internal";
    }
    return "unknown";
}

void throw_error(ErrorKind kind, const std::string& msg) {
    throw Error(kind, msg);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw_error(ErrorKind::Io, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(
        const std::filesystem::path& path,
        std::span<const std::uint8_t> data) {
    // write to a sibling temp file first so a failed write never leaves a
    // partial artifact behind
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw_error(ErrorKind::Io, "cannot write " + path.string());
        }
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        if (!out) {
            throw_error(ErrorKind::Io, "short write to " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw_error(ErrorKind::Io, "cannot rename into " + path.string());
    }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    write_file(
            path,
            std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text_file(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

std::string content_digest(std::span<const std::uint8_t> data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return out;
}

std::string content_digest(std::string_view text) {
    return content_digest(
            std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string file_digest(const std::filesystem::path& path) {
    return content_digest(read_file(path));
}

} // namespace tiered
