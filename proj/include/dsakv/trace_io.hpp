#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dsakv/trace.hpp"

namespace dsakv {

enum class TraceFormat { binary, jsonlines };

/// Parses "binary"/"bin"/"dsat" or "jsonlines"/"jsonl"; throws std::invalid_argument otherwise.
TraceFormat parse_trace_format(std::string_view name);

/// `.jsonl` selects jsonlines, anything else binary.
TraceFormat format_for_path(const std::filesystem::path& path);

inline constexpr char kTraceMagic[4] = {'D', 'S', 'A', 'T'};
inline constexpr std::uint16_t kTraceVersion = 1;

class TraceFormatError : public std::runtime_error {
public:
    enum class Kind { bad_magic, unsupported_version, truncated, malformed, validation };

    /// `offset` is a byte offset for the binary format and a 1-based line number for jsonlines.
    TraceFormatError(Kind kind, std::uint64_t offset, const std::string& what);

    Kind kind() const noexcept { return kind_; }
    std::uint64_t offset() const noexcept { return offset_; }

private:
    Kind kind_;
    std::uint64_t offset_;
};

const char* to_string(TraceFormatError::Kind kind);

/// Serializes a valid trace; throws std::invalid_argument for invalid traces and
/// std::ios_base::failure if the sink rejects the bytes. Returns the byte count written.
std::uint64_t write_trace(const Trace& trace, TraceFormat format, std::ostream& sink);

/// Parses and validates a trace; throws TraceFormatError.
Trace read_trace(std::istream& source, TraceFormat format);

std::string encode_trace(const Trace& trace, TraceFormat format);
Trace decode_trace(std::string_view bytes, TraceFormat format);

/// File helpers. Writes go through a temporary file and a rename.
void write_trace_file(const Trace& trace, const std::filesystem::path& path, TraceFormat format);
Trace read_trace_file(const std::filesystem::path& path);

}  // namespace dsakv
