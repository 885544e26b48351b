#include "dsakv/trace_io.hpp"

#include <array>
#include <cstring>
#include <istream>
#include <iterator>
#include <limits>
#include <ostream>
#include <sstream>

#include "dsakv/atomic_file.hpp"
#include "json.hpp"

namespace dsakv {

TraceFormatError::TraceFormatError(Kind kind, std::uint64_t offset, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " at " + std::to_string(offset) + ": " + what),
      kind_(kind), offset_(offset) {}

const char* to_string(TraceFormatError::Kind kind) {
    using K = TraceFormatError::Kind;
    switch (kind) {
    case K::bad_magic: return "bad magic";
    case K::unsupported_version: return "unsupported version";
    case K::truncated: return "truncated stream";
    case K::malformed: return "malformed";
    case K::validation: return "validation failure";
    }
    return "unknown";
}

TraceFormat parse_trace_format(std::string_view name) {
    if (name == "binary" || name == "bin" || name == "dsat") return TraceFormat::binary;
    if (name == "jsonlines" || name == "jsonl") return TraceFormat::jsonlines;
    throw std::invalid_argument("unknown trace format '" + std::string(name) + "'");
}

TraceFormat format_for_path(const std::filesystem::path& path) {
    return path.extension() == ".jsonl" ? TraceFormat::jsonlines : TraceFormat::binary;
}

namespace {

using Kind = TraceFormatError::Kind;

// ---- binary ---------------------------------------------------------------

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string encode_binary(const Trace& tr) {
    const TraceMeta& m = tr.meta;
    if (m.model_name.size() > std::numeric_limits<std::uint16_t>::max()) {
        throw std::invalid_argument("model_name longer than 65535 bytes");
    }
    std::string out;
    std::size_t payload = 0;
    for (const auto& st : tr.steps)
        for (const auto& set : st.per_layer) payload += 4 * (1 + set.size());
    out.reserve(36 + m.model_name.size() + payload);

    out.append(kTraceMagic, sizeof(kTraceMagic));
    put_u16(out, kTraceVersion);
    for (std::uint32_t v : {m.n_layers, m.top_k, m.prefill_len, m.n_steps, m.page_size_tokens, m.kv_token_bytes,
                            m.tenant_id}) {
        put_u32(out, v);
    }
    put_u16(out, static_cast<std::uint16_t>(m.model_name.size()));
    out.append(m.model_name);
    for (const auto& st : tr.steps) {
        for (const auto& set : st.per_layer) {
            put_u32(out, static_cast<std::uint32_t>(set.size()));
            for (TokenIndex s : set) put_u32(out, s);
        }
    }
    return out;
}

class ByteCursor {
public:
    explicit ByteCursor(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            throw TraceFormatError(Kind::truncated, pos_,
                                   std::string("need ") + std::to_string(n) + " bytes for " + what + ", have " +
                                       std::to_string(remaining()));
        }
    }

    std::uint16_t u16(const char* what) {
        need(2, what);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }

    std::uint32_t u32(const char* what) {
        need(4, what);
        const auto* p = reinterpret_cast<const unsigned char*>(bytes_.data() + pos_);
        pos_ += 4;
        return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
               (std::uint32_t{p[3]} << 24);
    }

    std::string_view take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

Trace decode_binary(std::string_view bytes) {
    const std::size_t head = std::min<std::size_t>(bytes.size(), sizeof(kTraceMagic));
    if (head > 0 && std::memcmp(bytes.data(), kTraceMagic, head) != 0) {
        throw TraceFormatError(Kind::bad_magic, 0, "stream does not start with \"DSAT\"");
    }
    ByteCursor cur(bytes);
    cur.take(sizeof(kTraceMagic), "magic");
    const std::uint64_t version_at = cur.offset();
    const std::uint16_t version = cur.u16("version");
    if (version != kTraceVersion) {
        throw TraceFormatError(Kind::unsupported_version, version_at, "version " + std::to_string(version));
    }
    Trace tr;
    TraceMeta& m = tr.meta;
    m.n_layers = cur.u32("n_layers");
    m.top_k = cur.u32("top_k");
    m.prefill_len = cur.u32("prefill_len");
    m.n_steps = cur.u32("n_steps");
    m.page_size_tokens = cur.u32("page_size_tokens");
    m.kv_token_bytes = cur.u32("kv_token_bytes");
    m.tenant_id = cur.u32("tenant_id");
    const std::uint16_t name_len = cur.u16("model_name length");
    m.model_name = std::string(cur.take(name_len, "model_name"));

    tr.steps.resize(m.n_steps);
    for (std::uint32_t t = 0; t < m.n_steps; ++t) {
        DecodeStep& st = tr.steps[t];
        st.t = t;
        st.per_layer.resize(m.n_layers);
        for (auto& set : st.per_layer) {
            const std::uint32_t count = cur.u32("set count");
            cur.need(std::size_t{count} * 4, "set indices");
            set.resize(count);
            for (auto& s : set) s = cur.u32("index");
        }
    }
    if (cur.remaining() != 0) {
        throw TraceFormatError(Kind::malformed, cur.offset(),
                               std::to_string(cur.remaining()) + " trailing bytes after last step");
    }
    return tr;
}

// ---- json lines -----------------------------------------------------------

using ojson = nlohmann::ordered_json;

std::string encode_jsonlines(const Trace& tr) {
    const TraceMeta& m = tr.meta;
    ojson header;
    header["format"] = "DSAT";
    header["version"] = kTraceVersion;
    header["model_name"] = m.model_name;
    header["n_layers"] = m.n_layers;
    header["top_k"] = m.top_k;
    header["prefill_len"] = m.prefill_len;
    header["n_steps"] = m.n_steps;
    header["page_size_tokens"] = m.page_size_tokens;
    header["kv_token_bytes"] = m.kv_token_bytes;
    header["tenant_id"] = m.tenant_id;

    std::string out = header.dump();
    out.push_back('\n');
    for (const auto& st : tr.steps) {
        ojson line;
        line["t"] = st.t;
        line["layers"] = st.per_layer;
        out += line.dump();
        out.push_back('\n');
    }
    return out;
}

std::uint32_t json_u32(const ojson& obj, const char* key, std::uint64_t line) {
    auto it = obj.find(key);
    if (it == obj.end()) throw TraceFormatError(Kind::malformed, line, std::string("missing field '") + key + "'");
    if (!it->is_number_unsigned() || it->get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        throw TraceFormatError(Kind::malformed, line, std::string("field '") + key + "' is not a u32");
    }
    return it->get<std::uint32_t>();
}

Trace decode_jsonlines(std::string_view bytes) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        std::size_t nl = bytes.find('\n', pos);
        if (nl == std::string_view::npos) nl = bytes.size();
        lines.push_back(bytes.substr(pos, nl - pos));
        pos = nl + 1;
    }
    if (lines.empty() || lines.front().empty()) throw TraceFormatError(Kind::truncated, 1, "missing header line");

    auto parse = [](std::string_view text, std::uint64_t line) {
        try {
            return ojson::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw TraceFormatError(Kind::malformed, line, e.what());
        }
    };

    const ojson header = parse(lines[0], 1);
    if (!header.is_object()) throw TraceFormatError(Kind::malformed, 1, "header is not an object");
    if (auto f = header.find("format"); f != header.end() && *f != "DSAT") {
        throw TraceFormatError(Kind::bad_magic, 1, "format tag is not \"DSAT\"");
    }
    if (auto v = header.find("version"); v != header.end() && *v != kTraceVersion) {
        throw TraceFormatError(Kind::unsupported_version, 1, "version " + v->dump());
    }
    Trace tr;
    TraceMeta& m = tr.meta;
    if (auto it = header.find("model_name"); it != header.end()) {
        if (!it->is_string()) throw TraceFormatError(Kind::malformed, 1, "model_name is not a string");
        m.model_name = it->get<std::string>();
    }
    m.n_layers = json_u32(header, "n_layers", 1);
    m.top_k = json_u32(header, "top_k", 1);
    m.prefill_len = json_u32(header, "prefill_len", 1);
    m.n_steps = json_u32(header, "n_steps", 1);
    m.page_size_tokens = json_u32(header, "page_size_tokens", 1);
    m.kv_token_bytes = json_u32(header, "kv_token_bytes", 1);
    m.tenant_id = header.contains("tenant_id") ? json_u32(header, "tenant_id", 1) : 0;

    std::size_t body = lines.size() - 1;
    // A final newline produces one empty trailing entry.
    if (body > 0 && lines.back().empty()) --body;
    if (body < m.n_steps) {
        throw TraceFormatError(Kind::truncated, body + 2,
                               std::to_string(body) + " step lines, header says " + std::to_string(m.n_steps));
    }
    if (body > m.n_steps) {
        throw TraceFormatError(Kind::malformed, m.n_steps + 2, "extra lines after last step");
    }
    tr.steps.reserve(m.n_steps);
    for (std::size_t i = 0; i < body; ++i) {
        const std::uint64_t line_no = i + 2;
        const ojson obj = parse(lines[i + 1], line_no);
        if (!obj.is_object()) throw TraceFormatError(Kind::malformed, line_no, "step line is not an object");
        DecodeStep st;
        st.t = json_u32(obj, "t", line_no);
        auto layers = obj.find("layers");
        if (layers == obj.end() || !layers->is_array()) {
            throw TraceFormatError(Kind::malformed, line_no, "missing 'layers' array");
        }
        for (const auto& set : *layers) {
            if (!set.is_array()) throw TraceFormatError(Kind::malformed, line_no, "layer entry is not an array");
            TopKSet out;
            out.reserve(set.size());
            for (const auto& v : set) {
                if (!v.is_number_unsigned() || v.get<std::uint64_t>() > std::numeric_limits<std::uint32_t>::max()) {
                    throw TraceFormatError(Kind::malformed, line_no, "index is not a u32");
                }
                out.push_back(v.get<TokenIndex>());
            }
            st.per_layer.push_back(std::move(out));
        }
        tr.steps.push_back(std::move(st));
    }
    return tr;
}

void validate_or_throw(const Trace& tr, TraceFormat format) {
    const ValidationReport report = validate_trace(tr);
    if (report.empty()) return;
    const Violation& v = report.front();
    std::uint64_t where = 0;
    if (format == TraceFormat::jsonlines) where = v.step >= 0 ? static_cast<std::uint64_t>(v.step) + 2 : 1;
    std::string what = std::string(to_string(v.kind)) + ": " + v.detail;
    if (v.step >= 0) what += " (step " + std::to_string(v.step) + (v.layer >= 0 ? ", layer " + std::to_string(v.layer) : "") + ")";
    throw TraceFormatError(Kind::validation, where, what);
}

}  // namespace

std::string encode_trace(const Trace& trace, TraceFormat format) {
    require_valid(trace);
    return format == TraceFormat::binary ? encode_binary(trace) : encode_jsonlines(trace);
}

Trace decode_trace(std::string_view bytes, TraceFormat format) {
    Trace tr = format == TraceFormat::binary ? decode_binary(bytes) : decode_jsonlines(bytes);
    validate_or_throw(tr, format);
    return tr;
}

std::uint64_t write_trace(const Trace& trace, TraceFormat format, std::ostream& sink) {
    const std::string bytes = encode_trace(trace, format);
    sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!sink) throw std::ios_base::failure("trace sink rejected write");
    return bytes.size();
}

Trace read_trace(std::istream& source, TraceFormat format) {
    std::string bytes{std::istreambuf_iterator<char>(source), std::istreambuf_iterator<char>()};
    return decode_trace(bytes, format);
}

void write_trace_file(const Trace& trace, const std::filesystem::path& path, TraceFormat format) {
    write_file_atomic(path, encode_trace(trace, format));
}

Trace read_trace_file(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const TraceFormat format =
        !bytes.empty() && bytes.front() == '{' ? TraceFormat::jsonlines : TraceFormat::binary;
    return decode_trace(bytes, format);
}

}  // namespace dsakv
