#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dsakv/cache_sim.hpp"
#include "dsakv/keyvalue.hpp"
#include "dsakv/metrics.hpp"
#include "dsakv/report_io.hpp"
#include "dsakv/roofline.hpp"
#include "dsakv/synth.hpp"
#include "dsakv/trace.hpp"
#include "dsakv/trace_io.hpp"

namespace py = pybind11;
using namespace dsakv;

namespace {

std::vector<Trace> as_traces(const py::object& obj) {
    if (py::isinstance<Trace>(obj)) return {obj.cast<Trace>()};
    return obj.cast<std::vector<Trace>>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "DSA KV-cache access-pattern toolkit";

    static py::exception<TraceFormatError> trace_error(m, "TraceFormatError", PyExc_ValueError);
    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const TraceFormatError& e) {
            const std::string msg = std::string(to_string(e.kind())) + ": " + e.what();
            py::set_error(trace_error, msg.c_str());
        } catch (const ConfigError& e) {
            py::set_error(config_error, e.what());
        }
    });

    py::class_<TraceMeta>(m, "TraceMeta")
        .def(py::init<>())
        .def_readwrite("model_name", &TraceMeta::model_name)
        .def_readwrite("n_layers", &TraceMeta::n_layers)
        .def_readwrite("top_k", &TraceMeta::top_k)
        .def_readwrite("prefill_len", &TraceMeta::prefill_len)
        .def_readwrite("n_steps", &TraceMeta::n_steps)
        .def_readwrite("page_size_tokens", &TraceMeta::page_size_tokens)
        .def_readwrite("kv_token_bytes", &TraceMeta::kv_token_bytes)
        .def_readwrite("tenant_id", &TraceMeta::tenant_id)
        .def(py::self == py::self);

    py::class_<DecodeStep>(m, "DecodeStep")
        .def(py::init<>())
        .def(py::init([](std::uint32_t t, std::vector<TopKSet> per_layer) { return DecodeStep{t, std::move(per_layer)}; }),
             py::arg("t"), py::arg("per_layer"))
        .def_readwrite("t", &DecodeStep::t)
        .def_readwrite("per_layer", &DecodeStep::per_layer)
        .def(py::self == py::self);

    py::class_<Trace>(m, "Trace")
        .def(py::init<>())
        .def_readwrite("meta", &Trace::meta)
        .def_readwrite("steps", &Trace::steps)
        .def(py::self == py::self);

    m.def(
        "validate_trace",
        [](const Trace& tr) {
            py::list out;
            for (const auto& v : validate_trace(tr))
                out.append(py::make_tuple(to_string(v.kind), v.step, v.layer, v.detail));
            return out;
        },
        "List of (kind, step, layer, detail); empty when valid.");

    m.def(
        "encode_trace",
        [](const Trace& tr, const std::string& format) {
            return py::bytes(encode_trace(tr, parse_trace_format(format)));
        },
        py::arg("trace"), py::arg("format") = "binary");
    m.def(
        "decode_trace",
        [](const py::bytes& data, const std::string& format) {
            return decode_trace(std::string(data), parse_trace_format(format));
        },
        py::arg("data"), py::arg("format") = "binary");
    m.def("read_trace", [](const std::string& path) { return read_trace_file(path); }, py::arg("path"));
    m.def(
        "write_trace",
        [](const Trace& tr, const std::string& path, std::optional<std::string> format) {
            write_trace_file(tr, path, format ? parse_trace_format(*format) : format_for_path(path));
        },
        py::arg("trace"), py::arg("path"), py::arg("format") = py::none());

    m.def(
        "indexer_score",
        [](std::vector<float> q, std::vector<float> k, std::vector<float> w, std::uint32_t n_heads, std::uint32_t dim) {
            return indexer_score(q, k, w, IndexerParams{n_heads, dim});
        },
        py::arg("q"), py::arg("k"), py::arg("w"), py::arg("n_heads"), py::arg("dim"));
    m.def(
        "top_k_select", [](std::vector<double> scores, std::size_t k) { return top_k_select(scores, k); },
        py::arg("scores"), py::arg("k"));

    m.def(
        "generate_trace",
        [](const std::string& config_text, std::optional<std::uint64_t> seed) {
            auto [cfg, params] = gen_config_from_text(config_text);
            if (seed) cfg.seed = *seed;
            return generate_trace(cfg, params);
        },
        py::arg("config_text") = "", py::arg("seed") = py::none(), "Generator settings as key=value text.");

    m.def(
        "build_report_json",
        [](const py::object& traces, std::uint32_t window, std::uint32_t stride, std::uint32_t page_size) {
            AnalysisConfig cfg;
            cfg.window_N = window;
            cfg.window_stride = stride;
            cfg.page_size_tokens = page_size;
            cfg.validate();
            return report_to_json(build_report(as_traces(traces), cfg));
        },
        py::arg("traces"), py::arg("window") = 50, py::arg("stride") = 1, py::arg("page_size") = 0);

    m.def(
        "simulate_json",
        [](const py::object& traces, const std::string& config_text, std::optional<std::string> reserved) {
            CacheConfig cfg = cache_config_from_text(config_text);
            if (reserved) {
                const auto sizes = parse_byte_list(*reserved);
                if (sizes.size() != 1) throw std::invalid_argument("simulate takes a single reserved size");
                cfg.reserved_bytes = sizes.front();
            }
            return sim_result_to_json(simulate(as_traces(traces), cfg), cfg);
        },
        py::arg("traces"), py::arg("config_text") = "", py::arg("reserved") = py::none());

    m.def(
        "sweep_json",
        [](const py::object& traces, const std::string& config_text, const std::string& reserved) {
            const CacheConfig cfg = cache_config_from_text(config_text);
            const auto sizes = parse_byte_list(reserved);
            return sweep_to_json(sweep(as_traces(traces), cfg, sizes), cfg);
        },
        py::arg("traces"), py::arg("config_text") = "", py::arg("reserved") = "0,5MB,10MB,15MB,20MB");

    m.def(
        "roofline_json",
        [](const std::string& assumptions_text) {
            const std::vector<RooflineRow> rows{evaluate(roofline_from_text(assumptions_text))};
            return roofline_to_json(rows);
        },
        py::arg("assumptions_text"));
}
