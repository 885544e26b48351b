"""Python bindings for the dsakv trace toolkit."""

import json

from ._core import (
    ConfigError,
    DecodeStep,
    Trace,
    TraceFormatError,
    TraceMeta,
    decode_trace,
    encode_trace,
    generate_trace,
    indexer_score,
    read_trace,
    top_k_select,
    validate_trace,
    write_trace,
)
from . import _core


def build_report(traces, window=50, stride=1, page_size=0):
    return json.loads(_core.build_report_json(traces, window, stride, page_size))


def simulate(traces, config_text="", reserved=None):
    return json.loads(_core.simulate_json(traces, config_text, reserved))


def sweep(traces, config_text="", reserved="0,5MB,10MB,15MB,20MB"):
    return json.loads(_core.sweep_json(traces, config_text, reserved))


def roofline(assumptions_text):
    return json.loads(_core.roofline_json(assumptions_text))[0]
