import logging
import xml.etree.ElementTree as ET

import numpy as np

from mpnewton import optimize as O
from mpnewton.plotting import emit_plot

NS = "{http://www.w3.org/2000/svg}"


def trace(values, label="t"):
    recs = [O.IterationRecord(i, v, v * 2, 0.0, 0.0, 0, 0) for i, v in enumerate(values)]
    return O.Trace(recs, None, "x", np.zeros(1), label=label)


def test_single_trace_one_bound(tmp_path):
    path = tmp_path / "p.svg"
    n = emit_plot([trace([1.0, 1e-3, 1e-8])], [("lim_acc", 1e-9)], path)
    root = ET.parse(path).getroot()
    assert n == 1
    assert len(root.findall(f"{NS}polyline")) == 1
    dashed = [e for e in root.findall(f"{NS}line") if e.get("stroke-dasharray")]
    assert len(dashed) == 1


def test_three_traces(tmp_path):
    traces = [trace([1.0, 0.5], f"GN_{k}") for k in (0, 30, 100)]
    emit_plot(traces, [], tmp_path / "g.svg")
    root = ET.parse(tmp_path / "g.svg").getroot()
    assert len(root.findall(f"{NS}polyline")) == 3


def test_deterministic_bytes(tmp_path):
    tr = [trace([1.0, 1e-4, 3e-9, 2e-9])]
    emit_plot(tr, [("b", 1e-9)], tmp_path / "a.svg", title="x")
    emit_plot(tr, [("b", 1e-9)], tmp_path / "b.svg", title="x")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_empty_trace_skipped(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        n = emit_plot([trace([]), trace([0.0, 0.0]), trace([1.0, 0.1])], [], tmp_path / "e.svg")
    assert n == 1
    assert "nothing to plot" in caplog.text
    ET.parse(tmp_path / "e.svg")


def test_other_column(tmp_path):
    emit_plot([trace([1.0, 0.1])], [("lim_g", 0.01)], tmp_path / "c.svg", column="grad_norm")
    assert "grad_norm" in (tmp_path / "c.svg").read_text()
