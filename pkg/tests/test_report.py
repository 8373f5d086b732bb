import xml.etree.ElementTree as ET

import numpy as np
import pytest

from cellseer.evalkit import DetectionRecord, ErrorStats
from cellseer.report import divergence_svg, embedding_svg, emit_report

NS = "{http://www.w3.org/2000/svg}"


def test_divergence_svg_has_threshold_line():
    t = np.arange(0, 600.0)
    svg = divergence_svg({"nn": (t, np.linspace(0, 50, 600))}, 32.0, fault_time=600.0)
    root = ET.fromstring(svg)
    lines = [e for e in root.iter(f"{NS}line") if e.get("class") == "threshold"]
    assert len(lines) == 1 and float(lines[0].get("data-value")) == 32.0
    assert lines[0].get("y1") == lines[0].get("y2")


def test_divergence_svg_threshold_per_model():
    t = np.arange(10.0)
    svg = divergence_svg({"nn": (t, t), "parametric": (t, 2 * t)}, {"nn": 5.0, "parametric": 12.0})
    values = sorted(float(e.get("data-value")) for e in ET.fromstring(svg).iter(f"{NS}line")
                    if e.get("class") == "threshold")
    assert values == [5.0, 12.0]


def test_embedding_svg_counts_points():
    rows = [{"electrolyzer": "E0", "cycle": c, "cell": f"P{j}", "code_x": 0.1 * j, "code_y": 0.5}
            for c in range(2) for j in range(4)]
    root = ET.fromstring(embedding_svg(rows, highlight=["P3"]))
    assert sum(1 for e in root.iter(f"{NS}circle") if e.get("class") == "code") == 8


def test_emit_report_bundle(tmp_path):
    s = {"nn": ErrorStats.from_values([1.0, 2.0])}
    rows = [{"electrolyzer": "E0", "cycle": 0, "cell": "c", "code_x": 0.2, "code_y": 0.3}]
    det = [DetectionRecord("c", 10.0, 14.0, 100.0)]
    paths = emit_report(tmp_path, s, s, det, rows, {"nn": (np.arange(5.0), np.ones(5))}, {"nn": 3.0}, 4.0)
    assert {p.name for p in paths} == {"inter_cycle.csv", "intra_cycle.csv", "detections.json", "embeddings.csv",
                                       "embedding.svg", "divergence.svg"}
    for p in paths:
        if p.suffix == ".svg":
            ET.parse(p)


def test_emit_report_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(blocker / "sub", {}, {}, [], [])
