import csv
import io
import xml.etree.ElementTree as ET

import numpy as np

from tnml.report import COMPRESSION_COLUMNS, grid_csv, heatmap_svg, line_chart_svg, rows_csv


def test_grid_csv_round_trips_floats():
    vals = np.random.default_rng(0).random((3, 5))
    rows = list(csv.reader(io.StringIO(grid_csv(vals))))
    assert rows[0] == ["c0", "c1", "c2", "c3", "c4"]
    np.testing.assert_array_equal(np.array(rows[1:], dtype=float), vals)


def test_rows_csv_blank_for_missing():
    text = rows_csv(("a", "b"), [{"a": 1, "b": None}, {"a": 0.5}])
    assert text == "a,b\n1,\n0.5,\n"


def test_compression_columns():
    assert COMPRESSION_COLUMNS[0] == "eps" and "ratio" in COMPRESSION_COLUMNS


def test_heatmap_is_valid_svg():
    vals = np.arange(12.0).reshape(3, 4)
    root = ET.fromstring(heatmap_svg(vals, title="t<1>"))
    rects = [el for el in root if el.tag.endswith("rect")]
    assert len(rects) >= 12
    texts = "".join(el.text or "" for el in root.iter() if el.tag.endswith("text"))
    assert "nats" in texts and "t<1>" in texts


def test_heatmap_all_zero():
    ET.fromstring(heatmap_svg(np.zeros((2, 2))))


def test_line_chart_valid_with_zero_on_log_axis():
    root = ET.fromstring(line_chart_svg([0.0, 1e-4, 1e-2], {"params": [10, 8, 3], "acc": [1, 1, 1]}, log_x=True))
    assert sum(el.tag.endswith("polyline") for el in root) == 2
