import json
import math

import numpy as np

from hbnscreen.records import dumps, header_lines, read_columns, write_columns


def test_dumps_is_canonical():
    text = dumps({"b": np.float64(1.5), "a": math.nan, "c": np.int64(3), "d": (np.bool_(True),)})
    assert text == '{"a": null, "b": 1.5, "c": 3, "d": [true]}'
    json.loads(text)


def test_header_lines():
    lines = header_lines({"x": 1}, {"t0": 2.8})
    assert lines[0].startswith("# generated: ")
    assert lines[1].startswith("# hbnscreen ")
    assert lines[2] == '# config: {"x": 1}'
    assert lines[3] == '# params: {"t0": 2.8}'


def test_columns_roundtrip(tmp_path):
    path = tmp_path / "c.dat"
    rows = np.array([[0.0, 1.25], [0.5, -3.0]])
    write_columns(path, ["a", "b"], rows, header_lines({}))
    np.testing.assert_allclose(read_columns(path), rows)
