import math

import numpy as np
import pytest

from qrelax.fields import DiagnosticsRecord
from qrelax.grid import make_grid
from qrelax.fields import QnspState
from qrelax.qnsp import qnsp_run
from qrelax.series import read_series, write_series


class TestSeries:
    def test_round_trip_exact(self, tmp_path, rng):
        recs = []
        for i in range(20):
            r = DiagnosticsRecord(**{k: float(rng.normal()) for k in DiagnosticsRecord.keys()})
            r.t = i * 0.1
            recs.append(r)
        recs[3].bd_entropy = float("nan")
        path = tmp_path / "s.ndjson"
        write_series(recs, path)
        back = read_series(path)
        assert back == recs
        assert math.isnan(back[3].bd_entropy)

    def test_key_order(self, tmp_path):
        path = tmp_path / "s.ndjson"
        write_series([DiagnosticsRecord()], path)
        import json
        line = json.loads(path.read_text().splitlines()[0])
        assert list(line) == list(DiagnosticsRecord.keys())

    def test_thousand_records_monotone(self, tmp_path):
        grid = make_grid(1, 16)
        s = QnspState.create(grid, 1 + 0.1 * np.cos(2 * np.pi * grid.coords()[0]), eps=0.3, gamma=2.0)
        _, recs = qnsp_run(s, 0.01, None, 1e-5, keep_snapshots=False)
        assert len(recs) == 1001
        path = tmp_path / "s.ndjson"
        write_series(recs, path)
        t = [r.t for r in read_series(path)]
        assert all(b > a for a, b in zip(t, t[1:]))

    def test_unwritable(self, tmp_path):
        with pytest.raises(OSError):
            write_series([DiagnosticsRecord()], tmp_path / "missing" / "s.ndjson")
