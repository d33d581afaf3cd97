import json

import numpy as np
import pytest

from maxstab.extensions import ArtifactWriter, ReplicationPool, pool, sha256_file, writer
from maxstab.models import Grid
from maxstab.services.catalog import CompactBump
from maxstab.services.errors import DataError
from maxstab.services.export import paths_payload, read_paths


def test_json_output_is_strict(app, tmp_path):
    rec = writer.write_json(tmp_path, "out/a.json", {"b": float("inf"), "a": np.float64(0.5), "c": [float("nan")]})
    text = (tmp_path / "out" / "a.json").read_text(encoding="utf-8")
    assert json.loads(text) == {"a": 0.5, "b": "inf", "c": ["nan"]}
    assert text.endswith("\n")
    assert rec.sha256 == sha256_file(tmp_path / "out" / "a.json")


def test_csv_output_uses_crlf(app, tmp_path):
    writer.write_csv(tmp_path, "t.csv", [["x", "y"], [1, 2]])
    assert (tmp_path / "t.csv").read_bytes() == b"x,y\r\n1,2\r\n"


def test_uninitialised_extensions_raise():
    with pytest.raises(RuntimeError):
        ReplicationPool().threads
    with pytest.raises(RuntimeError):
        ArtifactWriter().root


def test_pool_runs_in_process_for_one_thread(app):
    with pool.executor() as executor:
        assert executor is None
    with pool.executor(3) as executor:
        assert executor.submit(lambda: 4).result() == 4


def test_paths_file_round_trip_keeps_masses(app, tmp_path, rng):
    grid = Grid.window(1, 4.0, 0.5)
    paths = CompactBump(shape="parabolic").sample_batch(grid, rng, 3)
    writer.write_json(tmp_path, "paths.json", paths_payload(paths))
    loaded = read_paths(tmp_path / "paths.json")
    assert len(loaded) == 3
    assert np.allclose(loaded[0].masses, paths[0].masses)


def test_paths_file_with_wrong_length(tmp_path):
    target = tmp_path / "paths.json"
    target.write_text(json.dumps({"grid": Grid.window(1, 2.0).describe(), "paths": [[1.0, 2.0]]}), encoding="utf-8")
    with pytest.raises(DataError):
        read_paths(target)
