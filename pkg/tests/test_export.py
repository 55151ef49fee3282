import json

import numpy as np
import pandas as pd
import pytest

from twinbeam_eom.dsp import CovBlockEstimate
from twinbeam_eom.errors import FileProcessingError
from twinbeam_eom.export import (
    atomic_write,
    covariance_frame,
    read_traces,
    write_cov_block,
    write_json,
    write_traces,
)
from twinbeam_eom.gaussian_core import ModeGrid, vacuum_cov


def block(n=3):
    freqs = 2e5 * np.arange(1, n + 1)
    return CovBlockEstimate(
        matrix=np.arange(n * n, dtype=float).reshape(n, n),
        stderr=np.full((n, n), 0.1),
        bin_freqs=freqs,
        component="cc",
        n_segments=400,
    )


def test_traces_survive_a_write_and_read(tmp_path):
    channels = {"probe": np.linspace(-1.0, 1.0, 11), "conjugate": np.arange(11.0)}
    data_path, sidecar_path = write_traces(tmp_path / "photocurrent.f64", channels, 1e8, 7, ["homodyne"])

    assert data_path.stat().st_size == 2 * 11 * 8
    read, meta = read_traces(data_path)
    assert list(read) == ["probe", "conjugate"]
    assert np.array_equal(read["probe"], channels["probe"])
    assert np.array_equal(read["conjugate"], channels["conjugate"])
    assert meta["sample_rate"] == 1e8
    assert meta["seed"] == 7
    assert meta["transforms"] == ["homodyne"]
    assert json.loads(sidecar_path.read_text())["n_samples"] == 11


def test_channels_of_different_length_are_rejected(tmp_path):
    with pytest.raises(FileProcessingError, match="differ in length"):
        write_traces(tmp_path / "bad.f64", {"a": np.zeros(3), "b": np.zeros(4)}, 1e8, 0)


def test_truncated_trace_file_is_rejected(tmp_path):
    path, _ = write_traces(tmp_path / "t.f64", {"a": np.zeros(10), "b": np.zeros(10)}, 1e8, 0)
    np.zeros(16).astype("<f8").tofile(path)

    with pytest.raises(FileProcessingError, match="expected 10 samples"):
        read_traces(path)


def test_trace_without_sidecar_is_rejected(tmp_path):
    path = tmp_path / "orphan.f64"
    np.zeros(4).tofile(path)

    with pytest.raises(FileProcessingError, match="Cannot read traces"):
        read_traces(path)


def test_sidecar_must_name_the_channels(tmp_path):
    path = tmp_path / "t.f64"
    np.zeros(4).tofile(path)
    write_json(path.with_suffix(".json"), {"sample_rate": 1e8})

    with pytest.raises(FileProcessingError, match="missing 'channels'"):
        read_traces(path)


def test_block_files_and_sidecar(tmp_path):
    estimate = block()
    written = write_cov_block(tmp_path / "cov_block_xp.csv", estimate, "abc", exact=np.zeros((3, 3)))

    names = sorted(path.name for path in written)
    assert names == [
        "cov_block_xp.csv",
        "cov_block_xp.json",
        "cov_block_xp_exact.csv",
        "cov_block_xp_stderr.csv",
    ]
    frame = pd.read_csv(tmp_path / "cov_block_xp.csv")
    assert list(frame.columns) == ["probe_freq_hz", "200000", "400000", "600000"]
    assert frame.iloc[1, 1:].tolist() == [3.0, 4.0, 5.0]
    sidecar = json.loads((tmp_path / "cov_block_xp.json").read_text())
    assert sidecar["config_hash"] == "abc"
    assert sidecar["n_segments"] == 400
    assert sidecar["rows"] == "probe"


def test_block_without_exact_values(tmp_path):
    written = write_cov_block(tmp_path / "block.csv", block(), "abc")

    assert len(written) == 3
    assert not (tmp_path / "block_exact.csv").exists()


def test_failed_write_leaves_nothing_behind(tmp_path):
    target = tmp_path / "out.txt"
    target.write_text("old", encoding="utf-8")

    def explode(tmp):
        tmp.write_text("partial", encoding="utf-8")
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError, match="boom"):
        atomic_write(target, explode)

    assert target.read_text(encoding="utf-8") == "old"
    assert [path.name for path in tmp_path.iterdir()] == ["out.txt"]


def test_covariance_table_is_labelled():
    grid = ModeGrid(n_bins=1)
    frame = covariance_frame(vacuum_cov(grid))

    assert list(frame["quadrature"]) == grid.labels()
    assert frame.shape == (grid.dim, grid.dim + 1)
