"""Result files: CSV tables, JSON sidecars and binary trace records.

Every file is written to a temporary sibling first and renamed into place, so
an interrupted run never leaves a half-written output behind.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .dsp import CovBlockEstimate, Spectrum
from .errors import FileProcessingError
from .gaussian_core import CovMatrix

PathLike = Union[str, Path]

TRACE_DTYPE = "<f8"
TRACE_SUFFIX = ".f64"
SIDECAR_SUFFIX = ".json"


def atomic_write(path: PathLike, write: Callable[[Path], None]) -> Path:
    """Run ``write`` against a temporary file, then rename it onto ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        os.close(fd)
    except OSError as exc:
        raise FileProcessingError(f"Cannot write to {path.parent}: {exc}") from exc

    tmp = Path(tmp_name)
    try:
        write(tmp)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise FileProcessingError(f"Failed to write {path}: {exc}") from exc
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise
    return path


def write_json(path: PathLike, payload: Mapping[str, Any]) -> Path:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    return atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def write_text(path: PathLike, text: str) -> Path:
    return atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def write_frame(path: PathLike, frame: pd.DataFrame) -> Path:
    return atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.12g"))


def spectrum_frame(spectrum: Spectrum) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "freq_hz": spectrum.freqs,
            "psd_rel_shot": spectrum.psd,
            "stderr": spectrum.stderr,
            "stderr_fixed_shot": spectrum.conditional_stderr,
        }
    )


def block_frame(matrix: np.ndarray, bin_freqs: np.ndarray) -> pd.DataFrame:
    """Square block as a table: one row per probe bin, one column per conjugate bin."""
    labels = [f"{freq:.0f}" for freq in bin_freqs]
    frame = pd.DataFrame(matrix, columns=labels)
    frame.insert(0, "probe_freq_hz", bin_freqs)
    return frame


def covariance_frame(cov: CovMatrix) -> pd.DataFrame:
    labels = cov.grid.labels()
    frame = pd.DataFrame(cov.data, columns=labels)
    frame.insert(0, "quadrature", labels)
    return frame


def write_spectrum(path: PathLike, spectrum: Spectrum) -> Path:
    return write_frame(path, spectrum_frame(spectrum))


def write_cov_block(
    path: PathLike,
    block: CovBlockEstimate,
    config_hash: str,
    exact: Optional[np.ndarray] = None,
) -> Tuple[Path, ...]:
    """Estimate, standard error and (optionally) exact block, plus a JSON sidecar."""
    path = Path(path)
    stem = path.with_suffix("")
    written = [
        write_frame(path, block_frame(block.matrix, block.bin_freqs)),
        write_frame(stem.with_name(f"{stem.name}_stderr.csv"), block_frame(block.stderr, block.bin_freqs)),
    ]
    if exact is not None:
        written.append(write_frame(stem.with_name(f"{stem.name}_exact.csv"), block_frame(exact, block.bin_freqs)))
    sidecar = {
        "bin_freqs_hz": [float(f) for f in block.bin_freqs],
        "component": block.component,
        "n_segments": block.n_segments,
        "config_hash": config_hash,
        "rows": "probe",
        "columns": "conjugate",
    }
    written.append(write_json(path.with_suffix(SIDECAR_SUFFIX), sidecar))
    return tuple(written)


def write_traces(
    path: PathLike,
    channels: Mapping[str, np.ndarray],
    sample_rate: float,
    seed: int,
    transforms: Sequence[str] = (),
) -> Tuple[Path, Path]:
    """Channel-interleaved little-endian float64 samples with a JSON sidecar."""
    path = Path(path)
    names = list(channels)
    lengths = {np.asarray(data).size for data in channels.values()}
    if len(lengths) != 1:
        raise FileProcessingError(f"Trace channels differ in length: {sorted(lengths)}")
    interleaved = np.column_stack([np.asarray(channels[name], dtype=float) for name in names]).astype(TRACE_DTYPE)

    data_path = atomic_write(path, lambda tmp: interleaved.tofile(tmp))
    sidecar = {
        "sample_rate": sample_rate,
        "seed": seed,
        "channels": names,
        "n_samples": int(lengths.pop()),
        "dtype": "float64-le",
        "transforms": list(transforms),
    }
    return data_path, write_json(path.with_suffix(SIDECAR_SUFFIX), sidecar)


def read_traces(path: PathLike) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a trace file written by ``write_traces`` (or any tool using the same layout)."""
    path = Path(path)
    sidecar_path = path.with_suffix(SIDECAR_SUFFIX)
    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
        raw = np.fromfile(path, dtype=TRACE_DTYPE)
    except OSError as exc:
        raise FileProcessingError(f"Cannot read traces {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FileProcessingError(f"Invalid trace sidecar {sidecar_path}: {exc}") from exc

    for key in ("sample_rate", "channels"):
        if key not in meta:
            raise FileProcessingError(f"Trace sidecar {sidecar_path} is missing '{key}'")
    names = list(meta["channels"])
    if not names or raw.size % len(names):
        raise FileProcessingError(f"{path}: {raw.size} values do not split into {len(names)} channels")
    table = raw.reshape(-1, len(names))
    if "n_samples" in meta and table.shape[0] != meta["n_samples"]:
        raise FileProcessingError(f"{path}: expected {meta['n_samples']} samples, found {table.shape[0]}")
    return {name: table[:, i].astype(float) for i, name in enumerate(names)}, meta
