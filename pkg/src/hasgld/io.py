"""On-disk formats: trace CSV + JSON sidecar, dataset CSV + JSON metadata.

Floats are written with ``repr`` (shortest round-trip form), so a reloaded
trace or dataset is bit-identical to the one in memory.
"""
import csv
import json
from pathlib import Path

import numpy as np

from .targets import MlpDataset, RegressionDataset

__all__ = [
    "write_json",
    "read_json",
    "write_trace",
    "read_trace",
    "export_regression_data",
    "import_regression_data",
    "export_mlp_data",
    "import_mlp_data",
]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        # JSON has no inf/nan; keep them readable and reversible
        return repr(obj)
    return obj


def write_json(path, obj):
    """Write ``obj`` as sorted, indented JSON (stable bytes for equal input)."""
    text = json.dumps(_plain(obj), indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def _write_matrix(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v) for v in row])


def _read_matrix(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return rows[0], body.reshape(len(rows) - 1, len(rows[0]))


def write_trace(path, trace):
    """Write ``trace.samples`` to ``path`` (CSV) and metadata to ``path`` + ``.json``.

    CSV columns are the step index followed by one column per coordinate.
    """
    path = Path(path)
    d = trace.samples.shape[1] if trace.samples.ndim == 2 else trace.posterior_mean.size
    header = ["step"] + [f"beta_{j}" for j in range(d)]
    rows = ([int(s)] + list(x) for s, x in zip(trace.steps, trace.samples))
    _write_matrix(path, header, rows)
    write_json(path.with_suffix(path.suffix + ".json"), {
        "config": trace.config,
        "seed": trace.seed,
        "wall_time": trace.wall_time,
        "n_samples": int(trace.samples.shape[0]),
        "diagnostics": trace.diagnostics_summary(),
    })


def read_trace(path):
    """Return ``(steps, samples)`` from a trace CSV."""
    header, body = _read_matrix(path)
    if header[0] != "step":
        raise ValueError(f"{path}: not a trace file (first column {header[0]!r})")
    return body[:, 0].astype(np.int64), body[:, 1:]


def _export_xy(prefix, X, y, X_test, y_test, meta):
    prefix = Path(prefix)
    for tag, A, b in (("train", X, y), ("test", X_test, y_test)):
        if A is None or len(A) == 0:
            continue
        b = np.asarray(b).reshape(len(A), -1)
        header = [f"x{j}" for j in range(A.shape[1])] + [f"y{j}" for j in range(b.shape[1])]
        _write_matrix(f"{prefix}_{tag}.csv", header, np.hstack([A, b]))
    write_json(f"{prefix}.json", meta)


def _import_xy(prefix, tag):
    header, body = _read_matrix(f"{prefix}_{tag}.csv")
    n_x = sum(h.startswith("x") for h in header)
    return body[:, :n_x], body[:, n_x:]


def export_regression_data(data, prefix):
    """Write ``<prefix>_train.csv``, ``<prefix>_test.csv`` and ``<prefix>.json``."""
    _export_xy(prefix, data.X, data.y, data.X_test, data.y_test, {
        "kind": "regression", "seed": data.seed, "beta_true": data.beta_true,
        "noise_var": data.noise_var,
    })


def import_regression_data(prefix):
    meta = read_json(f"{prefix}.json")
    X, y = _import_xy(prefix, "train")
    X_test, y_test = _import_xy(prefix, "test") if Path(f"{prefix}_test.csv").exists() else (None, None)
    return RegressionDataset(
        X=X, y=y[:, 0], beta_true=np.asarray(meta["beta_true"], dtype=float),
        noise_var=float(meta["noise_var"]), seed=meta["seed"],
        X_test=X_test, y_test=None if y_test is None else y_test[:, 0],
    )


def export_mlp_data(data, prefix):
    _export_xy(prefix, data.X, data.Y, data.X_test, data.Y_test, {"kind": "mlp", "seed": data.seed})


def import_mlp_data(prefix):
    meta = read_json(f"{prefix}.json")
    X, Y = _import_xy(prefix, "train")
    X_test, Y_test = _import_xy(prefix, "test")
    return MlpDataset(X=X, Y=Y, X_test=X_test, Y_test=Y_test, seed=meta["seed"])
