"""CSV tables with declared schemas and SVG figures rendered from them."""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Sequence

import numpy as np

SCHEMAS: dict[str, tuple[str, ...]] = {
    "conjecture1": ("epoch", "corr_Gt_S", "corr_Gt_GSG"),
    "velocity": ("epoch", "train_acc_G", "train_acc_flip", "velocity_G", "velocity_flip"),
    "spectrum-labels": ("model", "kind", "eig_index", "seed", "train_acc", "test_acc"),
    "sbh": ("eig_index", "seed", "linear_reliance", "nonlinear_acc", "test_acc"),
    "prune-features": ("method", "k", "k_matched", "seed", "test_acc"),
    "prune-samples": ("fraction", "mode", "seed", "test_acc"),
    "verify-theorems": ("claim", "analytic", "mc", "tolerance", "passed"),
    "geometry-heatmap": ("i", "j", "value"),
}


class SchemaError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if not math.isfinite(f):
            raise ValueError(f"refusing to write non-finite value {f}")
        return repr(f)
    return str(v)


def csv_bytes(header: Sequence[str], rows: Sequence[Sequence]) -> bytes:
    if len(rows) == 0:
        raise SchemaError("refusing to write a table without data rows")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise SchemaError(f"row has {len(row)} fields, header has {len(header)}")
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue().encode("ascii")


def write_table(path, schema: str, rows: Sequence[Sequence]) -> Path:
    header = SCHEMAS[schema]
    data = csv_bytes(header, rows)  # validate everything before touching disk
    path = Path(path)
    path.write_bytes(data)
    return path


def read_table(path, schema: str | None = None) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="ascii")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    if schema is not None and tuple(header) != SCHEMAS[schema]:
        raise SchemaError(f"{path}: header {header} does not match schema {schema}")
    if not body:
        raise SchemaError(f"{path} has no data rows")
    return header, body


def _column(header, body, name, cast=float):
    i = header.index(name)
    return [cast(r[i]) for r in body]


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "gih"
    plt.rcParams["svg.fonttype"] = "path"
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    return path


LINE_LABELS = {
    "corr_Gt_S": "Corr(G^t,S)",
    "corr_Gt_GSG": "Corr(G^t,GSG)",
    "velocity_G": "velocity, G data",
    "velocity_flip": "velocity, flip(G) data",
    "train_acc_G": "train acc, G data",
    "train_acc_flip": "train acc, flip(G) data",
}


def line_chart(csv_path, schema: str, x: str, series: Sequence[str], out_path, title: str = "",
               ylabel: str = "") -> Path:
    header, body = read_table(csv_path, schema)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    xs = _column(header, body, x)
    for s in series:
        ax.plot(xs, _column(header, body, s), marker="o", ms=3, label=LINE_LABELS.get(s, s))
    ax.set_xlabel(x)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = _save(fig, out_path)
    plt.close(fig)
    return path


def grouped_means(csv_path, schema: str, x: str, y: str, group: Sequence[str], out_path, title: str = "") -> Path:
    """Mean of ``y`` against ``x`` with one line per distinct ``group`` tuple."""
    header, body = read_table(csv_path, schema)
    xi, yi = header.index(x), header.index(y)
    gi = [header.index(g) for g in group]
    lines: dict[tuple, dict[float, list[float]]] = {}
    for r in body:
        key = tuple(r[i] for i in gi)
        lines.setdefault(key, {}).setdefault(float(r[xi]), []).append(float(r[yi]))
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for key, pts in lines.items():
        xs = sorted(pts)
        ax.plot(xs, [np.mean(pts[v]) for v in xs], marker="o", ms=3, label=" ".join(key) or y)
    ax.set_xlabel(x)
    ax.set_ylabel(y)
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    path = _save(fig, out_path)
    plt.close(fig)
    return path


def heatmap(matrix, out_path, title: str = "") -> Path:
    """Diverging heatmap with a colour scale symmetric about zero."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.size == 0:
        raise ValueError("empty matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    vmax = float(np.max(np.abs(a))) or 1.0
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4))
    im = ax.imshow(a, cmap="RdBu_r", vmin=-vmax, vmax=vmax, interpolation="nearest")
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    path = _save(fig, out_path)
    plt.close(fig)
    return path


def heatmap_from_csv(csv_path, out_path, title: str = "") -> Path:
    header, body = read_table(csv_path, "geometry-heatmap")
    i = _column(header, body, "i", int)
    j = _column(header, body, "j", int)
    v = _column(header, body, "value")
    a = np.zeros((max(i) + 1, max(j) + 1))
    a[i, j] = v
    return heatmap(a, out_path, title)


def render_report(csv_path, schema: str, out_dir) -> list[Path]:
    """Render the standard figure(s) for one experiment table."""
    out_dir = Path(out_dir)
    stem = Path(csv_path).stem
    if schema == "conjecture1":
        return [line_chart(csv_path, schema, "epoch", ["corr_Gt_S", "corr_Gt_GSG"], out_dir / f"{stem}.svg",
                           "Geometry vs data", "correlation")]
    if schema == "velocity":
        return [
            line_chart(csv_path, schema, "epoch", ["velocity_G", "velocity_flip"], out_dir / f"{stem}.svg",
                       "Geometric velocity", "1 - Corr(G^t, G^(t-1))"),
            line_chart(csv_path, schema, "epoch", ["train_acc_G", "train_acc_flip"],
                       out_dir / f"{stem}_acc.svg", "Train accuracy", "accuracy"),
        ]
    if schema == "spectrum-labels":
        return [grouped_means(csv_path, schema, "eig_index", "test_acc", ["model", "kind"], out_dir / f"{stem}.svg",
                              "Test accuracy vs eigenvector index")]
    if schema == "sbh":
        return [
            grouped_means(csv_path, schema, "eig_index", "linear_reliance", [], out_dir / f"{stem}.svg",
                          "Reliance on the linear feature"),
            grouped_means(csv_path, schema, "eig_index", "nonlinear_acc", [], out_dir / f"{stem}_nonlinear.svg",
                          "Accuracy from the non-linear feature"),
        ]
    if schema == "prune-features":
        return [grouped_means(csv_path, schema, "k", "test_acc", ["method"], out_dir / f"{stem}.svg",
                              "Feature elimination")]
    if schema == "prune-samples":
        return [grouped_means(csv_path, schema, "fraction", "test_acc", ["mode"], out_dir / f"{stem}.svg",
                              "Sample pruning")]
    if schema == "geometry-heatmap":
        return [heatmap_from_csv(csv_path, out_dir / f"{stem}.svg", "Average geometry")]
    if schema == "verify-theorems":
        read_table(csv_path, schema)
        return []
    raise SchemaError(f"no figure mapping for schema {schema!r}")
