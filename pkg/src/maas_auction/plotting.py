"""Figure rendering for run summaries. matplotlib is imported lazily (extra: plot)."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False,
                         "svg.hashsalt": "maas-auction", "figure.figsize": (6.4, 3.6)})
    return plt


def _series(values: Sequence) -> tuple[list[int], list[float]]:
    xs, ys = [], []
    for t, v in enumerate(values):
        if v is not None:
            xs.append(t)
            ys.append(float(v))
    return xs, ys


def plot_summary(summary: dict, out_dir: str | Path, fmt: str = "png") -> list[Path]:
    """One figure per per-slot series of a run summary."""
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = [
        ("welfare_series", "social welfare ($)"),
        ("price_series", "unit price p_t"),
        ("availability_series", "available resources A_t"),
        ("acceptance_series", "acceptance ratio"),
    ]
    paths = []
    for key, label in panels:
        xs, ys = _series(summary.get(key, []))
        fig, ax = plt.subplots()
        ax.plot(xs, ys, lw=1.0, marker="." if len(xs) < 60 else None)
        ax.set_xlabel("time slot")
        ax.set_ylabel(label)
        fig.tight_layout()
        path = out_dir / f"{key}.{fmt}"
        fig.savefig(path, metadata=_metadata(fmt))
        plt.close(fig)
        paths.append(path)
    return paths


def plot_compare(rows: Sequence[dict], out_dir: str | Path, fmt: str = "png") -> Path:
    """Bar chart of welfare per configuration."""
    plt = _pyplot()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots()
    labels = [r["configuration"] for r in rows]
    ax.bar(range(len(rows)), [r["welfare"] for r in rows], color="0.4")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=15, ha="right")
    ax.set_ylabel("social welfare ($)")
    fig.tight_layout()
    path = out_dir / f"compare.{fmt}"
    fig.savefig(path, metadata=_metadata(fmt))
    plt.close(fig)
    return path


def _metadata(fmt: str) -> dict:
    # drop timestamps so identical runs write identical files
    if fmt == "png":
        return {"Software": None}
    if fmt in ("svg", "pdf"):
        return {"Date": None}
    return {}
