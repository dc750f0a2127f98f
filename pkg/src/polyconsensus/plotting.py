"""Rendered report figures (PNG, SVG or PDF), written reproducibly.

matplotlib is imported lazily so that library users who never ask for a
figure do not pay for it.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exports import CONSENSUS_COLOR, FLAG_COLOR, RATER_PALETTE

FIGURE_FORMATS = ("png", "svg", "pdf")


def _figure(width: float, height: float):
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "polyconsensus"
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure

    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def figure_bytes(fig, fmt: str) -> bytes:
    """Serialize without timestamps or version stamps so reruns are byte-identical."""
    fmt = fmt.lower()
    if fmt not in FIGURE_FORMATS:
        raise ValueError(f"unsupported figure format {fmt!r}; use one of {', '.join(FIGURE_FORMATS)}")
    metadata = {"png": {"Software": None}, "svg": {"Date": None, "Creator": None},
                "pdf": {"CreationDate": None, "Creator": None, "Producer": None}}[fmt]
    buf = io.BytesIO()
    fig.savefig(buf, format=fmt, metadata=metadata)
    return buf.getvalue()


def format_for(path) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    return suffix or "png"


def sigma_profile_figure(t: np.ndarray, sigma: np.ndarray, threshold: float,
                         spans: Sequence[tuple] = (), perimeter: Optional[float] = None):
    """Local spread against arc length, with the threshold and flagged spans shaded."""
    fig = _figure(6.4, 3.2)
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(t, sigma, color=CONSENSUS_COLOR, lw=1.0, label="sigma(t)")
    ax.axhline(threshold, color=FLAG_COLOR, ls="--", lw=0.8, label=f"threshold {threshold:g}")
    for a, b in spans:
        if perimeter is not None and b > perimeter:
            ax.axvspan(a, perimeter, color=FLAG_COLOR, alpha=0.15, lw=0)
            ax.axvspan(0.0, b - perimeter, color=FLAG_COLOR, alpha=0.15, lw=0)
        else:
            ax.axvspan(a, b, color=FLAG_COLOR, alpha=0.15, lw=0)
    ax.set_xlabel("arc length (px)")
    ax.set_ylabel("sigma (px)")
    ax.set_xlim(0, perimeter if perimeter else (t[-1] if len(t) else 1.0))
    ax.set_ylim(bottom=0)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    return fig


def overlay_figure(rater_polygons: Sequence[np.ndarray], consensus: np.ndarray, closed: bool = True,
                   heatmap=None, flagged: Sequence[np.ndarray] = ()):
    """Rater outlines and consensus over an optional spread heatmap (image coordinates, y down)."""
    fig = _figure(5.0, 5.0)
    ax = fig.add_subplot(1, 1, 1)
    if heatmap is not None:
        spec = heatmap.spec
        x0, y0 = spec.x0, spec.y0
        x1 = x0 + spec.width / spec.resolution
        y1 = y0 + spec.height / spec.resolution
        im = ax.imshow(heatmap.values, extent=(x0, x1, y1, y0), cmap="viridis", interpolation="nearest")
        fig.colorbar(im, ax=ax, shrink=0.8, label="rater spread (px)")
    for k, poly in enumerate(rater_polygons):
        loop = np.vstack([poly, poly[:1]])
        ax.plot(loop[:, 0], loop[:, 1], color=RATER_PALETTE[k % len(RATER_PALETTE)], alpha=0.5, lw=1.0)
    c = np.vstack([consensus, consensus[:1]]) if closed else consensus
    ax.plot(c[:, 0], c[:, 1], color=CONSENSUS_COLOR, lw=1.2)
    for seg in flagged:
        ax.plot(seg[:, 0], seg[:, 1], color=FLAG_COLOR, lw=3.0)
    ax.set_aspect("equal")
    if heatmap is None:
        ax.invert_yaxis()
    ax.set_xlabel("x (px)")
    ax.set_ylabel("y (px)")
    fig.tight_layout()
    return fig


def cohort_figure(pre, post, deltas: Sequence[tuple]):
    """Per-image mean distance with one-std bars for both phases, and post minus pre."""
    fig = _figure(7.2, 5.0)
    top = fig.add_subplot(2, 1, 1)
    bottom = fig.add_subplot(2, 1, 2, sharex=top)
    ids = sorted({s.sample_id for s in pre.per_image} | {s.sample_id for s in post.per_image})
    x = np.arange(len(ids))
    for summary, offset, color, label in ((pre, -0.15, "#1f77b4", "pre_qa"), (post, 0.15, "#ff7f0e", "post_qa")):
        by_id = {s.sample_id: s for s in summary.per_image}
        idx = [k for k, sid in enumerate(ids) if sid in by_id]
        means = [by_id[ids[k]].mean for k in idx]
        stds = [by_id[ids[k]].std for k in idx]
        top.errorbar(np.asarray(idx) + offset, means, yerr=stds, fmt="o", ms=3, color=color, label=label, capsize=2)
    top.set_ylabel("mean distance (px)")
    top.legend(fontsize=8)
    delta = dict(deltas)
    values = [delta.get(sid, np.nan) for sid in ids]
    bottom.bar(x, values, color=["#2ca02c" if v < 0 else FLAG_COLOR for v in values])
    bottom.axhline(0.0, color=CONSENSUS_COLOR, lw=0.6)
    bottom.set_ylabel("post - pre (px)")
    bottom.set_xticks(x)
    bottom.set_xticklabels(ids, rotation=90, fontsize=6)
    fig.tight_layout()
    return fig
