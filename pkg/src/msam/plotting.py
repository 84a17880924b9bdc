"""Raster figures of solved maps via matplotlib (Agg backend, no display needed)."""

from __future__ import annotations

import os
import tempfile

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from msam.io import COLORS  # noqa: E402


def render_png(layers, path, title: str | None = None, dpi: int = 120) -> None:
    """Same layer format as :func:`msam.io.render_svg`; first layer's landmarks as 'o', the rest as '*'."""
    layers = list(layers)
    if not layers:
        raise ValueError("render_png needs at least one layer")
    fig, ax = plt.subplots(figsize=(7, 6))
    try:
        for i, (label, traj, lms) in enumerate(layers):
            color = COLORS[i % len(COLORS)]
            traj = np.asarray(traj, dtype=float)
            if traj.size:
                traj = np.atleast_2d(traj)
                ax.plot(traj[:, 0], traj[:, 1], "-", color=color, lw=1.2, label=label)
            if lms:
                pts = np.array([lms[t] for t in sorted(lms)], dtype=float)
                ax.plot(pts[:, 0], pts[:, 1], "o" if i == 0 else "*", color=color, ms=6,
                        mfc="none" if i == 0 else color, ls="none")
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.grid(True, lw=0.3)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="best", fontsize=8)
        if title:
            ax.set_title(title)
        # write next to the target and rename, like every other output
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".png")
        os.close(fd)
        try:
            fig.savefig(tmp, dpi=dpi, format="png", metadata={"Software": None})
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    finally:
        plt.close(fig)
