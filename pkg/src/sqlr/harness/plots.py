"""SVG figures rebuilt from a run directory's raw outputs. Never writes data files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import bundle_from_dir  # noqa: E402

# Fixed metadata keeps the SVG bytes stable across runs.
_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)
    return path


def _step_cdf(ax, cdf: dict, label: str, scale: float = 1.0) -> None:
    if cdf["x"]:
        ax.step(np.asarray(cdf["x"]) * scale, cdf["p"], where="post", label=label)


def render_run(run_dir: Path) -> list[Path]:
    run_dir = Path(run_dir)
    b = bundle_from_dir(run_dir)
    out = run_dir / "plots"
    out.mkdir(exist_ok=True)
    written = []

    s = b["blocking_series"]
    minutes = np.asarray(s["start_s"]) / 60
    fig, ax1 = plt.subplots(figsize=(8, 3.5))
    ax1.plot(minutes, s["rate"], lw=0.6, alpha=0.5, label="blocking (2 min bins)")
    ax1.plot(minutes, s["moving_average"], lw=1.5, label="moving average (30)")
    ax1.set_xlabel("time (min)")
    ax1.set_ylabel("blocking rate")
    ax2 = ax1.twinx()
    ax2.step(minutes, b["vm_series"]["mean_K"], where="post", color="k", lw=1, label="VMs")
    ax2.set_ylabel("VMs")
    ax1.legend(loc="upper left", fontsize=8)
    ax1.set_title(b["name"])
    written.append(_save(fig, out / "blocking_series.svg"))

    fig, (a, c) = plt.subplots(1, 2, figsize=(8, 3.5))
    _step_cdf(a, b["blocking_cdf"], b["name"])
    a.set_xlabel("blocking rate per 2 min bin")
    a.set_ylabel("CDF")
    _step_cdf(c, b["service_cdf"], b["name"], scale=1e6)
    c.axvline(1e6 * _r_sla(run_dir), color="r", ls="--", lw=0.8)
    c.set_xlabel("service time per iteration (µs)")
    written.append(_save(fig, out / "cdfs.svg"))

    hm = b["heatmap"]
    for key in ("frequency", "severity"):
        grid = np.array([[np.nan if v is None else v for v in row] for row in hm[key]], dtype=float)
        if grid.size == 0:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(hm["k"])), hm["k"])
        ax.set_yticks(range(len(hm["load_upper"])), [f"<{u}" for u in hm["load_upper"]])
        ax.set_xlabel("VMs")
        ax.set_ylabel("offered load (req/min)")
        ax.set_title(f"soft blocking {key}")
        fig.colorbar(im, ax=ax)
        written.append(_save(fig, out / f"heatmap_{key}.svg"))
    return written


def _r_sla(run_dir: Path) -> float:
    import json

    with open(run_dir / "config.json") as fh:
        return float(json.load(fh)["r_sla"])


def render_comparison(run_dirs: list[Path], out: Path) -> list[Path]:
    bundles = [bundle_from_dir(d) for d in run_dirs]
    out = Path(out)
    fig, (a, c) = plt.subplots(1, 2, figsize=(9, 3.5))
    for b in bundles:
        _step_cdf(a, b["blocking_cdf"], b["name"])
        _step_cdf(c, b["service_cdf"], b["name"], scale=1e6)
    a.set_xlabel("blocking rate per 2 min bin")
    a.set_ylabel("CDF")
    c.set_xlabel("service time per iteration (µs)")
    a.legend(fontsize=7)
    p1 = _save(fig, out / "compare_cdfs.svg")

    fig, ax = plt.subplots(figsize=(8, 3.5))
    for b in bundles:
        k = b["vm_series"]["mean_K"]
        ax.step(np.arange(len(k)) * b["vm_series"]["bin_s"] / 60, k, where="post", label=b["name"])
    ax.set_xlabel("time (min)")
    ax.set_ylabel("VMs")
    ax.legend(fontsize=7)
    p2 = _save(fig, out / "compare_vms.svg")
    return [p1, p2]
