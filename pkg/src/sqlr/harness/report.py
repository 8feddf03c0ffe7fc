"""Metrics over raw run outputs: blocking series and CDFs, VM-hours, soft-blocking heatmaps.

Everything here reads the CSV files a run wrote, so a bundle can always be
rebuilt from disk.
"""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from ..cloudsim import LedgerRow, read_ledger

BLOCKING_BIN_S = 120
MA_WINDOW = 30
MIN_RESPONSES = 30
LOAD_BIN = 10  # requests per minute


def moving_average(series: Sequence[float], window: int = MA_WINDOW) -> list[float]:
    """Trailing mean; the first ``window - 1`` outputs average what is available."""
    if window < 1:
        raise ValueError("window must be >= 1")
    out, acc = [], 0.0
    values = list(series)
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def blocking_series(
    ledger: Sequence[LedgerRow], duration_s: int, bin_s: int = BLOCKING_BIN_S
) -> dict:
    nbins = max(1, -(-duration_s // bin_s))
    arrived = [0] * nbins
    blocked = [0] * nbins
    for r in ledger:
        b = min(r.arrival_s // bin_s, nbins - 1)
        arrived[b] += 1
        blocked[b] += r.outcome == "blocked"
    rate = [b / a if a else 0.0 for a, b in zip(arrived, blocked)]
    return {
        "bin_s": bin_s,
        "start_s": [i * bin_s for i in range(nbins)],
        "arrived": arrived,
        "blocked": blocked,
        "rate": rate,
        "empty": [a == 0 for a in arrived],
        "moving_average": moving_average(rate),
    }


def empirical_cdf(values: Sequence[float]) -> dict:
    """Distinct values with the fraction of samples <= each."""
    if len(values) == 0:
        return {"x": [], "p": []}
    x, counts = np.unique(np.asarray(values, dtype=float), return_counts=True)
    p = np.cumsum(counts) / counts.sum()
    p[-1] = 1.0
    return {"x": x.tolist(), "p": p.tolist()}


def per_op_times(ledger: Sequence[LedgerRow]) -> list[float]:
    return [
        r.service_time_s / r.iterations
        for r in ledger
        if r.outcome == "completed" and r.service_time_s is not None
    ]


def offered_per_minute(ledger: Sequence[LedgerRow]) -> Counter:
    return Counter(r.arrival_s // 60 for r in ledger)


def soft_blocking_heatmap(
    ledger: Sequence[LedgerRow],
    k_series: Sequence[int],
    r_sla: float,
    v_max: int,
    min_responses: int = MIN_RESPONSES,
    load_bin: int = LOAD_BIN,
) -> dict:
    """Soft blocking per (VM count, offered-load bin).

    frequency: share of completed responses with per-op time above r_sla.
    severity: mean excess over r_sla among those responses.
    Cells with fewer than ``min_responses`` responses are reported as None.
    """
    load = offered_per_minute(ledger)
    cells: dict[tuple[int, int], list[float]] = defaultdict(list)
    for r in ledger:
        if r.outcome != "completed" or r.service_time_s is None:
            continue
        k = k_series[r.arrival_s] if r.arrival_s < len(k_series) else k_series[-1]
        band = load[r.arrival_s // 60] // load_bin
        cells[(k, band)].append(r.service_time_s / r.iterations)
    top_band = max((b for _, b in cells), default=0)
    ks = list(range(1, v_max + 1))
    bands = list(range(top_band + 1))
    freq = [[None] * len(ks) for _ in bands]
    sev = [[None] * len(ks) for _ in bands]
    count = [[0] * len(ks) for _ in bands]
    for (k, b), times in cells.items():
        if not 1 <= k <= v_max:
            continue
        count[b][k - 1] = len(times)
        if len(times) < min_responses:
            continue
        over = [t - r_sla for t in times if t > r_sla]
        freq[b][k - 1] = len(over) / len(times)
        sev[b][k - 1] = sum(over) / len(over) if over else None
    return {
        "k": ks,
        "load_upper": [(b + 1) * load_bin for b in bands],
        "frequency": freq,
        "severity": sev,
        "responses": count,
    }


# -- readers -------------------------------------------------------------------


def read_ticks(path: Path) -> dict[str, list]:
    cols: dict[str, list] = defaultdict(list)
    with open(path, newline="") as fh:
        for d in csv.DictReader(fh):
            cols["t"].append(int(d["t"]))
            cols["K"].append(int(d["K"]))
            cols["active"].append(int(d["active"]))
            cols["util_sum"].append(float(d["util_sum"]))
            cols["arrived"].append(int(d["arrived"]))
            cols["blocked"].append(int(d["blocked"]))
    return dict(cols)


def read_vms(path: Path) -> list[tuple[int, int, int]]:
    with open(path, newline="") as fh:
        return [(int(d["vm_id"]), int(d["start_s"]), int(d["end_s"])) for d in csv.DictReader(fh)]


def vm_hours_from_ticks(k_series: Sequence[int]) -> float:
    return sum(k_series) / 3600.0


def vm_hours_from_lifetimes(lifetimes: Sequence[tuple[int, int, int]]) -> float:
    return sum(end - start for _, start, end in lifetimes) / 3600.0


def slot_stats(profile: list[dict], ticks: dict[str, list]) -> list[dict]:
    out, start = [], 0
    K, arrived, blocked = ticks["K"], ticks["arrived"], ticks["blocked"]
    for slot in profile:
        end = start + slot["duration_s"]
        a = sum(arrived[start:end])
        b = sum(blocked[start:end])
        span = K[start:end]
        out.append(
            {
                "start_s": start,
                "end_s": end,
                "omega_max_s": slot["omega_max_s"],
                "multiplier": slot["multiplier"],
                "offered_rate": slot["multiplier"] * 2.0 / slot["omega_max_s"]
                if slot["omega_max_s"]
                else float(slot["multiplier"]),
                "mean_K": sum(span) / len(span) if span else 0.0,
                "arrived": a,
                "blocked": b,
                "blocking": b / a if a else 0.0,
            }
        )
        start = end
    return out


def low_traffic_slots(slots: list[dict]) -> list[dict]:
    lowest = min(s["offered_rate"] for s in slots)
    return [s for s in slots if s["offered_rate"] == lowest]


def bundle_from_dir(out: Path) -> dict:
    """Rebuild the full report bundle from the CSV/JSON files in ``out``."""
    out = Path(out)
    with open(out / "config.json") as fh:
        cfg = json.load(fh)
    with open(out / "profile.json") as fh:
        profile = json.load(fh)
    ledger = read_ledger(out / "ledger.csv")
    ticks = read_ticks(out / "ticks.csv")
    vms = read_vms(out / "vms.csv")
    duration = len(ticks["t"])
    r_sla = cfg["r_sla"]

    arrived = len(ledger)
    outcomes = Counter(r.outcome for r in ledger)
    per_op = per_op_times(ledger)
    series = blocking_series(ledger, duration)
    rates = [r for r, e in zip(series["rate"], series["empty"]) if not e]
    k_bins = [
        float(np.mean(ticks["K"][i : i + BLOCKING_BIN_S])) for i in range(0, duration, BLOCKING_BIN_S)
    ]
    slots = slot_stats(profile, ticks)
    low = low_traffic_slots(slots)
    low_ticks = sum(s["end_s"] - s["start_s"] for s in low)
    low_arr = sum(s["arrived"] for s in low)
    return {
        "name": cfg.get("name") or cfg["scheme"],
        "scheme": cfg["scheme"],
        "seed": cfg["seed"],
        "duration_s": duration,
        "totals": {
            "arrived": arrived,
            "admitted": arrived - outcomes["blocked"],
            "blocked": outcomes["blocked"],
            "completed": outcomes["completed"],
            "inflight": outcomes["inflight"],
            "blocking": outcomes["blocked"] / arrived if arrived else 0.0,
            "within_sla": sum(t <= r_sla for t in per_op) / len(per_op) if per_op else 1.0,
        },
        "vm_hours": vm_hours_from_ticks(ticks["K"]),
        "vm_hours_lifetime": vm_hours_from_lifetimes(vms),
        "mean_K": sum(ticks["K"]) / duration if duration else 0.0,
        "blocking_series": series,
        "blocking_cdf": empirical_cdf(rates),
        "service_cdf": empirical_cdf(per_op),
        "vm_series": {"bin_s": BLOCKING_BIN_S, "mean_K": k_bins},
        "heatmap": soft_blocking_heatmap(ledger, ticks["K"], r_sla, cfg["v_max"]),
        "slots": slots,
        "low_traffic": {
            "mean_K": sum(s["mean_K"] * (s["end_s"] - s["start_s"]) for s in low) / low_ticks,
            "blocking": sum(s["blocked"] for s in low) / low_arr if low_arr else 0.0,
        },
    }


def summary_row(bundle: dict, reference_vm_hours: float | None) -> dict:
    saving = None
    if reference_vm_hours:
        saving = 1.0 - bundle["vm_hours"] / reference_vm_hours
    return {
        "scheme": bundle["name"],
        "vm_hours": round(bundle["vm_hours"], 4),
        "saving_vs_static10": None if saving is None else round(saving, 4),
        "blocking": round(bundle["totals"]["blocking"], 5),
        "within_sla": round(bundle["totals"]["within_sla"], 4),
        "low_traffic_mean_K": round(bundle["low_traffic"]["mean_K"], 3),
        "low_traffic_blocking": round(bundle["low_traffic"]["blocking"], 5),
    }
