"""Side-by-side SNR and wall-clock comparison of PSLR and a trained network."""

import statistics
import time

import numpy as np

from . import net
from .metrics import kspace_snr_db
from .pslr import PslrConfig, pslr_reconstruct


def timed(fn, repeats):
    """Run ``fn`` ``repeats`` times; return (last result, list of seconds)."""
    times = []
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, times


def run_pslr(data, cfg, repeats=1):
    recs, runs = [], []
    for i in range(len(data)):
        (x, _), t = timed(lambda: pslr_reconstruct(data.b[i], data.mask[i], cfg), repeats)
        recs.append(x)
        runs.append(t)
    return np.stack(recs), runs


def run_network(data, params, repeats=1):
    recs, runs = [], []
    for i in range(len(data)):
        x, t = timed(lambda: net.forward(data.b[i], data.mask[i], params), repeats)
        recs.append(x)
        runs.append(t)
    return np.stack(recs), runs


def method_summary(name, data, recs, runs):
    snr = [kspace_snr_db(data.kspace[i], recs[i]) for i in range(len(data))]
    med = [statistics.median(r) for r in runs]
    return {
        "method": name,
        "snr_db": snr,
        "mean_snr_db": float(np.mean(snr)),
        "seconds_runs": runs,
        "seconds_median": med,
        "mean_seconds": float(np.mean(med)),
    }


def benchmark(data, params, pslr_cfg=None, repeats=3):
    """Run both methods on identical inputs; timings cover the reconstruct call only."""
    pslr_cfg = pslr_cfg or PslrConfig()
    zf = [kspace_snr_db(data.kspace[i], data.b[i]) for i in range(len(data))]
    p_recs, p_runs = run_pslr(data, pslr_cfg, repeats)
    n_recs, n_runs = run_network(data, params, repeats)
    arch = "hybrid" if params.hybrid else "kspace"
    pslr = method_summary("pslr", data, p_recs, p_runs)
    network = method_summary(f"network-{arch}", data, n_recs, n_runs)
    return {
        "zero_filled": {"snr_db": zf, "mean_snr_db": float(np.mean(zf))},
        "pslr": pslr,
        "network": network,
        "speedup": pslr["mean_seconds"] / network["mean_seconds"],
        "repeats": repeats,
    }
