"""Command-line interface.

Exit codes: 0 success, 2 validation / I/O problems, 3 numerical failure.
``CALIBLESS_NUM_THREADS`` caps the BLAS/FFT thread pools.
"""

import argparse
import contextlib
import logging
import sys
import time

import numpy as np

from . import bench, io, net
from .core import DimensionError, NumericalError
from .dataset import SimConfig, build_dataset
from .metrics import kspace_snr_db, snr_db, sos_image
from .pslr import PslrConfig, pslr_reconstruct
from .train import TrainConfig, TrainingError, train

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("calibless")


def _load_or_default(cls, path, section):
    return io.load_config(cls, path, section) if path else cls()


def cmd_simulate(args):
    cfg = _load_or_default(SimConfig, args.config, "simulate")
    data = build_dataset(cfg)
    io.save_dataset(args.out, data, cfg)
    print(f"wrote {len(data)} sample(s) to {args.out}")


def _samples(data, which):
    return range(len(data)) if which is None else [which]


def cmd_pslr(args):
    cfg = _load_or_default(PslrConfig, args.config, "pslr")
    data, manifest = io.load_dataset(args.data)
    recs, snrs, secs, traces = [], [], [], []
    for i in _samples(data, args.sample):
        t0 = time.perf_counter()
        x, trace = pslr_reconstruct(data.b[i], data.mask[i], cfg)
        secs.append(time.perf_counter() - t0)
        recs.append(x)
        snrs.append(kspace_snr_db(data.kspace[i], x))
        traces.append(trace.to_dict())
    io.write_cgrid(args.out, np.stack(recs))
    if args.report:
        report = io.ReconReport("pslr", snrs, secs, io.config_hash(cfg),
                                manifest.get("seed", 0), {"trace": traces})
        io.write_json(args.report, report.to_dict())
    print(f"pslr: mean SNR {np.mean(snrs):.2f} dB over {len(recs)} sample(s)")


def cmd_train(args):
    cfg = _load_or_default(TrainConfig, args.config, "train")
    data, _ = io.load_dataset(args.dataset)
    params, tlog = train(data, cfg, args.arch)
    io.save_model(args.out, params, cfg, tlog)
    last = tlog.epochs[-1] if tlog.epochs else {}
    print(f"trained {args.arch} network; final train loss {last.get('train_loss')}")


def cmd_recon(args):
    params, manifest = io.load_model(args.model)
    data, dmanifest = io.load_dataset(args.data)
    recs, snrs, secs = [], [], []
    for i in _samples(data, args.sample):
        t0 = time.perf_counter()
        x = net.forward(data.b[i], data.mask[i], params)
        secs.append(time.perf_counter() - t0)
        recs.append(x)
        snrs.append(kspace_snr_db(data.kspace[i], x))
    io.write_cgrid(args.out, np.stack(recs))
    if args.report:
        report = io.ReconReport(f"network-{manifest['arch']}", snrs, secs,
                                manifest.get("train_config_hash", ""), dmanifest.get("seed", 0))
        io.write_json(args.report, report.to_dict())
    print(f"recon: mean SNR {np.mean(snrs):.2f} dB over {len(recs)} sample(s)")


def _as_images(arr, domain):
    """SOS magnitude images with a leading sample axis."""
    if domain == "image":
        return arr[None] if arr.ndim == 2 else arr
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4:
        raise DimensionError(f"k-space input must be (N, H, W) or (S, N, H, W), got {arr.shape}")
    return sos_image(arr)


def cmd_eval(args):
    ref = io.read_cgrid(args.ref)
    rec = io.read_cgrid(args.rec)
    if ref.shape != rec.shape:
        raise DimensionError(f"shape mismatch: {args.ref} {ref.shape} vs {args.rec} {rec.shape}")
    ref_img = _as_images(ref, args.domain)
    rec_img = _as_images(rec, args.domain)
    snrs = [snr_db(a, b) for a, b in zip(ref_img, rec_img)]
    report = io.ReconReport("eval", snrs, [], io.config_hash({"domain": args.domain}))
    if args.report:
        io.write_json(args.report, report.to_dict())
    print(f"eval: mean SNR {report.mean_snr_db:.2f} dB")


def cmd_bench(args):
    cfg = _load_or_default(PslrConfig, args.pslr, "pslr")
    params, manifest = io.load_model(args.model)
    data, dmanifest = io.load_dataset(args.data)
    if args.samples is not None:
        data = data.subset(np.arange(min(args.samples, len(data))))
    result = bench.benchmark(data, params, cfg, repeats=args.repeats)
    result["config_hash"] = io.config_hash(
        {"pslr": io.config_dict(cfg), "model": manifest.get("train_config_hash", "")})
    result["seed"] = dmanifest.get("seed", 0)
    io.write_json(args.report, result)
    print(f"bench: PSLR {result['pslr']['mean_snr_db']:.2f} dB / "
          f"{result['pslr']['mean_seconds']:.3f} s, network "
          f"{result['network']['mean_snr_db']:.2f} dB / {result['network']['mean_seconds']:.4f} s, "
          f"speedup {result['speedup']:.1f}x")


def build_parser():
    p = argparse.ArgumentParser(prog="calibless", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate phantoms, coils, masks and measurements")
    s.add_argument("--config", help="simulation JSON config (defaults if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("pslr", help="structured low-rank IRLS reconstruction")
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--sample", type=int)
    s.set_defaults(func=cmd_pslr)

    s = sub.add_parser("train", help="train an unrolled network")
    s.add_argument("--dataset", required=True)
    s.add_argument("--arch", choices=["kspace", "hybrid"], default="kspace")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("recon", help="network inference")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--sample", type=int)
    s.set_defaults(func=cmd_recon)

    s = sub.add_parser("eval", help="SNR of SOS images")
    s.add_argument("--ref", required=True)
    s.add_argument("--rec", required=True)
    s.add_argument("--report")
    s.add_argument("--domain", choices=["kspace", "image"], default="kspace")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="PSLR vs network SNR and run time")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--pslr")
    s.add_argument("--report", required=True)
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--samples", type=int)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        limit = io.thread_limit()
        ctx = contextlib.nullcontext()
        if limit is not None:
            from threadpoolctl import threadpool_limits
            ctx = threadpool_limits(limits=limit)
        with ctx:
            args.func(args)
    except (NumericalError, TrainingError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (io.ConfigError, io.CgridError, DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
