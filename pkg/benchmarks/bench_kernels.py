"""Compare the compiled and numpy patch kernels.

Usage::

    python benchmarks/bench_kernels.py [--repeats 50]

Prints median milliseconds per call for each backend and checks that both
produce identical results.
"""

import argparse
import statistics
import time

import numpy as np

from calibless.kernels import backends


def median_ms(fn, repeats):
    fn()  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * statistics.median(times)


def cases(rng):
    x = rng.standard_normal((4, 64, 64)) + 1j * rng.standard_normal((4, 64, 64))
    y = rng.standard_normal((58 * 58, 4 * 49)) + 1j * rng.standard_normal((58 * 58, 4 * 49))
    a64 = rng.standard_normal((16, 4, 64, 64))
    a32 = a64.astype(np.float32)
    cols = rng.standard_normal((16 * 9, 4 * 64 * 64))
    return {
        "hankel_lift 4x64x64 f=7": lambda m: m.hankel_lift(x, 7, 7),
        "hankel_lift_adjoint 4x64x64 f=7": lambda m: m.hankel_lift_adjoint(y, 4, 64, 64, 7, 7),
        "im2col 16x4x64x64 k=3 f64": lambda m: m.im2col(a64, 3),
        "im2col 16x4x64x64 k=3 f32": lambda m: m.im2col(a32, 3),
        "col2im 16x4x64x64 k=3 f64": lambda m: m.col2im(cols, 16, 4, 64, 64, 3),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=50)
    args = ap.parse_args(argv)
    mods = backends()
    if "cython" not in mods:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s}" + "".join(f"{name:>12s}" for name in mods) + "     match")
    for label, fn in cases(rng).items():
        outs = {name: fn(m) for name, m in mods.items()}
        ref = outs["python"]
        match = all(np.array_equal(o, ref) for o in outs.values())
        row = "".join(f"{median_ms(lambda: fn(m), args.repeats):10.3f}ms" for m in mods.values())
        print(f"{label:36s}{row}     {'yes' if match else 'NO'}")


if __name__ == "__main__":
    main()
