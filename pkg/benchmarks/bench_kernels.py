"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the same inputs in both backends; the table reports the
best wall time, the speed-up and the largest disagreement between the two.
"""
import argparse
import json
import sys
import time

import numpy as np

from cpms._kernels import available_backends, get_backend
from cpms.complex_monotone import catalog


def _best(fn, repeat):
    out = None
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(rng):
    cat = catalog()
    beta = cat["modulus_rational"]
    pp = cat["power_phase_2"]
    z1 = rng.standard_normal(20000) + 1j * rng.standard_normal(20000)
    z2 = beta(z1) + 0.3 * (rng.standard_normal(20000) + 1j * rng.standard_normal(20000))
    a = rng.uniform(0.1, 10.0, 20000)
    w = 3 * (rng.standard_normal(20000) + 1j * rng.standard_normal(20000))
    cost = rng.random((120, 120))
    vals = np.exp(-np.linspace(-3, 3, 4001) ** 2) + 0j
    pts = rng.uniform(-2.9, 2.9, 200000)
    return {
        "fitzpatrick (20k, rational)": lambda b: b.fitzpatrick(beta.profile, z1, z2)[0],
        "resolvent (20k, power_phase p=2)": lambda b: b.resolvent(pp.profile, a, w)[0],
        "hungarian (120x120)": lambda b: b.hungarian(cost),
        "quintic interpolation (200k)": lambda b: b.interp_quintic(vals, -3.0, 6.0 / 4000, pts),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)

    names = available_backends()
    if "compiled" not in names:
        print("compiled kernels are not built; only the fallback is timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    results = []
    print(f"{'kernel':34s} {'python [s]':>11s} {'compiled [s]':>13s} {'speed-up':>9s} {'max diff':>10s}")
    for name, fn in cases(rng).items():
        row = {"kernel": name}
        outs = {}
        for b in names:
            t, outs[b] = _best(lambda: fn(get_backend(b)), args.repeat)
            row[b] = t
        if len(outs) == 2:
            x, y = (np.asarray(outs[k]) for k in ("python", "compiled"))
            if x.dtype.kind in "iu":
                row["max_diff"] = float(np.count_nonzero(x != y))
            else:
                ok = np.isfinite(x) & np.isfinite(y)
                row["max_diff"] = float(np.max(np.abs(x[ok] - y[ok]), initial=0.0))
            row["speedup"] = row["python"] / row["compiled"]
        results.append(row)
        print(f"{name:34s} {row['python']:11.4f} {row.get('compiled', float('nan')):13.4f} "
              f"{row.get('speedup', float('nan')):9.1f} {row.get('max_diff', float('nan')):10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
