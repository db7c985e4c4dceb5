"""Compiled vs pure-Python kernels: association, interference and a full trial.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit
import types

import numpy as np

from smallcell import _pykernels, sim
from smallcell.coeffs import ChannelParams
from smallcell.metrics import DeploymentParams

try:
    from smallcell import _ckernels
except ImportError:
    _ckernels = None


def layout(nb, nu, side, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.uniform(0, side, nb), rng.uniform(0, side, nb),
            rng.uniform(0, side, nu), rng.uniform(0, side, nu))


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_backend(mod, repeat):
    side = 2000.0
    bx, by, ux, uy = layout(4000, 4000, side)
    active = (np.random.default_rng(1).random(len(bx)) < 0.6).astype(np.uint8)
    assoc = best_ms(lambda: mod.nearest_station(bx, by, ux, uy, side, side), repeat)
    interf = best_ms(lambda: mod.interference_pathloss(bx, by, active, 0, 1000.0, 1000.0,
                                                       side, side, 4.0), repeat)

    # One full trial at lambda_b = 1e-3, lambda_u = 1e-3 on a 2 km window.
    cfg = sim.SimConfig(ChannelParams(4.0, 1.0), DeploymentParams(1e-3, 1e-3),
                        window_side=side, trials=1, seed=0)
    saved = sim._kernels
    sim._kernels = types.SimpleNamespace(nearest_station=mod.nearest_station,
                                         interference_pathloss=mod.interference_pathloss)
    try:
        rng = sim.batch_rng(0, 0)

        def trial():
            real = sim.draw_realization(cfg, rng)
            sim.run_trial(real, sim.associate_and_activate(real), rng, cfg)

        full = best_ms(trial, repeat)
    finally:
        sim._kernels = saved
    return assoc, interf, full


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = [("python", _pykernels)]
    if _ckernels is not None:
        backends.insert(0, ("cython", _ckernels))
    else:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'backend':<8} {'assoc 4000x4000 [ms]':>22} {'interference [ms]':>18} "
          f"{'full trial [ms]':>16}")
    results = {}
    for name, mod in backends:
        results[name] = bench_backend(mod, args.repeat)
        a, i, f = results[name]
        print(f"{name:<8} {a:>22.3f} {i:>18.3f} {f:>16.3f}")
    if len(results) == 2:
        ratios = [p / c for p, c in zip(results["python"], results["cython"])]
        print("speedup  " + "  ".join(f"{r:.1f}x" for r in ratios))


if __name__ == "__main__":
    main()
