"""Timing of the compiled kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--ntrunc 10] [--repeat 3]

Three measurements:

* assembly of the charge-0 sector of the network Liouvillian, once with
  each implementation of the sector Kronecker kernel,
* the 2x2 resolvent kernel on a long frequency grid,
* the direct steady-state solve with METIS and with SuperLU's own
  minimum-degree ordering.
"""
import argparse
import time

import numpy as np

from tmsnet import _kernels, quantum_core
from tmsnet._accel import HAVE_NUMBA
from tmsnet.network import NetworkParams, TruncationConfig, cascaded_liouvillian
from tmsnet.quantum_core import SolverConfig, steady_state


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_assembly(p, trunc, repeat):
    def build():
        return cascaded_liouvillian(p, trunc).sector(0)

    out = {}
    impls = {"numpy": _kernels.kron_sector_coo_numpy}
    if HAVE_NUMBA:
        impls["numba"] = _kernels.kron_sector_coo_numba
    saved = quantum_core.kron_sector_coo
    try:
        for name, fn in impls.items():
            quantum_core.kron_sector_coo = fn
            build()  # compile / warm caches
            out[name] = best_of(build, repeat)
    finally:
        quantum_core.kron_sector_coo = saved
    return out


def bench_resolvent(repeat, n=2_000_000):
    rng = np.random.default_rng(0)
    block = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) - 3 * np.eye(2)
    vblock = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    w = np.linspace(-50, 50, n)
    out = {"numpy": best_of(lambda: _kernels.resolvent_block_numpy(w, block, vblock), repeat)}
    if HAVE_NUMBA:
        _kernels.resolvent_block_numba(w[:10], block, vblock)
        out["numba"] = best_of(lambda: _kernels.resolvent_block_numba(w, block, vblock), repeat)
    return out


def bench_ordering(p, trunc, repeat):
    L = cascaded_liouvillian(p, trunc).sector(0)
    out = {}
    for ordering in ("metis", "mmd"):
        cfg = SolverConfig(ordering=ordering)
        try:
            out[ordering] = best_of(lambda: steady_state(L, cfg), repeat)
        except ImportError:
            out[ordering] = float("nan")
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ntrunc", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    p = NetworkParams.symmetric(0.5, 10.0)
    trunc = TruncationConfig(args.ntrunc)
    rows = cascaded_liouvillian(p, trunc).sector(0).matrix.shape[0]
    print(f"n_trunc={args.ntrunc}, sector rows={rows}, numba available: {HAVE_NUMBA}")
    for title, res in (("sector assembly", bench_assembly(p, trunc, args.repeat)),
                       ("resolvent, 2e6 frequencies", bench_resolvent(args.repeat)),
                       ("direct steady state", bench_ordering(p, trunc, args.repeat))):
        cells = "  ".join(f"{k}: {v * 1e3:9.1f} ms" for k, v in res.items())
        print(f"{title:<28} {cells}")


if __name__ == "__main__":
    main()
