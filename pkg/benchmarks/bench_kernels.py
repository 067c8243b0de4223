"""Compare the numpy and numba kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5]

Both backends are called directly through ``kernels.IMPLEMENTATIONS``, so the
``PGCE_DISABLE_NUMBA`` flag does not matter here. Each kernel is first
checked for agreement, then timed with ``timeit`` (best of ``--repeat``).
"""
import argparse
import timeit

import numpy as np

from pgce import kernels
from pgce.numerics import init_params


def workloads(rng):
    params = init_params((5, 16, 16, 3), 0)
    layout = params._layout_arr
    X = rng.standard_normal((4096, 5))
    acts = kernels.mlp_forward_numpy(params.values, layout, X)
    dout = rng.standard_normal((4096, 3))
    offsets = np.arange(0, 4097, 40, dtype=np.int64)
    offsets[-1] = 4096
    rewards = rng.standard_normal(100_000)
    r_off = np.arange(0, 100_001, 40, dtype=np.int64)
    r_off[-1] = 100_000
    actions = rng.integers(0, 3, size=(2000, 40))
    return {
        "mlp_forward (4096x[5,16,16,3])": (0, (params.values, layout, X)),
        "mlp_backward (4096 rows, 103 groups)": (1, (params.values, layout, acts, dout, offsets)),
        "segment_returns (100k steps)": (2, (rewards, r_off, 0.99)),
        "held_positions (2000x40)": (3, (actions, False)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=20)
    args = ap.parse_args()
    backends = [b for b in ("numpy", "numba") if b in kernels.IMPLEMENTATIONS]
    if "numba" not in backends:
        print("numba is not installed; timing the numpy backend only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} " + " ".join(f"{b:>12s}" for b in backends) + "   numba speedup")
    for name, (k, call_args) in workloads(rng).items():
        outs = [kernels.IMPLEMENTATIONS[b][k](*call_args) for b in backends]  # also triggers JIT
        for o in outs[1:]:
            np.testing.assert_allclose(o, outs[0], rtol=1e-12, atol=1e-12)
        times = []
        for b in backends:
            fn = kernels.IMPLEMENTATIONS[b][k]
            t = min(timeit.repeat(lambda: fn(*call_args), number=args.number, repeat=args.repeat))
            times.append(t / args.number)
        speed = f"{times[0] / times[-1]:8.2f}x" if len(times) > 1 else ""
        print(f"{name:40s} " + " ".join(f"{t * 1e6:10.1f}us" for t in times) + "  " + speed)


if __name__ == "__main__":
    main()
