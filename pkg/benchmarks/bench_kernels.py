"""Compare the compiled kernels against the pure numpy fallback.

Run:  python3 benchmarks/bench_kernels.py
Both implementations are imported directly, so one process measures both;
the SSATTN_PURE=1 escape hatch is for running the full package on the
fallback, not needed here.
"""

import time

import numpy as np

from ssattn.kernels import ref

try:
    from ssattn.kernels import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, *args, repeat=200):
    fn(*args)  # warm
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeat):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeat)
    return best * 1e6  # microseconds


def main():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(256, 64)).astype(np.float32)
    g = rng.normal(size=(256, 64)).astype(np.float32)
    gain = rng.normal(size=64).astype(np.float32)
    bias = rng.normal(size=64).astype(np.float32)
    sm = ref.softmax_fwd(x)
    ln_out, xhat, rstd = ref.layer_norm_fwd(x, gain, bias, 1e-5)
    p = rng.normal(size=16384).astype(np.float32)
    grad = rng.normal(size=16384).astype(np.float32)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    cases = [
        ("softmax_fwd", (x,)),
        ("softmax_bwd", (sm, g)),
        ("layer_norm_fwd", (x, gain, bias, 1e-5)),
        ("layer_norm_bwd", (xhat, rstd, gain, g)),
        ("gelu_fwd", (x,)),
        ("gelu_bwd", (x, g)),
        ("adam_step", (p, grad, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)),
    ]

    print(f"{'kernel':<16} {'pure us':>10} {'compiled us':>12} {'speedup':>8}")
    for name, args in cases:
        t_ref = timeit(getattr(ref, name), *args)
        if _ckernels is None:
            print(f"{name:<16} {t_ref:>10.1f} {'n/a':>12} {'n/a':>8}")
            continue
        t_c = timeit(getattr(_ckernels, name), *args)
        print(f"{name:<16} {t_ref:>10.1f} {t_c:>12.1f} {t_ref / t_c:>7.1f}x")
    if _ckernels is None:
        print("\ncompiled extension not built; showing fallback only")


if __name__ == "__main__":
    main()
