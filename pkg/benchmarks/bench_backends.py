"""Compare the compiled curve kernels against the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [--iterations N]

Times the three hot operations (base multiplication, general
multiplication, dual-scalar multiplication) on both backends, plus the
end-to-end sign/verify pair, and prints a small table. The compiled
backend typically lands at a high single-digit multiple of the fallback.
"""

import argparse
import time

from ctsim import _ecpure
from ctsim.crypto import DetRng, generate_keypair, sign, verify

try:
    from ctsim import _ecfast
except ImportError:
    _ecfast = None


def _bench(fn, args_list) -> float:
    start = time.perf_counter()
    for args in args_list:
        fn(*args)
    return (time.perf_counter() - start) / len(args_list) * 1000


def _scalar_args(rng, n):
    return [(rng.randbelow(_ecpure.N - 1) + 1,) for _ in range(n)]


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--iterations", type=int, default=200)
    args = parser.parse_args()
    n = args.iterations
    rng = DetRng(b"bench")

    backends = [("pure", _ecpure)]
    if _ecfast is not None:
        backends.append(("compiled", _ecfast))
    else:
        print("compiled backend not built; showing fallback only\n")

    rows = []
    scalars = _scalar_args(rng, n)
    px, py = _ecpure.scalar_base_mult(0xDEADBEEF)
    pair_args = [(a[0], b[0], px, py)
                 for a, b in zip(_scalar_args(rng, n), _scalar_args(rng, n))]
    for name, mod in backends:
        base = _bench(mod.scalar_base_mult, scalars)
        gen = _bench(mod.scalar_mult, [(s[0], px, py) for s in scalars])
        dual = _bench(mod.shamir_mult, pair_args)
        rows.append((name, base, gen, dual))

    print(f"{'backend':<10} {'base mult':>10} {'point mult':>11} "
          f"{'dual mult':>10}   (ms/op, {n} iterations)")
    for name, base, gen, dual in rows:
        print(f"{name:<10} {base:>10.3f} {gen:>11.3f} {dual:>10.3f}")
    if len(rows) == 2:
        speedup = rows[0][1] / rows[1][1]
        print(f"\ncompiled base-mult speedup: {speedup:.1f}x")

    # end-to-end: what block validation actually pays per signature
    key = generate_keypair(rng.take(32))
    msgs = [rng.take(32) for _ in range(n)]
    sigs = [sign(key, m) for m in msgs]
    t_sign = _bench(lambda m: sign(key, m), [(m,) for m in msgs])
    t_verify = _bench(lambda m, s: verify(key.pub_bytes, m, s),
                      list(zip(msgs, sigs)))
    print(f"\nsign: {t_sign:.3f} ms/op, verify (uncached): "
          f"{t_verify:.3f} ms/op on the active backend")


if __name__ == "__main__":
    main()
