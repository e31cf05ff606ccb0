"""Compare the compiled and pure-Python kernel backends.

Per-call timings for the hot kernels, then an end-to-end run of the shipped
``brockett_paper`` experiment under each backend (in a subprocess, since the
backend is fixed at import).

    python benchmarks/bench_kernels.py [--repeat N] [--no-e2e]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

from nssg import _kernels

CASES = {
    "brockett_control": lambda k: (k.brockett_control, (0.2, 0.1, 0.15, 0.1, 1.0, 0.0, k.GENERIC)),
    "brockett_rk4": lambda k: (k.brockett_rk4, (0.2, 0.1, 0.15, 0.1, 1.0, 0.0, k.GENERIC, 1e-3)),
    "brockett_radau5": lambda k: (k.brockett_radau5, (0.2, 0.1, 0.15, 0.1, 1.0, 0.0, k.GENERIC, 1e-3, (0.0,) * 6)),
    "string_rk4": lambda k: (k.string_rk4, (1.0, 0.0, 0.0, 0.5, 1.0, 1.0, 0.5, 0.25, 1, False, 1e-3)),
}

E2E = (
    "import json, time; from nssg import BACKEND, experiment as ex; from nssg.config import load;"
    "t = time.perf_counter(); r = ex.run(load('brockett_paper'));"
    "print(json.dumps({'backend': BACKEND, 'seconds': time.perf_counter() - t,"
    " 't_converged': r.trajectory.t_converged}))"
)


def per_call(repeat):
    rows = []
    for name, make in CASES.items():
        row = {"kernel": name}
        for backend in _kernels.available_backends():
            fn, args = make(_kernels.load_backend(backend))
            n = 20000 if backend == "cython" else 2000
            best = min(timeit.repeat(lambda: fn(*args), number=n, repeat=repeat)) / n
            row[backend] = best * 1e6
        rows.append(row)
    return rows


def end_to_end():
    out = []
    for flag in ("0", "1"):
        env = dict(os.environ, NSSG_PURE_PYTHON=flag)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        out.append(json.loads(res.stdout))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-e2e", action="store_true", help="skip the end-to-end runs")
    args = ap.parse_args(argv)

    backends = _kernels.available_backends()
    print(f"{'kernel':<18}" + "".join(f"{b + ' [us]':>16}" for b in backends) + f"{'speedup':>10}")
    for row in per_call(args.repeat):
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{row['kernel']:<18}" + "".join(f"{row[b]:>16.3f}" for b in backends) + f"{speed:>10.1f}")
    if not args.no_e2e:
        print()
        for r in end_to_end():
            print(f"brockett_paper  backend={r['backend']:<7} {r['seconds']:7.2f} s  T={r['t_converged']:.8f}")


if __name__ == "__main__":
    main()
