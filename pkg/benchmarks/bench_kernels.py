"""Compiled vs numpy grid inner max on a 2-D x grid against a 2-D y grid.

Run: python3 benchmarks/bench_kernels.py [points-per-axis]
"""

from __future__ import annotations

import sys
import time

import numpy as np

from mmstab import _kernels_py
from mmstab.corpus import builtin
from mmstab.generator import GeneratorConfig, generate_instance
from mmstab.oracle import _lq_arrays, _tensor_grid

try:
    from mmstab import _kernels as compiled
except ImportError:
    compiled = None


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(points: int = 101) -> None:
    cases = {
        "p2 (1+1, one g)": builtin("p2"),
        "generated 2+2 (two g)": generate_instance(
            GeneratorConfig(n=2, m=2, m2=2, alpha=1, seed=3)),
    }
    for label, case in cases.items():
        spec, z = case.spec, case.solution
        X = _tensor_grid(z.x, 0.1, points)
        Y = _tensor_grid(z.y, 0.1, points)
        arrays = _lq_arrays(spec)
        args = (X, Y, *arrays, np.ascontiguousarray(z.y), 0.1, 1e-9)
        t_py, (v_py, i_py) = _time(lambda: _kernels_py.grid_inner_max(*args))
        print(f"{label}: {len(X)} x {len(Y)} pairs")
        print(f"  numpy   {t_py * 1e3:9.2f} ms")
        if compiled is None:
            print("  cython  (extension not built)")
            continue
        t_c, (v_c, i_c) = _time(lambda: compiled.grid_inner_max(*args))
        same = np.array_equal(i_py, i_c) and np.allclose(v_py, v_c, rtol=1e-12, atol=1e-12)
        print(f"  cython  {t_c * 1e3:9.2f} ms   speedup {t_py / t_c:6.1f}x   identical={same}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 101)
