"""Compare the compiled and numpy kernels on random face batches and on one flow.

Usage::

    python3 benchmarks/bench_kernels.py [--faces 20000] [--repeat 20]
"""
import argparse
import time

import numpy as np

from dcflow import _kernels_py
from dcflow.flow import FlowConfig, run_flow, uniform_target
from dcflow.mesh import preset
from dcflow.structure import DiscreteConformalStructure

try:
    from dcflow import _kernels_cy
except ImportError:
    _kernels_cy = None


def random_faces(rng, count, hyperbolic):
    # side lengths from random circle-packing-like triangles: always nondegenerate
    r = rng.uniform(0.2, 1.5, (count, 3))
    lf = np.stack([r[:, 1] + r[:, 2], r[:, 2] + r[:, 0], r[:, 0] + r[:, 1]], axis=1)
    dls = rng.uniform(0.1, 1.0, (count, 3))
    dle = rng.uniform(0.1, 1.0, (count, 3))
    return lf, dls, dle


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(count, repeat):
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)] + ([("cython", _kernels_cy)] if _kernels_cy else [])
    print(f"{'kernel':<28}{'backend':<10}{'best [ms]':>12}")
    for hyperbolic in (False, True):
        lf, dls, dle = random_faces(rng, count, hyperbolic)
        faces = rng.integers(0, count // 2, (count, 3))
        results = {}
        for name, mod in backends:
            t = best_of(lambda: mod.face_jacobian(lf, dls, dle, hyperbolic), repeat)
            theta, G = mod.face_jacobian(lf, dls, dle, hyperbolic)
            t_sc = best_of(lambda: mod.scatter_jacobian(faces[:2000] % 500, G[:2000], 500), repeat)
            results[name] = (theta, G)
            tag = "hyperbolic" if hyperbolic else "euclidean"
            print(f"{'face_jacobian/' + tag:<28}{name:<10}{1e3 * t:>12.3f}")
            print(f"{'scatter_jacobian/' + tag:<28}{name:<10}{1e3 * t_sc:>12.3f}")
        if len(results) == 2:
            d = max(np.abs(results["python"][0] - results["cython"][0]).max(),
                    np.abs(results["python"][1] - results["cython"][1]).max())
            print(f"  max backend difference: {d:.2e}")


def bench_flow():
    mesh = preset("icosahedron")
    n = mesh.num_vertices
    u = np.random.default_rng(1).uniform(-0.5, 0.5, n)
    dcs = DiscreteConformalStructure("euclidean", np.ones(n), np.ones(mesh.num_edges), u - u.mean())
    cfg = FlowConfig(target=uniform_target(mesh, dcs.background), s=1.0)
    from dcflow import _backend
    for name, mod in [("python", _kernels_py), ("cython", _kernels_cy)]:
        if mod is None:
            continue
        saved = _backend.kernels
        # the modules import ``kernels`` by name, so patch every user
        import dcflow.geometry as g
        import dcflow.jacobian as j
        g.kernels = j.kernels = mod
        try:
            t = best_of(lambda: run_flow(mesh, dcs, cfg), 3)
        finally:
            g.kernels = j.kernels = saved
        print(f"{'flow icosahedron s=1':<28}{name:<10}{1e3 * t:>12.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--faces", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    bench_kernels(args.faces, args.repeat)
    bench_flow()
