"""Smoke test for the regimecast_py extension module.

Build first:
    cargo build --release -p regimecast-py --features extension-module
The script imports an installed module or falls back to the build output.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import regimecast_py

        return regimecast_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libregimecast_py.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("regimecast_py", str(lib))
            spec = importlib.util.spec_from_loader("regimecast_py", loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("regimecast_py not found; build it with --features extension-module")


def main():
    rc = load()

    assert rc.mjo_phase(0.1, 0.2) == 0
    assert rc.mjo_phase(-2.0, -0.5) == 1
    p = [[0.7 if i == j else 0.1 for j in range(4)] for i in range(4)]
    assert math.isclose(rc.persistence_accuracy(p, 2), 0.25 + 0.75 * 0.36)

    world = rc.World(seed=2, winters=10)
    assert len(world.regimes) == len(world.days)
    assert set(world.regimes) <= {0, 1, 2, 3}
    z = world.z500()
    nt, ny, nx = z.shape
    assert len(z.values()) == nt * ny * nx

    comps, evr = rc.fit_eof(z, 4, "sqrt_cos_lat")
    assert len(comps) == 4 and all(a >= b for a, b in zip(evr, evr[1:]))
    labels, centroids, inertia = rc.fit_kmeans([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0],
                                                [-5.0, 5.0], [-5.0, 5.1], [5.0, -5.0], [5.1, -5.0]])
    assert len(set(labels)) == 4 and inertia < 0.1

    try:
        rc.Field("bad", "m", [0, 0], [0.0], [0.0], [1.0, 2.0])
        raise AssertionError("duplicate times accepted")
    except ValueError:
        pass

    with tempfile.TemporaryDirectory() as d:
        world.write(d)
        back = rc.Field.read(str(pathlib.Path(d) / "z500.grd"))
        assert back.shape == z.shape
        summary = json.loads(rc.run_ensemble(str(pathlib.Path(d) / "regimes_truth.csv"), d,
                                             model="lstm", members=2, seed=1, max_epochs=2))
        assert len(summary["balanced_accuracy_mean"]) == 6

    probs = [[[0.7, 0.1, 0.1, 0.1]] * 6] * 3
    report = json.loads(rc.skill_report("demo", probs, [[0] * 6, [1] * 6, [0] * 6]))
    assert report["model"] == "demo"
    print("smoke test passed")


if __name__ == "__main__":
    main()
