"""Smoke test of the eit_size_py extension.

Build first:
    cargo build --release -p eit-size-py --features extension-module
then run:
    python3 python/smoke_test.py [path/to/libeit_size_py.so]
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load(path=None):
    if path is None:
        for name in ("libeit_size_py.so", "libeit_size_py.dylib", "eit_size_py.dll"):
            cand = ROOT / "target" / "release" / name
            if cand.exists():
                path = cand
                break
    if path is None:
        sys.exit("extension not built; see the module docstring")
    # the import system wants the module's own file name
    tmp = pathlib.Path(tempfile.mkdtemp())
    suffix = ".pyd" if str(path).endswith(".dll") else ".so"
    target = tmp / ("eit_size_py" + suffix)
    shutil.copy(path, target)
    spec = importlib.util.spec_from_file_location("eit_size_py", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    eit = load(pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else None)

    mesh = eit.Mesh(3, 8)
    assert mesh.n_params == 1000 and mesh.half_bandwidth == 223, repr(mesh)

    model = eit.Model.uniform(mesh)
    w0 = model.homogeneous_power()
    assert abs(w0 - 1.0) < 1e-10, w0

    center = [mesh.element_index([x, y, z]) for x in (3, 4) for y in (3, 4) for z in (3, 4)]
    for k in (0.1, 10.0):
        rec = model.solve_pair(center, k)
        assert rec["status"] == "ok"
        assert (rec["w"] < w0) == (k > 1), rec
        lo, hi, _ = eit.theoretical_line(k)
        assert lo * rec["gap"] <= rec["volume_fraction"] <= hi * rec["gap"], rec

    cem = eit.Model.electrodes_opposite(eit.Mesh(3, 5), 0.2)
    assert abs(cem.homogeneous_power() - 1.4) < 1e-8

    cos = eit.Model.cosine(mesh, 1)
    exact = math.tanh(math.pi / 2) / math.pi
    assert abs(cos.homogeneous_power() - exact) / exact < 1e-3
    assert len(cos.critical_points()) >= 1

    assert eit.count_inclusions(343, 5) == math.comb(343, 5)
    assert len(eit.centered_blocks(eit.Mesh(3, 12), 1, 3)) == 17
    assert len(eit.connected_sets(eit.Mesh(2, 7), 2)) == 84
    f = [eit.cosine_frequency(eit.Mesh(3, 6), n) for n in range(3)]
    assert f[0] < f[1] < f[2], f

    try:
        eit.Mesh(4, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("dim 4 accepted")

    print("python smoke test ok")


if __name__ == "__main__":
    main()
