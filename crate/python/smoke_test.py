"""Quick end-to-end check of the pybsvd extension.

Either install the module (``maturin develop -m crates/python/Cargo.toml``)
or build it with ``cargo build --release -p bsvd-python``; in the latter case
this script loads ``target/release/libpybsvd.so`` directly.
"""

import importlib.machinery
import importlib.util
import json
import math
import pathlib
import sys
import tempfile


def load():
    try:
        import pybsvd

        return pybsvd
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for name in ("libpybsvd.so", "libpybsvd.dylib", "pybsvd.dll"):
        path = root / "target" / "release" / name
        if path.exists():
            loader = importlib.machinery.ExtensionFileLoader("pybsvd", str(path))
            spec = importlib.util.spec_from_file_location("pybsvd", path, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            return module
    sys.exit("pybsvd not found: build it with `cargo build --release -p bsvd-python`")


def gram_error(w):
    k = len(w[0])
    worst = 0.0
    for i in range(k):
        for j in range(k):
            dot = sum(row[i] * row[j] for row in w)
            worst = max(worst, abs(dot - (1.0 if i == j else 0.0)))
    return worst


def main():
    bsvd = load()
    print("pybsvd", bsvd.__version__)

    exp = bsvd.Kernel.matern(0.5, 2.0)
    assert abs(exp(1.3) - math.exp(-1.3 / 2.0)) < 1e-12

    pts = bsvd.grid(-5.0, 5.0, 20)
    kernels = [bsvd.Kernel.matern(2.5, 1.0), bsvd.Kernel.gaussian(0.5), bsvd.Kernel.identity()]
    w = bsvd.random_basis(pts, kernels, 7)
    assert gram_error(w) < 1e-8

    design = {
        "n": 25,
        "m": 20,
        "d_true": [30, 15],
        "u_kernels": [{"family": "matern", "nu": 3.5, "rho": 3}],
        "v_kernels": [{"family": "matern", "nu": 3.5, "rho": 3}],
        "snr": 2,
        "seed": 1,
    }
    truth = bsvd.simulate(json.dumps(design))
    assert len(truth.z) == 25 and len(truth.z[0]) == 20

    config = bsvd.ModelConfig(2, 300, 150, seed=3)
    chain = bsvd.fit(truth.z, truth.coords_u, truth.coords_v, config)
    assert len(chain) == 150
    assert all(gram_error(chain.u(i)) < 1e-8 for i in (0, len(chain) - 1))

    summary = chain.summarize(0.95)
    for target in ("u", "v", "y"):
        cr = summary.coverage(truth, target)
        print(f"{target}: coverage {cr:.3f} rmse {summary.rmse(truth, target):.4f}")
        assert 0.0 <= cr <= 1.0
    d = summary.cells("d")
    assert d["lower"][0][0] <= d["mean"][0][0] <= d["upper"][0][0]

    cos_u, cos_v = chain.csvd_cosines(truth.z)
    print("cosines with classical SVD", [round(c, 3) for c in cos_u + cos_v])

    with tempfile.TemporaryDirectory() as tmp:
        chain.save(tmp + "/chain")
        again = bsvd.Chain.load(tmp + "/chain")
        assert again.d() == chain.d()

    same = bsvd.fit(truth.z, truth.coords_u, truth.coords_v, config)
    assert same.sigma2() == chain.sigma2()

    try:
        bsvd.fit(truth.z, truth.coords_u, truth.coords_v, bsvd.ModelConfig(30, 10, 5))
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("k above min(n, m) was accepted")

    print("ok")


if __name__ == "__main__":
    main()
