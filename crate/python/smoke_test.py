"""Quick end-to-end check of the Python bindings.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import qlrom


def check_operators():
    # d = 2 with H (x ⊗ x) = [x0 * x1, 0]; the constructor symmetrizes H
    a = [[-1.0, 0.0], [0.0, -2.0]]
    h = [[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 0.0]]
    ops = qlrom.QuadraticOperators(a, h, [0.5, 0.0])
    f = ops.rhs([2.0, 3.0])
    assert math.isclose(f[0], -2.0 + 6.0 + 0.5) and math.isclose(f[1], -6.0), f
    assert ops.h[0][1] == ops.h[0][2] == 0.5
    assert math.isclose(ops.max_real_eigenvalue(), -1.0)
    try:
        qlrom.QuadraticOperators(a, h, [0.0])
    except qlrom.QlromError as e:
        assert e.args[1] == 2, e.args
    else:
        raise AssertionError("shape mismatch accepted")


def check_energy():
    sv = [3.0, 2.0, 1.0]
    e = qlrom.cumulative_energy(sv)
    assert math.isclose(e[-1], 1.0) and math.isclose(e[0], 9.0 / 14.0)
    assert qlrom.energy_rank(sv, 0.9) == 2


def check_pipeline(out):
    config = {
        "output_dir": str(out),
        "dataset": {
            "generate": {
                "fom": {"model": "burgers", "n": 32},
                "sampling": {"end": 1.0, "count": 41, "exponent": 1.0},
            }
        },
    }
    report = json.loads(qlrom.run_pipeline(json.dumps(config)))
    assert report["error_overall"] < 0.05, report["error_overall"]

    model = qlrom.RomModel.load(str(out / "model"))
    assert model.rank == report["total_rank"] and model.full_dim == 32
    x0 = [math.sin(math.pi * (i + 1) / 33) for i in range(32)]
    reduced, full, diverged = model.simulate(x0, [0.0, 0.1, 0.2])
    assert diverged is None
    assert len(reduced) == 3 and len(reduced[0]) == model.rank
    assert len(full) == 3 and len(full[0]) == 32

    assert qlrom.main(["report", "--output-dir", str(out)]) == 0
    assert qlrom.main(["run", "--theta", "2"]) == 2
    return report


def main():
    check_operators()
    check_energy()
    with tempfile.TemporaryDirectory() as tmp:
        report = check_pipeline(Path(tmp) / "run")
    print(f"smoke test passed: rank {report['total_rank']}, error {report['error_overall']:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
