"""Smoke test for the `memrelax` extension module.

Build and run:

    cargo build --release -p memrelax-py --features extension-module
    cp target/release/libmemrelax.so python/memrelax.so
    python3 python/smoke_test.py        # or: pytest python/smoke_test.py
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import memrelax  # noqa: E402

ID = [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]


def test_w0_identity():
    m = memrelax.Model("reciprocal:p=2")
    value, t, zeta = m.w0(ID)
    assert math.isclose(value, 2 + 3 * 2 ** (-2 / 3), rel_tol=1e-12)
    assert math.isclose(t, 2 ** (-1 / 3), rel_tol=1e-6)
    assert abs(zeta[2] - t) < 1e-12
    assert abs(m.w0_bruteforce(ID, 101) - value) < 2e-2


def test_degenerate_and_certificate():
    m = memrelax.Model()
    flat = [[1.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
    assert math.isinf(m.w0(flat)[0])
    assert m.growth_certificate() == (2.0, 64.0, 512.0)
    assert m.energy([[1, 0, 0], [0, 1, 0], [0, 0, 1]]) == 4.0


def test_envelope_bounds():
    m = memrelax.Model()
    env = memrelax.Envelope(m, levels=1, coarse=True)
    w0 = m.w0(ID)[0]
    assert env.laminate(ID, 1) <= w0 + 1e-9
    assert env.interpolate(ID, 1) is not None
    assert m.four_corner([[1.0, 0.0], [0.0, 0.5], [0.0, 0.0]]) < math.inf


def test_director():
    m = memrelax.Model()
    v1, _ = m.constrained_min(ID, 1)
    v64, _ = m.constrained_min(ID, 64)
    assert v64 <= v1
    assert abs(m.blended_energy(ID, 4, 64) - m.w0(ID)[0]) < 0.01 * m.w0(ID)[0]


def test_experiment():
    cfg = {
        "model": {"barrier": "reciprocal", "p": 2.0},
        "mesh_n": 2,
        "load": {"matrix": [[-4, 0, 0], [0, -4, 0], [0, 0, 0]], "offset": [2, 2, 0], "p": 2.0},
        "envelope": {"fine_max": 2.0, "table_max": 2.0, "fine_pitch": 0.1},
        "envelope_level": 1,
        "sweep": {"eps": [0.2, 0.1], "layers": 3, "seed": 1},
    }
    report = json.loads(memrelax.run_experiment(json.dumps(cfg)))
    assert len(report["rows"]) == 2
    assert report["competitor_dominated"]


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
