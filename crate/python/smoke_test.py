"""Smoke test for the revsle extension module.

Build and install first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml
"""

import cmath
import math

import revsle


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol * (1.0 + abs(b))


def main():
    path = revsle.sample_brownian(1.0, 200, 4.0, 7)
    assert len(path) == 201
    assert path.values()[0] == 0.0
    assert path.reversed().values() == path.values()[::-1]
    assert revsle.DrivingPath.from_json(path.to_json()).values() == path.values()

    zero = revsle.DrivingPath.explicit(1.0, 4.0, [0.0] * 101)
    forward = revsle.LoewnerEvolution(zero, "forward")
    z = complex(0.3, 1.0)
    assert close(forward.apply(z), cmath.sqrt(z * z + 4.0))
    assert close(forward.invert(forward.apply(z)), z)
    tips = forward.trace([0, 25, 100])
    assert all(close(t, complex(0.0, 2.0 * math.sqrt(k / 100))) for t, k in zip(tips, [0, 25, 100]))

    backward = revsle.LoewnerEvolution(path.reversed(), "backward")
    w = backward.apply(complex(0.0, 1.5))
    back = revsle.LoewnerEvolution(path, "forward").apply(w)
    assert abs(back - complex(0.0, 1.5)) <= 10 * math.sqrt(1.0 / 200)

    states, status = revsle.evolve_wholeplane(zero, 1j)
    assert status == "completed" and all(abs(s - 1j) < 1e-9 for s in states)

    assert revsle.coupling_check("8/3")[2] == "26"
    assert close(revsle.central_charge(4.0) + revsle.central_charge(4.0, "matter"), 26.0)
    assert close(revsle.kac_weight(4.0, 1, 3), -3.0)

    report = revsle.virasoro_report("2")
    assert report["w_eigenvalue"] == (-2, 1) and report["matches_formula"]
    assert report["singular_12"] and report["singular_21"]

    b1, b2 = revsle.one_point_exponents(4.0, -3.0)
    assert close(b1.real, 3.0) and close(b2.real, -1.0)
    audit = revsle.audit_printed_exponents(4.0)
    assert not audit["printed"][3] and all(c[3] for c in audit["candidates"])

    mc = revsle.run_martingale_test(4.0, 1.0, -3.0, 3.0, 0.05, 100, 2000, 1)
    assert mc["verdict"], mc
    assert mc == revsle.run_martingale_test(4.0, 1.0, -3.0, 3.0, 0.05, 100, 2000, 1, workers=2)

    inv = revsle.run_inverse_consistency(4.0, 1.0, 200, 20, 3, [1j, complex(1.0, 2.0)])
    assert inv["pass"], inv

    print("revsle", revsle.__version__, "smoke test passed")


if __name__ == "__main__":
    main()
