"""Smoke test for the compiled `turnpike` module.

Build and install first, for example with
``maturin build --release -m crates/python/Cargo.toml && pip install target/wheels/*.whl``.
"""

import math
import sys

import turnpike


def main() -> int:
    p = turnpike.Problem.builtin("example1")
    assert (p.n, p.m) == (2, 2), p

    report = p.analyze()
    assert report["detectable"], report

    steady = p.steady_state()
    assert all(abs(v) < 1e-9 for v in steady["x_e"]), steady
    assert steady["verification"]["passed"]

    cert = p.certify()
    assert cert["verification"]["passed"], cert["verification"]
    assert cert["s"] > 0.0

    sol = p.solve([0.5, -0.5], 20)
    assert len(sol["states"]) == 21 and len(sol["controls"]) == 20
    assert sol["admissible"]
    assert math.isclose(sol["total_cost"], sum(sol["stage_costs"]), rel_tol=1e-9, abs_tol=1e-12)

    scan = p.scan([10, 20], [0.1], samples=3)
    assert scan["all_ok"], scan
    assert len(scan["cells"]) == 6

    again = turnpike.Problem.from_toml(p.to_toml())
    assert math.isclose(again.solve([0.5, -0.5], 20)["total_cost"], sol["total_cost"], rel_tol=1e-8)

    cone = turnpike.Problem.builtin("example2")
    try:
        cone.solve([3.0, 0.0, 1.0], 10)
    except turnpike.InfeasibleError:
        pass
    else:
        raise AssertionError("(3, 0, 1) lies outside the cone")

    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
