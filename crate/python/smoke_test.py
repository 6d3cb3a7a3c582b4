"""Smoke test for the blowup_py extension. Run after `pip install --no-build-isolation -e crates/blowup-py`."""

import math
import os
import tempfile

import blowup_py as bp


def main():
    dom = bp.Domain("-1,1")
    assert len(dom) == 1 and dom.measure() == 2.0

    table = bp.GreenTable(dom)
    assert table.closed_form
    assert abs(table.robin(0.0) - 2 * math.log(2)) < 1e-12
    assert abs(table.green(0.2, -0.4) - table.green(-0.4, 0.2)) < 1e-12

    xi, value = bp.minimize_reduced(table, 1)
    assert abs(xi[0]) < 1e-6 and abs(value + 2 * math.log(2)) < 1e-6

    sol = bp.construct(table, 0.05, xi)
    assert sol["converged"]
    assert abs(sol["mass"] - 2 * math.pi) / (2 * math.pi) < 0.1
    assert sol["residual"] < 10 * 0.05 * 0.1
    assert len(sol["x"]) == len(sol["u"]) and min(sol["u"]) > 0

    assert bp.pohozaev_kernel(1.0, 2.0) == 0.0
    assert abs(bp.barrier_constant(0.5) + 0.5) < 1e-9
    nd = bp.nondegeneracy([1.0])
    assert nd["kernel_modes"] == [-1, 1] and nd["pass"]

    try:
        bp.Domain("1,0")
    except ValueError as e:
        assert "endpoints not increasing" in str(e)
    else:
        raise AssertionError("malformed domain accepted")

    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "run.toml")
        with open(cfg, "w") as f:
            f.write('domain = "0,1"\neps = [0.1]\n')
        assert bp.run("construct", cfg, out=os.path.join(tmp, "o")) == 0
        assert bp.run("verify", cfg, out=os.path.join(tmp, "o"), checks=["mass", "pohozaev"]) == 0
        assert os.path.exists(os.path.join(tmp, "o", "verify.json"))

    print(f"blowup_py {bp.__version__}: smoke test passed (mass {sol['mass']:.4f}, xi {xi[0]:.1e})")


if __name__ == "__main__":
    main()
