"""Smoke test for the pywhitham extension module."""

import json
import math

import numpy as np

import pywhitham as pw


def main():
    assert "ddk" in pw.presets()
    assert pw.is_admissible("ddk")
    assert not pw.is_admissible("open_wb")

    m = pw.Model("ddk", 64, 0.0)
    x = np.asarray(m.coordinates())
    omega = math.sqrt(math.tanh(1.0))
    zeta = np.cos(x)
    v = [list(zeta / omega)]
    out = m.run(list(zeta), v, 2 * math.pi / omega, dt=0.01)
    final = np.asarray(out["final"]["zeta"])
    period_err = np.max(np.abs(final - zeta))
    assert period_err < 1e-6, period_err
    q = np.asarray(out["diagnostics"]["quad_form"])
    assert np.max(np.abs(q - q[0])) / q[0] < 1e-8

    exact_zeta, _ = m.exact_linear(list(zeta), v, 1.0)
    assert np.allclose(exact_zeta, np.cos(x - omega * 1.0), atol=1e-12)

    nl = pw.Model("ddk", 32, 0.5)
    assert nl.coercivity(50, 1) >= -1e-10
    bump = 0.5 * np.exp(-((np.asarray(nl.coordinates()) - math.pi) ** 2))
    zt, vt = nl.rhs(list(bump), [list(bump)])
    assert len(zt) == 32 and len(vt[0]) == 32

    cfg = {
        "model": "ddk",
        "dim": 1,
        "N": 32,
        "epsilon": 0.2,
        "t_end_over_eps": 0.2,
        "initial": {"kind": "gaussian", "amplitude": 0.5, "width": 1.0},
    }
    assert pw.validate_config(json.dumps(cfg)) == []
    res = pw.run_config(json.dumps(cfg))
    assert abs(res["final"]["time"] - 1.0) < 1e-12
    other = dict(cfg, model="shallow_water")
    cmp = pw.compare(json.dumps(cfg), json.dumps(other), 1.0)
    assert cmp["bound_holds"]

    try:
        pw.validate_config(json.dumps(dict(cfg, epsilon=2.0)))
    except ValueError:
        pass
    else:
        raise AssertionError("invalid epsilon accepted")

    checks = pw.selftest()
    failed = [c for c in checks if not c[1]]
    assert not failed, failed
    print(f"smoke test passed ({len(checks)} self-checks)")


if __name__ == "__main__":
    main()
