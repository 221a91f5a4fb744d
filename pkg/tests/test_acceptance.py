"""Acceptance gate.

Each criterion is a function returning ``(passed, detail)``; the pytest
wrappers assert on it and the terminal summary prints one line per criterion.
Run ``python tests/test_acceptance.py`` for the same lines without pytest.
"""

from __future__ import annotations

import math
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from telepassive.cli import dump_config, main, parse_config, resolve_config_path
from telepassive.control import discretize
from telepassive.freq import (
    FrequencyGrid,
    check_gain_conditions,
    closed_form_bound,
    continuous_coupling,
    identity_sweep,
    max_singular_value_2x2,
    passivity_margin_sweep,
    passivity_rhs,
    scattering_matrix,
    scattering_sweep,
)
from telepassive.model import REFERENCE_ROBOT, DelayConfig, PDDissipation, PDLike, PLike
from telepassive.sim import energy_monitor, run_simulation, tracking_metrics

RESULTS: dict[str, tuple[bool, str]] = {}

REFERENCE_RUNS = [
    ("P-like", "p_like_sec5", 0.002),
    ("PD-like", "pd_like_sec5", 0.005),
    ("PD+dissipation", "pd_diss_sec5", 0.006),
]


def record(name: str, passed: bool, detail: str) -> tuple[bool, str]:
    RESULTS[name] = (bool(passed), detail)
    return bool(passed), detail


def bundled(name: str):
    return parse_config(resolve_config_path(name))


def criterion_1():
    T = 0.002
    law = PLike(1.0, 1.0, 0.1, 0.1)
    start = time.perf_counter()
    bound = closed_form_bound(law, "master", T)
    rep = passivity_margin_sweep(law, "master", T, 1.0, FrequencyGrid.default(T, 2000, 1e-3), REFERENCE_ROBOT)
    elapsed = time.perf_counter() - start
    rel = abs(rep.sweep_sup - 0.202) / 0.202
    ok = bound == 0.202 and rel < 1e-3 and elapsed < 1.0
    return record("C1 P-like closed form", ok, f"bound={bound!r} sup={rep.sweep_sup!r} rel_err={rel:.2e} t={elapsed:.3f}s")


def criterion_2():
    T = 0.005
    law = PDLike(Kd=1.0, K_m=2.0, K_s=2.0, gamma_m=1.0, gamma_s=1.0)
    start = time.perf_counter()
    bound = closed_form_bound(law, "master", T)
    rep = passivity_margin_sweep(law, "master", T, 1.0, FrequencyGrid.default(T), REFERENCE_ROBOT)
    elapsed = time.perf_counter() - start
    ok = (
        abs(bound - 2.01) < 1e-12
        and abs(rep.sweep_sup - 2.01) <= 1e-9
        and rep.sweep_argmax_omega == math.pi / T
        and elapsed < 1.0
    )
    return record("C2 PD-like closed form", ok, f"bound={bound!r} sup={rep.sweep_sup!r} at w={rep.sweep_argmax_omega!r} t={elapsed:.3f}s")


def criterion_3():
    T = 0.006
    law = PDDissipation(Kv=10.0, Kp=1.0, Kd=2.0, Peps=0.002)
    rep = passivity_margin_sweep(law, "master", T, 1.0, FrequencyGrid.default(T), REFERENCE_ROBOT)
    rel = abs(rep.sweep_sup - rep.closed_form_bound) / abs(rep.closed_form_bound)
    ok = abs(rep.closed_form_bound + 15.998) < 1e-12 and rel > 1e-2 and rep.discrepancy_flag
    return record("C3 PD+dissipation discrepancy", ok, f"closed form={rep.closed_form_bound!r} sweep sup={rep.sweep_sup!r} flag={rep.discrepancy_flag}")


def criterion_4():
    rng = np.random.default_rng(4)
    worst = 0.0
    T = 0.002
    K, L = 1.0, 0.1
    w = rng.uniform(1e-3, math.pi / T, 100)
    got = passivity_rhs(discretize(PLike(K, K, L, L), "master", T), T, 1.0, w)
    worst = max(worst, float(np.max(np.abs(got - (K * T + 2 * L * np.cos(w * T))))))
    T = 0.005
    K, Kd, g = 2.0, 1.0, 1.0
    w = rng.uniform(1e-3, math.pi / T, 100)
    got = passivity_rhs(discretize(PDLike(Kd, K, K, g, g), "master", T), T, 1.0, w)
    worst = max(worst, float(np.max(np.abs(got - (K * T - 2 * Kd * g * np.cos(w * T))))))
    return record("C4 analytic rhs oracle", worst <= 1e-10, f"max |rhs - reduction| = {worst:.2e}")


def criterion_5():
    S0 = scattering_matrix(np.eye(2))
    a = not np.any(S0) and max_singular_value_2x2(S0) == 0.0 and identity_sweep(FrequencyGrid(np.array([1.0]))).worst_sigma == 0.0

    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(1000):
        S = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        P = S.conj().T @ S
        roots = np.roots([1.0, -np.trace(P).real, np.linalg.det(P).real])
        worst = max(worst, abs(max_singular_value_2x2(S) - math.sqrt(max(roots.real))))
    b = worst <= 1e-10

    law = PDLike()
    res = scattering_sweep(
        FrequencyGrid.default(0.005), REFERENCE_ROBOT, REFERENCE_ROBOT,
        continuous_coupling(law, "master"), continuous_coupling(law, "slave"),
    )
    c = res.worst_sigma <= 1 + 1e-6
    return record(
        "C5 scattering engine", a and b and c,
        f"(a) H=I->S=0 {a}; (b) max |sigma - oracle| {worst:.1e}; (c) max sigma {res.worst_sigma:.6f}",
    )


def _plateau(tr, wall=4.0, release=20.0):
    contact = np.nonzero(tr.q_s >= wall)[0]
    if contact.size == 0:
        return None
    t0 = tr.t[contact[0]]
    # settled part of the contact: last quarter before release
    window = (tr.t >= release - 0.25 * (release - t0)) & (tr.t < release)
    return float(np.max(np.abs(tr.q_s[window] - wall)))


def criterion_6(label: str, cfg: str, T: float):
    sc = bundled(cfg)
    assert sc.sampling.period == T
    start = time.perf_counter()
    tr = run_simulation(sc)
    elapsed = time.perf_counter() - start
    peak = float(np.max(np.abs(tr.q_m)))
    m = tracking_metrics(tr)
    plateau = _plateau(tr)
    e_min = energy_monitor(tr).min_energy
    checks = {
        "i": float(np.max(np.abs(tr.q_m - tr.q_s))) < peak,
        "ii": plateau is not None and plateau <= 0.05 * 4.0,
        "iii": m.final_position_error < 0.02 * peak,
        "iv": e_min >= -1e-6,
        "time": elapsed < 10.0,
    }
    detail = (
        f"T={T} max|e|={m.max_abs_position_error:.3f} peak q_m={peak:.3f} plateau dev={plateau} "
        f"final err={m.final_position_error:.2e} min E={e_min!r} t={elapsed:.2f}s "
        + " ".join(f"{k}:{'ok' if v else 'FAIL'}" for k, v in checks.items())
    )
    return record(f"C6 reference run {label}", all(checks.values()), detail)


def criterion_7():
    passive_sc = bundled("p_like_sec5")
    coarse_sc = replace(passive_sc, sampling=replace(passive_sc.sampling, period=0.2))
    e_passive = energy_monitor(run_simulation(passive_sc)).min_energy
    e_coarse = energy_monitor(run_simulation(coarse_sc)).min_energy
    bound = closed_form_bound(coarse_sc.law, "master", 0.2)
    code_passive = main(["check", "--config", "p_like_sec5"])
    code_coarse = main(["check", "--config", "p_like_sec5", "--set", "sampling.period=0.2"])
    ok = e_coarse < e_passive and code_coarse == 2 and code_passive == 0
    detail = (
        f"min E passive={e_passive!r} T=0.2 run={e_coarse!r}; check exit {code_passive} / {code_coarse}; "
        f"bound at T=0.2 = {bound!r} vs damping {coarse_sc.master.damping!r}"
    )
    return record("C7 violation contrast", ok, detail)


def criterion_8():
    results = {
        "p-like delay bound": check_gain_conditions(PLike(1.0, 1.0, 0.1, 0.1), DelayConfig(0.1, 0.1, 0.2))[0],
        "p-like delay bound perturbed": check_gain_conditions(PLike(1.0, 1.0, 0.05, 0.05), DelayConfig(0.1, 0.1, 0.2))[0],
        "ks>=km": check_gain_conditions(PDLike(K_m=2.0, K_s=2.0), DelayConfig())[0],
        "ks>=km-perturbed": check_gain_conditions(PDLike(K_m=2.0, K_s=1.999), DelayConfig())[0],
        "kd=nu/2kp": check_gain_conditions(PDDissipation(Kp=1.0, Kd=2.0), DelayConfig(nu=4.0))[0],
        "kd=nu/2kp-perturbed": check_gain_conditions(PDDissipation(Kp=1.0, Kd=2.001), DelayConfig(nu=4.0))[0],
    }
    delay_bound = results["p-like delay bound"]
    ok = (
        abs(delay_bound.lhs - 0.04) < 1e-12 and abs(delay_bound.rhs - 0.02) < 1e-12
        and all(r.passed for k, r in results.items() if not k.endswith("perturbed"))
        and not any(r.passed for k, r in results.items() if k.endswith("perturbed"))
    )
    return record("C8 gain conditions", ok, "; ".join(f"{k}={'pass' if r.passed else 'fail'}" for k, r in results.items()))


def criterion_9():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        codes = [main(["simulate", "--config", "pd_diss_sec5", "--out", str(tmp / d)]) for d in ("a", "b")]
        names = ("trace.csv", "positions.csv", "forces.csv", "operator_force.csv")
        identical = all((tmp / "a" / n).read_bytes() == (tmp / "b" / n).read_bytes() for n in names)
        round_trip = True
        for cfg in ("p_like_sec5", "pd_like_sec5", "pd_diss_sec5"):
            sc = bundled(cfg)
            path = tmp / f"{cfg}.dump"
            path.write_text(dump_config(sc))
            round_trip &= parse_config(path) == sc
    ok = codes == [0, 0] and identical and round_trip
    return record("C9 determinism and round trip", ok, f"exit codes {codes}, byte-identical {identical}, round trip {round_trip}")


def _check(result):
    passed, detail = result
    assert passed, detail


def test_c1_p_like_closed_form():
    _check(criterion_1())


def test_c2_pd_like_closed_form():
    _check(criterion_2())


def test_c3_pd_dissipation_discrepancy():
    _check(criterion_3())


def test_c4_analytic_rhs_oracle():
    _check(criterion_4())


def test_c5_scattering_engine():
    _check(criterion_5())


@pytest.mark.parametrize("label,cfg,T", REFERENCE_RUNS, ids=[r[0] for r in REFERENCE_RUNS])
def test_c6_reference_simulation(label, cfg, T):
    _check(criterion_6(label, cfg, T))


def test_c7_violation_contrast():
    _check(criterion_7())


def test_c8_gain_conditions():
    _check(criterion_8())


def test_c9_determinism_round_trip():
    _check(criterion_9())


def summary_lines() -> list[str]:
    return [f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}" for name, (ok, detail) in RESULTS.items()]


if __name__ == "__main__":
    for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5):
        fn()
    for run in REFERENCE_RUNS:
        criterion_6(*run)
    for fn in (criterion_7, criterion_8, criterion_9):
        fn()
    print("\n".join(summary_lines()))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
