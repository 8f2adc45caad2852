"""Acceptance suite.

Each criterion records one ``[PASS]`` / ``[FAIL]`` line, printed in the
"acceptance criteria" section of the pytest summary, and then asserts so a
failure is also reported by pytest as usual.
"""

import math
import sys
import time

import numpy as np
import pytest
from scipy.integrate import trapezoid

from fpsqkd import montecarlo as mc
from fpsqkd.cli import run_captured
from fpsqkd.decoy_rates import (
    DecoyParams,
    compare_published,
    cutoff_distance,
    distance_sweep,
    model_stats,
    secure_key_rate,
)
from fpsqkd.link_channel import LinkParams
from fpsqkd.sidechannel import (
    Waveform,
    estimate_g1,
    normalize,
    overlap,
    rect_energy,
    spectrum,
)
from fpsqkd.source_model import (
    SourceConfig,
    coherence_suppression,
    generate_pulse_train,
    mu_for_level,
    photons_per_pulse,
    voa_for_target_mu,
)

RESULTS: dict[int, str] = {}
LINK20 = LinkParams(distance=20)
D = DecoyParams()


def report(number: int, title: str, checks: dict[str, bool], detail: str = "") -> None:
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    if failed:
        line += f"; failed: {', '.join(failed)}"
    RESULTS[number] = line
    assert ok, line


def rel(x: float, ref: float) -> float:
    return abs(x - ref) / abs(ref)


def test_criterion_1_matching_subset():
    t0 = time.perf_counter()
    s = model_stats(LINK20, D)
    elapsed = time.perf_counter() - t0
    report(1, "20 km gains and error rates", {
        "Q_mu": rel(s.q_mu, 4.87e-2) <= 5e-3,
        "Q_nu2": rel(s.q_nu2, 1.68e-3) <= 1e-2,
        "E_mu": abs(100 * s.e_mu - 1.01) <= 0.02,
        "e1": abs(100 * s.e1 - 1.01) <= 0.02,
        "runtime": elapsed < 0.1,
    }, f"Q_mu={s.q_mu:.4e} Q_nu2={s.q_nu2:.4e} E_mu={100 * s.e_mu:.3f}% e1={100 * s.e1:.3f}%")


def test_criterion_2_documented_discrepancies():
    (row,) = distance_sweep(D, LINK20, [20], mode="exact")
    s, r = row.stats, row.result
    flags = {c.quantity: c.discrepant for c in compare_published(row)}
    _, _, err = run_captured(["analyze", "--distance", "20"])
    flagged_in_report = all(
        any(line.startswith(q) and "DISCREPANCY" in line for line in err.splitlines())
        for q in ("Q_nu1", "Q1", "secure_bps")
    )
    report(2, "oracle values and flagged divergence", {
        "Q_nu1": rel(s.q_nu1, 1.24e-2) <= 5e-3,
        "Q1": rel(s.q1, 3.03e-2) <= 5e-3,
        "R": rel(r.secure_rate, 986e3) <= 5e-3,
        "flags": flags["Q_nu1"] and flags["Q1"] and flags["secure_bps"],
        "report": flagged_in_report,
        "order of magnitude": 1e5 <= r.secure_rate <= 2e6,
    }, f"Q_nu1={s.q_nu1:.4e} Q1={s.q1:.4e} R={r.secure_rate / 1e3:.1f} Kb/s")


def test_criterion_3_distance_sweep():
    t0 = time.perf_counter()
    rows = distance_sweep(D, LinkParams(), np.arange(0.0, 150.5, 1.0))
    cutoff = cutoff_distance(D, LinkParams())
    elapsed = time.perf_counter() - t0
    qber = [r.stats.e_mu for r in rows]
    rate = [r.result.secure_rate for r in rows]
    lk0 = LinkParams(distance=0)
    q0 = rows[0].stats.q_mu
    expected_e0 = (lk0.misalignment * (q0 - lk0.background_yield) + 0.5 * lk0.background_yield) / q0
    beyond = secure_key_rate(LinkParams(distance=cutoff + 1), D).secure_rate
    report(3, "0-150 km sweep trends and finite cutoff", {
        "qber nondecreasing": all(b >= a for a, b in zip(qber, qber[1:])),
        "rate nonincreasing": all(b <= a for a, b in zip(rate, rate[1:])),
        "finite cutoff": math.isfinite(cutoff) and beyond == 0.0,
        "qber at 0 km": abs(qber[0] - expected_e0) < 1e-12 and abs(qber[0] - lk0.misalignment) < 1e-3,
        "runtime": elapsed < 1.0,
    }, f"E(0)={100 * qber[0]:.4f}% cutoff={cutoff:.1f} km")


def test_criterion_4_monte_carlo():
    t0 = time.perf_counter()
    r6 = mc.run(mc.MCConfig(1_000_000, seed=4))
    within = all(abs(c.z) <= 3 for c in mc.compare_with_model(r6, LINK20, D) if c.quantity != "sifted_fraction")
    r7 = mc.run(mc.MCConfig(10_000_000, seed=7))
    est = mc.estimate_key_rate(r7, D).secure_rate
    ref = secure_key_rate(LINK20, D, "decoy").secure_rate
    elapsed = time.perf_counter() - t0
    report(4, "Monte Carlo convergence", {
        "1e6 within 3 sigma": within,
        "1e7 rate within 10%": rel(est, ref) <= 0.10,
        "runtime": elapsed < 60,
    }, f"R_mc={est / 1e3:.1f} Kb/s vs {ref / 1e3:.1f} Kb/s, {elapsed:.1f} s")


def test_criterion_5_decoy_soundness():
    grid = [(dist, mu) for dist in np.linspace(0, 200, 10) for mu in (0.3, 0.4, 0.5, 0.6, 0.8)]
    bad = []
    for dist, mu in grid:
        d = DecoyParams(mu=mu, nu1=mu / 4, nu2=mu / 30)
        s = model_stats(LinkParams(distance=float(dist)), d)
        if not (s.y1_lower <= s.y1 and s.e1_upper >= s.e1):
            bad.append((dist, mu))
    report(5, "decoy bounds sound on the grid", {
        "grid size": len(grid) >= 50,
        "all sound": not bad,
    }, f"{len(grid)} combinations")


def _gauss(tau, center=0.0, chirp=0.0, dt=None):
    dt = dt or tau / 20
    t = -12 * tau + dt * np.arange(int(round(24 * tau / dt)) + 1)
    u = t - center
    return normalize(Waveform(t[0], dt, np.exp(-(u**2) / (2 * tau**2) + 1j * chirp * u**2)))


def _dense_overlap(f, g, tau, dt):
    t = np.arange(-14 * tau, 14 * tau + dt / 20, dt / 10)
    fa, gb = f(t), g(t)
    num = trapezoid(np.conj(fa) * gb, t)
    return abs(num) / math.sqrt(trapezoid(abs(fa) ** 2, t) * trapezoid(abs(gb) ** 2, t))


def test_criterion_6_sidechannel_identities():
    tau = 100e-12
    dt = tau / 20
    rng = np.random.default_rng(6)
    bounded = True
    for _ in range(50):
        a = Waveform(0.0, dt, rng.normal(size=64) + 1j * rng.normal(size=64))
        b = Waveform(dt * rng.integers(-10, 10), dt, rng.normal(size=80) + 1j * rng.normal(size=80))
        bounded &= abs(overlap(normalize(a), normalize(b)).s_lm) <= 1 + 1e-12
    a = _gauss(tau)
    self_ok = abs(abs(overlap(a, a).s_lm) - 1) <= 1e-9

    env = lambda c, k: (lambda t: np.exp(-((t - c) ** 2) / (2 * tau**2) + 1j * k * (t - c) ** 2))
    offset_ok = chirp_ok = True
    for delta in (0.5, 1.0, 2.0):
        closed = math.exp(-(delta**2) / 4)
        oracle = _dense_overlap(env(0, 0), env(delta * tau, 0), tau, dt)
        got = abs(overlap(a, _gauss(tau, center=delta * tau)).s_lm)
        offset_ok &= abs(got - closed) <= 1e-6 and abs(oracle - closed) <= 1e-6
    for ct in (0.5, 1.0, 2.0):
        c = ct / tau**2
        closed = (1 + ct**2) ** -0.25
        oracle = _dense_overlap(env(0, 0), env(0, c), tau, dt)
        got = abs(overlap(a, _gauss(tau, chirp=c)).s_lm)
        chirp_ok &= abs(got - closed) <= 1e-6 and abs(oracle - closed) <= 1e-6

    w = _gauss(tau, center=0.3 * tau, chirp=0.5 / tau**2)
    parseval = abs(rect_energy(spectrum(w)) - rect_energy(w)) <= 1e-9
    report(6, "side-channel overlap identities", {
        "|S| <= 1": bool(bounded),
        "self overlap": self_ok,
        "offset closed form": bool(offset_ok),
        "chirp closed form": bool(chirp_ok),
        "Parseval": parseval,
    })


def test_criterion_7_source_budget():
    cfg = SourceConfig()
    n = photons_per_pulse(cfg)
    voa = voa_for_target_mu(cfg, 0.5)
    mu_low = mu_for_level(0.5, 14.76)
    _, _, err = run_captured(["source", "--pulses", "1"])
    rtt_lines = "\n".join(l for l in err.splitlines() if "round-trip time" in l)
    report(7, "source photon budget and RTT report", {
        "photons": rel(n, 5.99e6) <= 0.01,
        "VOA": round(voa, 1) == 70.8 and abs(voa - 70) <= 1.5,
        "mu low": abs(mu_low - 0.0167) <= 2e-4,
        "RTT reported": "7.2050 ps" in rtt_lines and "20.0000 ps [DISCREPANCY" in rtt_lines,
    }, f"photons={n:.4e} VOA={voa:.2f} dB mu_low={mu_low:.5f}")


def test_criterion_8_coherence_suppression():
    cfg = SourceConfig()
    sup = coherence_suppression(cfg, rtt=20e-12)
    n = 10_000
    fixed = [("High", "P45")] * n
    random_train = generate_pulse_train(cfg, n, fixed, rng_seed=8)
    control = generate_pulse_train(cfg, n, fixed, rng_seed=8, random_phase=False)
    g_rand = abs(estimate_g1(random_train, cfg, cfg.period, n).value)
    g_ctrl = abs(estimate_g1(control, cfg, cfg.period, n).value)
    report(8, "coherence suppression and g1", {
        "passes": sup.passes_per_period == 500,
        "suppression": sup.suppression_dB_lower_bound >= 500,
        "random phase": g_rand <= 0.03,
        "control": g_ctrl >= 0.99,
    }, f"|g1| random={g_rand:.4f} control={g_ctrl:.4f}")


def test_criterion_9_determinism(tmp_path):
    from fpsqkd.sidechannel import gaussian_pulse, write_waveform_csv

    wa, wb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_waveform_csv(wa, gaussian_pulse(400e-12))
    write_waveform_csv(wb, gaussian_pulse(400e-12, center=100e-12))
    commands = [
        ["analyze", "--sweep", "0:100:10", "--mode", "decoy"],
        ["simulate", "--pulses", "300000", "--seed", "9"],
        ["sidechannel", str(wa), str(wb)],
        ["source", "--pulses", "64", "--seed", "9"],
        ["analyze", "--dump-config"],
    ]
    identical = all(run_captured(c) == run_captured(c) for c in commands)
    cfg = mc.MCConfig(3 * mc.BLOCK_SIZE + 17, seed=9)
    invariant = mc.run(cfg, workers=1) == mc.run(cfg, workers=3)
    cli_invariant = run_captured(["simulate", "--pulses", "200000", "--seed", "5", "--workers", "1"]) == \
        run_captured(["simulate", "--pulses", "200000", "--seed", "5", "--workers", "2"])
    report(9, "determinism and worker invariance", {
        "repeat runs identical": identical,
        "worker invariance": invariant and cli_invariant,
    })


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
