"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the whole file takes about 90
minutes on one core, more than half of it in the N=12 entanglement run of criterion 11.
"""

import math
import time

import numpy as np
import pytest

from slowop import dmrg, dynamics as dy, exact, probes
from slowop.ising import IsingParams, build_hamiltonian
from slowop.opmps import entropy_profile
from slowop.pauli import embed

pytestmark = pytest.mark.slow

# every slowest-operator MPS computed in this module, checked by criterion 11
MPS_POOL: list = []


@pytest.fixture
def report(capsys):
    def emit(criterion: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}")
        assert ok, detail

    return emit


def _dmrg(build, params, N, schedule):
    run = dmrg.minimize(build(params, N), schedule)
    MPS_POOL.append((f"{build.__name__} g={params.g} h={params.h} N={N}", run.mps))
    return run


def test_c01_dmrg_matches_exact(report):
    start = time.perf_counter()
    worst, lines = 0.0, []
    ok = True
    for g, h in ((1.05, 0.1), (0.4, 1.05), (1.05, 0.0)):
        p = IsingParams(g, h)
        cases = [(dmrg.build_local_effective, exact.find_local, dmrg.SweepSchedule.local_default(), N) for N in (3, 4, 5, 6)]
        cases += [(dmrg.build_ti_effective, exact.find_ti, dmrg.SweepSchedule.ti_default(), N) for N in (3, 4, 5)]
        for build, find, sched, N in cases:
            lam_e = find(p, N).lam
            lam_d = _dmrg(build, p, N, sched).result.lam
            if lam_e < 1e-10:
                # zero mode: a relative error is undefined, compare absolutely
                err, good = abs(lam_d - lam_e), abs(lam_d - lam_e) <= 1e-6
            else:
                err = abs(lam_d - lam_e) / lam_e
                good = err <= 1e-4
                worst = max(worst, err)
            ok &= good
            if not good:
                lines.append(f"{build.__name__} g={g} h={h} N={N}: {lam_d} vs {lam_e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 600
    report(1, ok, f"worst relative diff {worst:.2e} (tol 1e-4), {elapsed:.0f}s (limit 600s) {'; '.join(lines)}")


def test_c02_integrable_zero_modes(report):
    g0 = max(exact.find_local(IsingParams(0.0, h), N).lam for h in (0.5, 1.05) for N in (2, 3, 4, 5, 6))
    h0_ti = max(exact.find_ti(IsingParams(g, 0.0), N).lam for g in (0.5, 1.0, 1.5) for N in range(2, 7))
    # a one-site cell orthogonal to H has no conserved component: lambda = 4 g^2 exactly
    n1 = max(abs(exact.find_ti(IsingParams(g, 0.0), 1).lam - 4 * g * g) for g in (0.5, 1.0, 1.5))
    p = IsingParams(1.05, 0.0)
    h0_local = {N: exact.find_local(p, N).lam for N in range(1, 7)}
    for N in (7, 8):
        h0_local[N] = _dmrg(dmrg.build_local_effective, p, N, dmrg.SweepSchedule.local_default()).result.lam
    low = min(h0_local.values())
    ok = g0 <= 1e-10 and h0_ti <= 1e-6 and n1 <= 1e-10 and low > 0.01
    report(
        2,
        ok,
        f"g=0 local max {g0:.1e} (<=1e-10), h=0 TI N=2..6 max {h0_ti:.1e} (<=1e-6), N=1 equals 4g^2 to {n1:.1e}, "
        f"h=0 local min {low:.4f} at N={min(h0_local, key=h0_local.get)} (>0.01)",
    )


def test_c03_diffusion_mode_slope(report):
    p = IsingParams(1.05, 0.1)
    lams = {N: probes.optimized_diffusion_mode(p, N).lam for N in range(12, 17)}
    slopes = [r.instant_slope for r in probes.instant_slopes(lams)]
    ok = all(abs(s + 2) <= 0.3 for s in slopes)
    report(3, ok, "slopes N=12..16 " + ", ".join(f"{s:.3f}" for s in slopes) + " (target -2 +- 0.3)")


def test_c04_integrable_local_slope(report):
    p = IsingParams(1.05, 0.0)
    sched = dmrg.SweepSchedule([16, 32, 64, 128, 256], inner_tol=1e-7)
    lams = {N: _dmrg(dmrg.build_local_effective, p, N, sched).result.lam for N in range(12, 17)}
    slopes = [r.instant_slope for r in probes.instant_slopes(lams)]
    ok = all(-4.5 <= s <= -3.0 for s in slopes)
    report(4, ok, "slopes N=12..16 " + ", ".join(f"{s:.3f}" for s in slopes) + " (window [-4.5, -3.0])")


def test_c05_transition_point(report):
    N, L, g = 6, 15, 1.05
    records = {}
    for h in np.round(np.arange(0.0, 0.6 + 1e-9, 0.02), 2):
        p = IsingParams(g, float(h))
        O = exact.find_ti(p, N).on_chain(L)
        records[float(h)] = [
            probes.OverlapRecord(g, float(h), N, probes.ProbeKind(tag, probes.TRANSLATION_INVARIANT), probes.overlap(O, probes.ti_probe(tag, p, N, L)))
            for tag in ("magnetization_x", "magnetization_z")
        ]
    h_star = probes.detect_transition(records, 0.05)
    ok = h_star is not None and abs(h_star - 0.33) <= 0.05
    report(5, ok, f"h* = {h_star} (target 0.33 +- 0.05)")


def test_c06_short_time_law(report):
    p = IsingParams(1.05, 0.1)
    res = exact.find_local(p, 6)
    t_max = 0.2 / math.sqrt(res.lam)
    ts = np.linspace(0, t_max, 41)
    C = dy.exact_correlator(res.operator(), p, 12, ts).values
    dev = float(np.max(np.abs(C - (1 - res.lam * ts**2 / 2))))
    report(6, dev <= 0.01, f"max |C - (1 - lambda t^2/2)| = {dev:.2e} for t <= {t_max:.3f} (tol 1e-2)")


def test_c07_propagator_fidelity(report):
    p = IsingParams(1.05, 0.1)
    L = 8
    H = build_hamiltonian(p, L, periodic=True)
    es = dy.eigensystem(p, L)
    rng = np.random.default_rng(7)
    psi = rng.standard_normal(2**L) + 1j * rng.standard_normal(2**L)
    psi /= np.linalg.norm(psi)
    err = defect = 0.0
    for t in np.linspace(0, 10, 11):
        out = dy.chebyshev_evolve(psi, H, float(t))
        err = max(err, float(np.linalg.norm(out - dy.dense_propagate(psi, es, float(t)))))
        defect = max(defect, abs(float(np.vdot(out, out).real) - 1))
    ok = err <= 1e-8 and defect <= 1e-12
    report(7, ok, f"state error {err:.1e} (tol 1e-8), norm defect {defect:.1e} (tol 1e-12)")


def test_c08_stochastic_trace(report):
    p = IsingParams(1.05, 0.1)
    L = 10
    O = exact.find_local(p, 6).operator()
    ts = np.linspace(0, 20, 81)
    ref = dy.exact_correlator(O, p, L, ts).values
    cfg = dy.ChebyshevConfig(e_bar="auto")
    seeds = (0, 1, 2)

    def rms(K):
        errs = [dy.two_point_correlator(O, p, L, ts, K=K, seed=s, cfg=cfg).values - ref for s in seeds]
        return float(np.sqrt(np.mean(np.square(errs)))), float(np.max(np.abs(errs[0])))

    rms50, max50 = rms(50)
    rms200, _ = rms(200)
    ratio = rms50 / rms200
    # 1/sqrt(K) predicts a ratio of 2; three seeds give a band of roughly +-30%
    ok = max50 <= 5e-2 and 1.4 <= ratio <= 2.8
    report(8, ok, f"max deviation K=50 {max50:.2e} (tol 5e-2), rms ratio K=50/K=200 {ratio:.2f} (expect ~2, band [1.4, 2.8])")


def test_c09_otoc_structure(report):
    p = IsingParams(1.05, 0.1)
    N, L = 6, 11
    O = exact.find_local(p, N).operator()
    outside = max(
        abs(dy.otoc(O, ax, f"center+{k}", p, L, [0.0]).values[0]) for ax in "xyz" for k in (3, 4, 5)
    )
    early = {ax: dy.otoc(O, ax, "center", p, L, [0.05]).values[0] for ax in "xyz"}
    mags = {ax: abs(probes.overlap(O, probes.magnetization(ax, N))) for ax in "xz"}
    ordered = early["x"] < early["z"] < early["y"]
    ok = outside <= 1e-10 and ordered
    report(
        9,
        ok,
        f"outside-support OTOC(0) max {outside:.1e} (tol 1e-10); center OTOC(t=0.05) "
        f"x={early['x']:.4f} z={early['z']:.4f} y={early['y']:.4f} (expected x < z < y); "
        f"|overlap| x={mags['x']:.3f} z={mags['z']:.3f}",
    )


def _revival(C, ts):
    """Largest maximum after the initial decay (the full-amplitude wrap-around revival)."""
    first_min = int(np.argmax(np.diff(C) > 0))
    peak = first_min + int(np.argmax(C[first_min:]))
    return ts[peak], C[peak]


def test_c10_revivals(report):
    ts = np.arange(0, 40 + 1e-9, 0.05)
    p0, p4 = IsingParams(1.05, 0.0), IsingParams(1.05, 0.4)
    O0 = exact.find_local(p0, 6).operator()
    O4 = exact.find_local(p4, 6).operator()
    t8, c8 = _revival(dy.exact_correlator(O0, p0, 8, ts).values, ts)
    t10, c10 = _revival(dy.exact_correlator(O0, p0, 10, ts).values, ts)
    # the same revival at h=0.4: largest value near the h=0 revival time
    C4 = dy.exact_correlator(O4, p4, 10, ts).values
    c10_h = float(np.max(C4[np.abs(ts - t10) <= 2.0]))
    ok = c10 > 0.2 and t10 > t8 and c10_h < c10 / 2
    report(
        10,
        ok,
        f"h=0 peak {c8:.3f} at t={t8:.2f} (L=8), {c10:.3f} at t={t10:.2f} (L=10); "
        f"h=0.4 peak {c10_h:.3f} near t={t10:.2f} (L=10, must be < {c10 / 2:.3f})",
    )


def test_c11_entropy_bounds(report):
    p = IsingParams(1.05, 0.1)
    # sweep-capped: tight convergence at D=256 costs hours on one core, and the
    # quantity under test is the entanglement, not lambda to 1e-7
    sched = dmrg.SweepSchedule([16, 32, 64, 128, 256], inner_tol=1e-7, max_sweeps=10, max_restarts=2)
    run = _dmrg(dmrg.build_local_effective, p, 12, sched)
    worst = -np.inf
    for _, m in MPS_POOL:
        prof = entropy_profile(m.normalized())
        worst = max(worst, float(np.max(prof.entropy - prof.bound())))
    prof = entropy_profile(run.mps.normalized())
    frac = float(np.max(prof.entropy) / np.max(prof.max_bound))
    ok = worst <= 1e-9 and frac < 0.6
    report(
        11,
        ok,
        f"{len(MPS_POOL)} MPS, max excess over bound {worst:.1e} (tol 1e-9); N=12 max entropy {np.max(prof.entropy):.3f} "
        f"= {frac:.3f} of bipartition bound (< 0.6), {np.max(prof.entropy) / prof.log_D:.3f} of log D, "
        f"D={max(run.mps.bond_dims)}, lambda={run.result.lam:.6f}, sweeps converged={run.converged}",
    )


def test_c12_l_independence(report):
    worst = 0.0
    for g, h in ((1.05, 0.1), (0.4, 1.05), (1.05, 0.0)):
        p = IsingParams(g, h)
        for N in (2, 3, 4):
            O = exact.find_local(p, N).operator()
            vals = [exact.evaluate_lambda(embed(O, L, 0), p, L) for L in (N + 2, N + 4, N + 6)]
            worst = max(worst, max(vals) - min(vals))
    report(12, worst <= 1e-10, f"max spread over L in {{N+2, N+4, N+6}} {worst:.1e} (tol 1e-10)")
