"""Acceptance gate: every criterion at its stated tolerance, one line each."""

import itertools
import time

import numpy as np
import pytest

from spamqpt import hs, linalg, sim, tomo
from spamqpt.cli import BUILTIN_CONFIGS

B = hs.build_basis(2)
G = sim.true_gate(sim.NoiseModel.none(), B).mat
CORRECTED = ("corrected:0", "corrected:0.5", "corrected:1")


def f_e(g):
    return hs.gate_fidelity(g, hs.X_PI_2, B, "entanglement")


def per_run(result, tag, gi, metric):
    return np.array([getattr(r, metric) for r in result.records
                     if r.estimator == tag and r.grid_index == gi and not r.error])


def builtin_sweep(name):
    cfg = BUILTIN_CONFIGS[name]
    start = time.perf_counter()
    res = sim.sweep(cfg.noise_grid(), cfg.n_runs, cfg.design_obj(), cfg.estimators, cfg.base_seed)
    return res, time.perf_counter() - start


@pytest.fixture(scope="module")
def depol_sweep():
    return builtin_sweep("paper-fig2-depol")


@pytest.fixture(scope="module")
def coherent_sweep():
    return builtin_sweep("paper-fig1-coherent")


def test_1_exact_recovery(verdict):
    start = time.perf_counter()
    f4, f6 = sim.MINIMAL_DESIGN.frame(B), sim.OVERCOMPLETE_DESIGN.frame(B)
    i4, p4 = f4.m0 @ f4.s0, f4.m0 @ G @ f4.s0
    i6, p6 = f6.m0 @ f6.s0, f6.m0 @ G @ f6.s0
    ests = [tomo.standard_qpt(f4, p4)]
    ests += [tomo.spam_corrected_qpt(f4, i4, p4, p) for p in (0.0, 0.5, 1.0)]
    ests += [tomo.ols_qpt(f6, p6), tomo.overcomplete_spam_corrected_qpt(f6, i6, p6)]
    elapsed = time.perf_counter() - start
    worst = max(np.linalg.norm(e.g_hat.mat - G) for e in ests)
    ok = verdict(1, "exact recovery", worst < 1e-9 and elapsed < 1.0,
                 f"max ||G_hat - G||_F = {worst:.1e}, {elapsed:.3f} s")
    assert ok


def test_2_spam_bias_witness(verdict):
    f4 = sim.MINIMAL_DESIGN.frame(B)
    d = hs.depolarizing_superop(0.98, B).mat
    m, s = f4.m0 @ d, d @ f4.s0
    i, p = m @ s, m @ G @ s
    expected = 3 * 0.99 * (0.98**2 - 1) / 4
    std_err = f_e(tomo.standard_qpt(f4, p).g_hat) - f_e(G)
    corr = max(abs(f_e(tomo.spam_corrected_qpt(f4, i, p, q).g_hat) - f_e(G)) for q in (0.0, 0.5, 1.0))
    ok = abs(std_err - expected) < 1e-10 and corr < 1e-10
    verdict(2, "SPAM-bias witness", ok,
            f"standard error {std_err:.7f} vs formula {expected:.7f}, corrected max |error| {corr:.1e}")
    assert ok


def test_3_gauge_spectrum_invariance(verdict):
    design, noise = sim.MINIMAL_DESIGN, sim.NoiseModel.coherent(0.1)
    frame = design.frame(B)
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        ds = sim.simulate_dataset(design, noise, seed, B)
        spectra = [linalg.eigenvalues(tomo.spam_corrected_qpt(frame, ds.i_hat, ds.p_hat, p).g_hat.mat)
                   for p in (0.0, 0.5, 1.0)]
        for a, b in itertools.combinations(spectra, 2):
            worst = max(worst, linalg.eigen_delta(a, b))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 10
    verdict(3, "gauge-spectrum invariance", ok, f"max delta {worst:.1e} over 100 datasets, {elapsed:.2f} s")
    assert ok


def test_4_eigenvalue_error_sweep(verdict, depol_sweep):
    res, elapsed = depol_sweep
    n_grid = len(BUILTIN_CONFIGS["paper-fig2-depol"].grid)
    std = res.series("standard", "eigen_delta")
    monotone = bool(np.all(np.diff(std) > 0))
    ratio = std[-1] / std[0]
    flat = []
    for tag in CORRECTED:
        means = res.series(tag, "eigen_delta")
        ses = np.array([per_run(res, tag, gi, "eigen_delta").std(ddof=1) / np.sqrt(50) for gi in range(n_grid)])
        pooled = np.sqrt(np.mean(ses**2))
        flat.append((means.max() - means.min()) / pooled)
    ok = monotone and ratio > 5 and max(flat) < 4 and elapsed < 60
    verdict(4, "eigenvalue error vs SPAM", ok,
            f"standard monotone={monotone}, top/zero={ratio:.2f}; corrected spread/pooled SE "
            + ", ".join(f"{x:.2f}" for x in flat) + f"; sweep {elapsed:.1f} s")
    assert ok


def test_5_fidelity_error_sweeps(verdict, depol_sweep, coherent_sweep):
    res, t_depol = depol_sweep
    n_grid = len(BUILTIN_CONFIGS["paper-fig2-depol"].grid)
    worst_z = 0.0
    for tag in CORRECTED:
        for gi in range(n_grid):
            err = per_run(res, tag, gi, "fid_err_entanglement")
            worst_z = max(worst_z, abs(err.mean()) / (err.std(ddof=1) / np.sqrt(err.size)))
    top = n_grid - 1
    std_top = per_run(res, "standard", top, "abs_fid_err_entanglement").mean()
    corr_top = max(per_run(res, tag, top, "abs_fid_err_entanglement").mean() for tag in CORRECTED)
    gap = std_top / corr_top

    cres, t_coh = coherent_sweep
    ctop = len(BUILTIN_CONFIGS["paper-fig1-coherent"].grid) - 1
    c_std = per_run(cres, "standard", ctop, "abs_fid_err_entanglement").mean()
    c_corr = [per_run(cres, tag, ctop, "abs_fid_err_entanglement").mean() for tag in CORRECTED]
    elapsed = t_depol + t_coh
    ok = worst_z < 3 and gap > 10 and all(c < c_std for c in c_corr) and elapsed < 120
    verdict(5, "fidelity error vs SPAM", ok,
            f"corrected max |mean|/SE {worst_z:.2f}; standard/corrected at top {gap:.1f}x; "
            f"coherent phi=0.1 standard {c_std:.4f} vs corrected "
            + "/".join(f"{c:.4f}" for c in c_corr) + f"; {elapsed:.1f} s")
    assert ok


def test_6_shot_scaling(verdict):
    grid = [sim.NoiseModel.none()]
    means = []
    for shots in (500, 5000, 50000):
        design = sim.ExperimentDesign(shots=shots)
        res = sim.sweep(grid, 50, design, ["corrected:0.5"], base_seed=BUILTIN_CONFIGS["paper-fig2-depol"].base_seed)
        means.append(res.series("corrected:0.5", "eigen_delta")[0])
    ok = means[0] > means[1] > means[2]
    verdict(6, "shot scaling", ok, "mean delta " + " > ".join(f"{m:.2e}" for m in means))
    assert ok


def test_7_overcomplete_consistency(verdict):
    f4, f6 = sim.MINIMAL_DESIGN.frame(B), sim.OVERCOMPLETE_DESIGN.frame(B)
    i6, p6 = f6.m0 @ f6.s0, f6.m0 @ G @ f6.s0
    err_exact = np.linalg.norm(tomo.overcomplete_spam_corrected_qpt(f6, i6, p6).g_hat.mat - G)

    ds = sim.simulate_dataset(sim.MINIMAL_DESIGN, sim.NoiseModel.coherent(0.08), 0, B)
    err_square = max(
        np.linalg.norm(tomo.overcomplete_spam_corrected_qpt(f4, ds.i_hat, ds.p_hat, gauge_p=p).g_hat.mat
                       - tomo.spam_corrected_qpt(f4, ds.i_hat, ds.p_hat, p).g_hat.mat)
        for p in (0.0, 0.5, 1.0)
    )

    d = hs.depolarizing_superop(0.98, B).mat
    i, p = f6.m0 @ d @ d @ f6.s0, f6.m0 @ d @ G @ d @ f6.s0
    err_approx = np.linalg.norm(tomo.overcomplete_spam_corrected_qpt(f6, i, p).g_hat.mat
                                - tomo.overcomplete_approx_diagnostic(f6, i, p).mat)
    ok = err_exact < 1e-9 and err_square < 1e-9 and err_approx < 1e-8
    verdict(7, "overcomplete consistency", ok,
            f"exact {err_exact:.1e}, square-frame {err_square:.1e}, approximation {err_approx:.1e}")
    assert ok


def test_8_linalg_oracles(verdict):
    rng = np.random.default_rng(2024)
    checks = {}

    mp = True
    for m, n in [(4, 4), (6, 4), (4, 6), (5, 3)]:
        a = rng.normal(size=(m, n))
        x = linalg.pinv(a)
        mp &= all(np.allclose(lhs, rhs, atol=1e-9) for lhs, rhs in
                  [(a @ x @ a, a), (x @ a @ x, x), ((a @ x).T, a @ x), ((x @ a).T, x @ a)])
    checks["Moore-Penrose"] = mp

    a = rng.normal(size=(6, 6))
    best = np.linalg.norm(a - linalg.truncate_to_rank(a, 4))
    checks["Eckart-Young"] = all(
        best <= np.linalg.norm(a - rng.normal(size=(6, 4)) @ rng.normal(size=(4, 6))) for _ in range(200)
    )

    e = np.eye(4) + 0.05 * rng.normal(size=(4, 4))
    r = linalg.frac_power(e, 0.5)
    checks["sqrt round-trip"] = np.linalg.norm(r @ r - e) / np.linalg.norm(e) < 1e-10

    ok_delta = True
    for n in range(1, 7):
        u = rng.normal(size=n) + 1j * rng.normal(size=n)
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        brute = min(sum(abs(u[i] - v[j]) for i, j in enumerate(perm)) for perm in itertools.permutations(range(n))) / n
        ok_delta &= abs(linalg.eigen_delta(u, v) - brute) < 1e-12
    checks["eigen_delta brute force"] = ok_delta

    A, Bm = np.array([[1.0, 0.0]]), np.array([[1.0], [1.0]])
    checks["(AB)+ != B+A+"] = not np.allclose(linalg.pinv(A @ Bm), linalg.pinv(Bm) @ linalg.pinv(A))

    ok = all(checks.values())
    verdict(8, "linalg oracle suite", ok, ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert ok
