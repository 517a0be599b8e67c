"""Acceptance gate: eleven product-level criteria, one verdict line each.

Each test prints a single ``PASS``/``FAIL`` line with the measured quantity
so the gate can be audited from the test log.  Monte Carlo sizes, tolerances,
and time budgets are fixed; seeds make every run identical.
"""

import time
import warnings

import numpy as np
import pytest

from betaquant.clusters import classify_residuals
from betaquant.errors import BoundaryWarning
from betaquant.inference import beta_from_speed, bootstrap_intervals, convergence_speed
from betaquant.pipeline import RunConfig, run_pipeline
from betaquant.quantile import QuantileFit, fit_quantile
from betaquant.simulate import DgpSpec, generate
from betaquant.spatial import fit_dsqr, fit_ivqr

from helpers import brute_force_objective, random_instance

ORACLE_TAUS = (0.1, 0.3, 0.5, 0.7, 0.9)


def _verdict(num: int, slug: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion-{num:02d} {slug}: {detail}"
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def ivqr_mc():
    """Shared Monte Carlo: 200 draws each at rho = 0.5 and rho = 0."""
    t0 = time.perf_counter()
    rho_half, dsqr_half, rho_zero = [], [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        for rep in range(200):
            dat = generate(
                DgpSpec(n=400, rho=0.5, theta=(1.0, 2.0, -2.0),
                        error_scale=0.35, k=5, seed=1000 + rep)
            )
            rho_half.append(fit_ivqr(dat.design, dat.outcome, dat.weights, 0.5).rho)
            dsqr_half.append(fit_dsqr(dat.design, dat.outcome, dat.weights, 0.5).rho)
            dat0 = generate(
                DgpSpec(n=400, rho=0.0, theta=(1.0, 2.0, -2.0),
                        error_scale=0.35, k=5, seed=2000 + rep)
            )
            rho_zero.append(fit_ivqr(dat0.design, dat0.outcome, dat0.weights, 0.5).rho)
    return {
        "rho_half": np.asarray(rho_half),
        "dsqr_half": np.asarray(dsqr_half),
        "rho_zero": np.asarray(rho_zero),
        "elapsed": time.perf_counter() - t0,
    }


def test_criterion_01_qr_oracle_equivalence():
    # 200 small instances; the solver objective must match exhaustive
    # enumeration of exact-fit subsets to 1e-9 relative, under 60 s.
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(200):
        X, y = random_instance(rng)
        tau = ORACLE_TAUS[i % len(ORACLE_TAUS)]
        fit = fit_quantile(X, y, tau)
        oracle = brute_force_objective(X, y, tau)
        rel = abs(fit.objective - oracle) / max(1.0, abs(oracle))
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60.0
    _verdict(1, "qr-oracle-equivalence",
             ok, f"max relative objective gap {worst:.3e} over 200 instances "
                 f"in {elapsed:.1f}s")


def test_criterion_02_subgradient_bounds():
    # n_neg <= n tau <= n_neg + n_zero on every fit, enforced at
    # construction; a tampered fit must be rejected outright.
    rng = np.random.default_rng(102)
    checked = 0
    for i in range(100):
        X, y = random_instance(rng)
        tau = ORACLE_TAUS[i % len(ORACLE_TAUS)]
        fit = fit_quantile(X, y, tau)
        n = y.shape[0]
        tol = 1e-8 * max(1.0, float(np.max(np.abs(fit.residuals))))
        n_zero = int(np.sum(np.abs(fit.residuals) <= tol))
        n_neg = int(np.sum(fit.residuals < -tol))
        assert fit.n_zero == n_zero and fit.n_neg == n_neg
        assert n_neg <= n * tau + 1e-9
        assert n * tau <= n_neg + n_zero + 1e-9
        checked += 1
    X, y = random_instance(rng, n=20, n_columns=2)
    fit = fit_quantile(X, y, 0.5)
    with pytest.raises(AssertionError):
        QuantileFit(
            tau=0.5,
            coefficients=fit.coefficients,
            residuals=fit.residuals + 10.0,
            objective=fit.objective,
            dual_objective=fit.dual_objective,
            n_iterations=fit.n_iterations,
        )
    _verdict(2, "subgradient-bounds",
             checked == 100, f"bounds held on {checked}/100 fits and the "
                             f"constructor rejected a tampered fit")


def test_criterion_03_equivariances():
    # Regression shift, positive scale, and negative scale with tau
    # mirrored, all to 1e-8 on 100 instances.  Continuous tau keeps n * tau
    # non-integral, so the minimizer is almost surely unique and the
    # equivariances are exact rather than set-valued.
    rng = np.random.default_rng(103)
    worst = 0.0
    for i in range(100):
        X, y = random_instance(rng)
        tau = float(rng.uniform(0.1, 0.9))
        base = fit_quantile(X, y, tau)
        gamma = rng.uniform(-2.0, 2.0, X.shape[1])
        shifted = fit_quantile(X, y + X @ gamma, tau)
        worst = max(worst, float(np.max(np.abs(
            shifted.coefficients - (base.coefficients + gamma)))))
        c = float(rng.uniform(0.5, 3.0))
        scaled = fit_quantile(X, c * y, tau)
        worst = max(worst, float(np.max(np.abs(scaled.coefficients - c * base.coefficients))))
        mirrored = fit_quantile(X, -c * y, 1.0 - tau)
        worst = max(worst, float(np.max(np.abs(
            mirrored.coefficients - (-c) * base.coefficients))))
    ok = worst <= 1e-8
    _verdict(3, "equivariances",
             ok, f"max coefficient deviation {worst:.3e} over 100 instances")


def test_criterion_04_ivqr_recovery(ivqr_mc):
    med_half = float(np.median(ivqr_mc["rho_half"]))
    med_zero = float(np.median(ivqr_mc["rho_zero"]))
    elapsed = ivqr_mc["elapsed"]
    ok = abs(med_half - 0.5) <= 0.05 and abs(med_zero) <= 0.05 and elapsed < 600.0
    _verdict(4, "ivqr-recovery",
             ok, f"median rho-hat {med_half:.3f} (truth 0.5) and "
                 f"{med_zero:+.3f} (truth 0), 200 replicates each in {elapsed:.0f}s")


def test_criterion_05_dsqr_agreement(ivqr_mc):
    med_diff = float(np.median(np.abs(ivqr_mc["rho_half"] - ivqr_mc["dsqr_half"])))
    ok = med_diff <= 0.1
    _verdict(5, "dsqr-agreement",
             ok, f"median |rho difference| {med_diff:.3f} over 200 replicates")


def test_criterion_06_heteroskedastic_slope_recovery():
    # Slopes move linearly in the error quantile; estimates at three
    # quantiles must track the closed-form truth to MAE <= 0.05.
    taus = (0.25, 0.5, 0.75)
    errors = []
    for rep in range(100):
        dat = generate(
            DgpSpec(n=800, rho=0.0, theta=(0.5, 1.0, -1.0), delta=(0.4, 0.2),
                    error_scale=0.5, seed=3000 + rep)
        )
        for tau in taus:
            fit = fit_quantile(dat.design, dat.outcome, tau)
            truth = dat.truth.theta_at(tau)
            errors.extend(np.abs(fit.coefficients[1:] - truth[1:]))
    mae = float(np.mean(errors))
    ok = mae <= 0.05
    _verdict(6, "heteroskedastic-slope-recovery",
             ok, f"slope MAE {mae:.4f} at taus {taus} over 100 replicates")


def test_criterion_07_upper_tail_profile():
    # With spatial dependence amplified above the 0.75 error quantile, the
    # estimated rho at tau = 0.9 should exceed the one at tau = 0.1 in at
    # least 90% of replicates.
    wins = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        for rep in range(100):
            dat = generate(
                DgpSpec(n=200, rho=0.2, theta=(0.5, 1.0, -1.0), error_scale=0.5,
                        profile="upper-tail", high_rho=0.8, threshold=0.75,
                        seed=5000 + rep)
            )
            lo = fit_ivqr(dat.design, dat.outcome, dat.weights, 0.1).rho
            hi = fit_ivqr(dat.design, dat.outcome, dat.weights, 0.9).rho
            wins += int(hi > lo)
    ok = wins >= 90
    _verdict(7, "upper-tail-profile",
             ok, f"rho-hat(0.9) > rho-hat(0.1) in {wins}/100 replicates")


def test_criterion_08_bootstrap_coverage():
    # Percentile intervals at level 0.90 must cover the true median slopes
    # at an empirical rate inside [0.85, 0.95] over 500 trials.
    truth = np.array([1.0, -1.0])
    covered = 0
    total = 0
    for trial in range(500):
        dat = generate(
            DgpSpec(n=200, rho=0.0, theta=(0.5, 1.0, -1.0), error_scale=1.0,
                    seed=4000 + trial)
        )
        iv = bootstrap_intervals(
            dat.design, dat.outcome, 0.5, B=200, level=0.90, seed=trial
        )
        for j in (1, 2):
            covered += int(iv.lower[j] <= truth[j - 1] <= iv.upper[j])
            total += 1
    rate = covered / total
    ok = 0.85 <= rate <= 0.95
    _verdict(8, "bootstrap-coverage",
             ok, f"empirical coverage {rate:.3f} pooled over both slopes, "
                 f"500 trials")


def test_criterion_09_speed_round_trip():
    # Rates from -2% (divergence) to +8% per year over periods of 1 to 100
    # years; |lam * T| stays small enough that the exponential map loses no
    # information in double precision.
    rng = np.random.default_rng(109)
    worst = 0.0
    for _ in range(1000):
        lam = float(rng.uniform(-0.02, 0.08))
        if lam == 0.0:
            lam = 0.01
        T = float(rng.uniform(1.0, 100.0))
        for convention in ("annualized-g", "total-g"):
            beta = beta_from_speed(lam, T, convention)
            back = convergence_speed(beta, T, convention).lam
            worst = max(worst, abs(back - lam))
    ok = worst <= 1e-12
    _verdict(9, "speed-round-trip",
             ok, f"max |lambda| reconstruction error {worst:.3e} over 1000 "
                 f"pairs, both conventions")


def test_criterion_10_cluster_invariants(fixture_bundle):
    rng = np.random.default_rng(110)
    for i in range(1000):
        n = int(rng.integers(5, 60))
        k = int(rng.integers(2, min(6, n + 1)))
        r = rng.standard_normal(n)
        scheme = ("equal-width", "equal-count")[i % 2]
        a = classify_residuals(r, k=k, scheme=scheme)
        assert a.classes.min() >= 1 and a.classes.max() <= k
        assert sum(a.counts()) == n
        assert len(a.boundaries) == k - 1
        assert all(b2 > b1 for b1, b2 in zip(a.boundaries, a.boundaries[1:]))
        order = np.argsort(r)
        assert np.all(np.diff(a.classes[order]) >= 0)

    _, design, _ = fixture_bundle
    fit = fit_quantile(design.matrix, design.outcome, 0.90)
    n = design.matrix.shape[0]
    frac = (fit.n_neg + fit.n_zero) / n
    bound_ok = fit.n_neg <= 0.90 * n <= fit.n_neg + fit.n_zero
    ok = bound_ok and 0.89 <= frac <= 0.93
    _verdict(10, "cluster-invariants",
             ok, f"1000 random vectors held; upper-quantile fit leaves "
                 f"{frac:.1%} of residuals non-positive")


def test_criterion_11_pipeline_determinism(tmp_path):
    # Same seed, three runs: a rerun and a 4-worker run must reproduce the
    # first run byte for byte, and every quantile shows convergence.
    t0 = time.perf_counter()
    base = dict(replicates=200, seed=0)
    dirs = [tmp_path / name for name in ("a", "b", "c")]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryWarning)
        run_pipeline(RunConfig(output_dir=str(dirs[0]), workers=1, **base))
        run_pipeline(RunConfig(output_dir=str(dirs[1]), workers=1, **base))
        run_pipeline(RunConfig(output_dir=str(dirs[2]), workers=4, **base))
    identical = True
    for name in ("report.json", "coefficients.csv", "clusters.csv", "plot_data.csv"):
        blob = (dirs[0] / name).read_bytes()
        identical &= blob == (dirs[1] / name).read_bytes()
        identical &= blob == (dirs[2] / name).read_bytes()

    import json

    report = json.loads((dirs[0] / "report.json").read_text())
    betas = [entry["beta"] for entry in report["quantile"].values()]
    spatial_betas = [entry["beta"] for entry in report["spatial"].values()]
    elapsed = time.perf_counter() - t0
    ok = (
        identical
        and len(betas) == 19
        and all(b < 0 for b in betas)
        and all(b < 0 for b in spatial_betas)
        and elapsed < 300.0
    )
    _verdict(11, "pipeline-determinism",
             ok, f"3 runs byte-identical={identical}, beta<0 at all "
                 f"{len(betas)} grid quantiles, {elapsed:.0f}s")
