"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.linalg import expm

import oracles
from conftest import random_continuous, random_discrete, random_rate_matrix, random_substochastic
from cutpointph import ContinuousCutpointModel, DiscreteCutpointModel, save_model
from cutpointph import continuous as C
from cutpointph import discrete as D
from cutpointph import em, gof
from cutpointph import simulate as S
from cutpointph.cli import main

REF_RATES = (2.8582, 1.4421)
REF_CUT = 0.82
MIXTURE_CUTS = (0.43, 0.98, 3.15)
MIXTURE_TARGET = -251.7084 / 200
FRECHET_TARGET = -80.893 / 200
BAND = 0.15
REGENERATIONS = 20


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return report


def relerr(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# 1 -------------------------------------------------------------------------


def test_criterion_01_normalization(verdict):
    t0 = time.time()
    rng = np.random.default_rng(101)
    worst_c = 0.0
    for _ in range(100):
        mod = random_continuous(rng)
        x_max = C.quantile(mod, 1 - 1e-9)
        edges = [0.0] + [a for a in mod.cutpoints if a < x_max]
        last = edges[-1]
        edges += list(np.linspace(last, x_max, 9)[1:])
        mass = sum(
            quad(lambda x: C.pdf(mod, x) if x > 0 else C._density(mod, np.array([x]))[0],
                 lo, hi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
            for lo, hi in zip(edges, edges[1:])
        )
        worst_c = max(worst_c, abs(mass + C.survival(mod, x_max) - 1.0))
    worst_d = 0.0
    for _ in range(100):
        mod = random_discrete(rng)
        K = 1
        while D.survival_k(mod, K) > 1e-9:
            K *= 2
        for k in (1, K // 3 + 1, K):
            total = np.sum(D.pmf(mod, np.arange(1, k + 1))) + D.survival_k(mod, k)
            worst_d = max(worst_d, abs(total - 1.0))
    elapsed = time.time() - t0
    ok = worst_c < 1e-7 and worst_d < 1e-10 and elapsed < 120
    verdict(1, ok, f"continuous max |err| {worst_c:.2e} (< 1e-7), discrete {worst_d:.2e} (< 1e-10), {elapsed:.1f}s")


# 2 -------------------------------------------------------------------------


def test_criterion_02_formulas_vs_oracles(verdict):
    rng = np.random.default_rng(202)
    worst = {}

    def track(name, got, ref):
        worst[name] = max(worst.get(name, 0.0), relerr(got, ref))

    for _ in range(50):
        mod = random_continuous(rng)
        args = (mod.alpha, mod.matrices, list(mod.cutpoints))
        track("mean", C.mean(mod), oracles.moment(*args, 1))
        track("second_moment", C.second_moment(mod), oracles.moment(*args, 2))
        for s in (0.1, 1.0, 5.0):
            track(f"laplace({s})", C.laplace_transform(mod, s), oracles.laplace(*args, s))
        dmod = random_discrete(rng)
        p = oracles.discrete_series(dmod.alpha, dmod.matrices, list(dmod.int_cutpoints))
        k = np.arange(1, p.size + 1)
        for z in (0.5, 0.9):
            track(f"pgf({z})", D.pgf(dmod, z), np.sum(z**k * p))
        track("mean_discrete", D.mean_discrete(dmod), np.sum(k * p))
        track("factorial_moment2", D.factorial_moment2(dmod), np.sum(k * (k - 1) * p))
    ok = max(worst.values()) < 1e-5
    verdict(2, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# 3 -------------------------------------------------------------------------


def test_criterion_03_continuity_and_collapse(verdict):
    rng = np.random.default_rng(303)
    cdf_gap = pdf_left = pdf_right = jump_err = 0.0
    for _ in range(30):
        mod = random_continuous(rng, n=int(rng.integers(1, 4)))
        for j, a in enumerate(mod.cutpoints):
            row_left = mod.alpha @ mod.cache.prefix[j] @ expm(mod.matrices[j] * mod.widths[j])
            row_right = mod.alpha @ mod.cache.prefix[j + 1]
            cdf_gap = max(cdf_gap, abs((1 - row_left.sum()) - (1 - row_right.sum())))
            # the density is right-continuous only when exit rates agree; each
            # branch matches its one-sided limit and the jump is a(a_j) (t_{j+1} - t_j)
            pdf_left = max(pdf_left, abs(row_left @ mod.exits[j] - C.pdf(mod, a)))
            pdf_right = max(pdf_right, abs(row_right @ mod.exits[j + 1] - C.pdf(mod, np.nextafter(a, np.inf))))
            jump = C.pdf(mod, np.nextafter(a, np.inf)) - C.pdf(mod, a)
            jump_err = max(jump_err, abs(jump - row_right @ (mod.exits[j + 1] - mod.exits[j])))
    same_exit_gap = 0.0
    for _ in range(10):
        m = int(rng.integers(1, 5))
        T1, T2 = random_rate_matrix(rng, m), random_rate_matrix(rng, m)
        # reset T2's diagonal so its exit vector equals T1's
        np.fill_diagonal(T2, 0.0)
        np.fill_diagonal(T2, -(T2.sum(axis=1) - T1.sum(axis=1)))
        mod = ContinuousCutpointModel(rng.dirichlet(np.ones(m)), [T1, T2], [0.7])
        left = mod.alpha @ expm(T1 * 0.7) @ mod.exits[0]
        right = mod.alpha @ mod.cache.prefix[1] @ mod.exits[1]
        same_exit_gap = max(same_exit_gap, abs(left - right))

    collapse = 0.0
    for _ in range(10):
        m = int(rng.integers(1, 5))
        T = random_rate_matrix(rng, m)
        alpha = rng.dirichlet(np.ones(m))
        mod = ContinuousCutpointModel(alpha, [T] * 4, np.cumsum(rng.uniform(0.2, 1.0, 3)))
        t0, e, inv = -T.sum(axis=1), np.ones(m), np.linalg.inv(T)
        for x in rng.uniform(0.05, 4.0, 10):
            E = expm(T * x)
            collapse = max(collapse, abs(C.pdf(mod, x) - alpha @ E @ t0),
                           abs(C.cdf(mod, x) - (1 - alpha @ E @ e)))
        collapse = max(collapse, relerr(C.mean(mod), -alpha @ inv @ e),
                       relerr(C.second_moment(mod), 2 * alpha @ inv @ inv @ e),
                       abs(C.laplace_transform(mod, 1.0) - alpha @ np.linalg.solve(np.eye(m) - T, t0)))
        P = random_substochastic(rng, m)
        dmod = DiscreteCutpointModel(alpha, [P] * 3, [2, 6])
        for k in range(1, 20):
            collapse = max(collapse, abs(D.pmf(dmod, k) - alpha @ np.linalg.matrix_power(P, k - 1) @ (1 - P.sum(axis=1))))
        collapse = max(collapse, relerr(D.mean_discrete(dmod), alpha @ np.linalg.inv(np.eye(m) - P) @ e))

    one_cut = 0.0
    for _ in range(10):
        mod = random_continuous(rng, int(rng.integers(1, 5)), 1)
        a, (T1, T2) = mod.cutpoints[0], mod.matrices
        for x in rng.uniform(0.05, 3 * a, 10):
            if x <= a:
                f, R = mod.alpha @ expm(T1 * x) @ mod.exits[0], mod.alpha @ expm(T1 * x) @ np.ones(mod.m)
            else:
                row = mod.alpha @ expm(T1 * a) @ expm(T2 * (x - a))
                f, R = row @ mod.exits[1], row.sum()
            one_cut = max(one_cut, abs(C.pdf(mod, x) - f), abs(C.survival(mod, x) - R))

    ok = max(cdf_gap, pdf_left, pdf_right, jump_err, same_exit_gap, collapse, one_cut) < 1e-10
    verdict(3, ok, f"cdf gap {cdf_gap:.1e}, pdf one-sided {max(pdf_left, pdf_right):.1e}, jump formula {jump_err:.1e}, "
                   f"equal-exit pdf gap {same_exit_gap:.1e}, collapse {collapse:.1e}, one-cut {one_cut:.1e}")


# 4 -------------------------------------------------------------------------


def _oracle_fit(alpha, T, y, eps, max_iter):
    trace = []
    for _ in range(max_iter):
        B, Z, N, Nabs, ll = oracles.classical_e_step(alpha, T, y)
        trace.append(ll)
        a2, T2 = oracles.classical_m_step(B, Z, N, Nabs, len(y))
        delta = np.abs(a2 - alpha).sum() + np.abs(T2 - T).sum()
        alpha, T = a2, T2
        if delta < eps:
            break
    return alpha, T, oracles.classical_e_step(alpha, T, y)[4]


def test_criterion_04_classical_em(verdict):
    rng = np.random.default_rng(404)
    stat_err = ll_err = 0.0
    for m in (2, 3):
        truth = ContinuousCutpointModel(rng.dirichlet(np.ones(m)), [random_rate_matrix(rng, m)], [])
        y = S.sample_continuous(truth, 40 + m, 500)
        start = em.initial_model(y, em.FitConfig(phases=m, seed=m))
        st = em.e_step(y, start)
        B, Z, N, Nabs, _ = oracles.classical_e_step(start.alpha, start.matrices[0], y)
        for got, ref in ((st.B, B), (st.Z[:, 0], Z), (st.N[:, :, 0], N), (st.N_abs[:, 0], Nabs)):
            stat_err = max(stat_err, np.max(np.abs(got - ref) / np.maximum(np.abs(ref), 1.0)))
        new = em.m_step(st, len(y), start)
        a_ref, T_ref = oracles.classical_m_step(B, Z, N, Nabs, len(y))
        stat_err = max(stat_err, np.max(np.abs(new.alpha - a_ref)), np.max(np.abs(new.matrices[0] - T_ref)))
        cfg = em.FitConfig(phases=m, seed_model=start, epsilon=1e-6, max_iterations=150)
        res = em.fit(y, cfg)
        _, _, ll_ref = _oracle_fit(start.alpha, start.matrices[0], y, 1e-6, 150)
        ll_err = max(ll_err, abs(res.log_likelihood - ll_ref))
    ok = stat_err < 1e-7 and ll_err < 1e-6
    verdict(4, ok, f"sufficient statistics / M-step max err {stat_err:.1e} (< 1e-7), fitted logL diff {ll_err:.1e} (< 1e-6)")


# 5 -------------------------------------------------------------------------


def test_criterion_05_em_ascent(verdict):
    rng = np.random.default_rng(505)
    worst = np.inf
    for r in range(20):
        n = int(rng.integers(0, 4))
        m = int(rng.integers(1, 4))
        truth = random_continuous(rng, m, n)
        y = S.sample_continuous(truth, r, 100)
        if r % 2:
            cfg = em.FitConfig(structure="erlang", phases=m + 1, cutpoints=tuple(truth.cutpoints), quadrature_nodes=16)
        else:
            cfg = em.FitConfig(phases=m, cutpoints=tuple(truth.cutpoints), max_iterations=60, seed=r)
        res = em.fit(y, cfg)
        worst = min(worst, np.min(np.diff(res.loglik_trace), initial=0.0))
    ok = worst >= -1e-9
    verdict(5, ok, f"largest per-iteration decrease {max(-worst, 0.0):.1e} over 20 fits (<= 1e-9)")


# 6 -------------------------------------------------------------------------


def test_criterion_06_parameter_recovery(verdict):
    t0 = time.time()
    truth = ContinuousCutpointModel.erlang(4, REF_RATES, [REF_CUT])
    y = S.sample_continuous(truth, 2026, 2000)
    res = em.fit_erlang(y, em.FitConfig(structure="erlang", phases=4, cutpoints=(REF_CUT,)))
    rates = [-T[0, 0] for T in res.model.matrices]
    errs = [relerr(r, t) for r, t in zip(rates, REF_RATES)]
    elapsed = time.time() - t0
    ok = max(errs) < 0.10 and elapsed < 60
    verdict(6, ok, f"rates {rates[0]:.4f}, {rates[1]:.4f}; rel errors {errs[0]:.3f}, {errs[1]:.3f} (< 0.10); {elapsed:.1f}s")


# 7 -------------------------------------------------------------------------


def test_criterion_07_mixture_band(verdict):
    cfg = em.FitConfig(structure="erlang", phases=4, cutpoints=MIXTURE_CUTS, quadrature_nodes=16)
    per_obs, fits = [], []
    for seed in range(REGENERATIONS):
        y = S.generate_mixture_dataset(seed)
        res = em.fit(y, cfg)
        per_obs.append(res.log_likelihood / len(y))
        fits.append((y, res))
    per_obs = np.array(per_obs)
    inside = np.abs(per_obs - MIXTURE_TARGET) <= BAND
    median = float(np.median(per_obs))
    y, res = fits[0]
    boot = gof.bootstrap(y, res.model, gof.make_refitter(cfg, res.model), 199, seed=7)
    asymptotic = stats.kstest(y, lambda v: C.cdf(res.model, v)).pvalue
    band_ok = abs(median - MIXTURE_TARGET) <= BAND
    ok = band_ok and boot.ks_pvalue > 0.05
    verdict(7, ok, f"median logL/obs {median:.4f} vs {MIXTURE_TARGET:.4f} +-{BAND} ({inside.sum()}/{REGENERATIONS} "
                   f"regenerations inside, spread sd {per_obs.std():.3f}); dataset 0: bootstrap K-S p {boot.ks_pvalue:.3f} "
                   f"(needs > 0.05), A-D p {boot.ad_pvalue:.3f}, simple-hypothesis K-S p {asymptotic:.3f}")


# 8 -------------------------------------------------------------------------


def test_criterion_08_frechet_band(verdict):
    grid3 = [[0.6, 0.7, 0.8], [1.2, 1.35, 1.5], [2.4, 2.6, 2.8]]
    grid1 = [[0.5, 0.7, 0.9, 1.1, 1.35]]
    cfg = em.FitConfig(structure="erlang", phases=5, quadrature_nodes=16)
    three, one, chosen = [], [], []
    for seed in range(REGENERATIONS):
        y = S.generate_frechet_dataset(seed)
        g3 = em.grid_search_cutpoints(y, grid3, cfg).best
        g1 = em.grid_search_cutpoints(y, grid1, cfg).best
        three.append(g3.log_likelihood / len(y))
        one.append(g1.log_likelihood / len(y))
        chosen.append(tuple(g3.model.cutpoints.tolist()))
    three, one = np.array(three), np.array(one)
    median = float(np.median(three))
    inside = int(np.sum(np.abs(three - FRECHET_TARGET) <= BAND))
    improves = int(np.sum(three > one))
    ok = abs(median - FRECHET_TARGET) <= BAND and improves == REGENERATIONS
    verdict(8, ok, f"median 3-cut logL/obs {median:.4f} vs {FRECHET_TARGET:.4f} +-{BAND} ({inside}/{REGENERATIONS} "
                   f"inside, spread sd {three.std():.3f}); 3-cut > 1-cut on {improves}/{REGENERATIONS}; "
                   f"dataset 0 cut-points {chosen[0]}")


# 9 -------------------------------------------------------------------------


def test_criterion_09_sampling_fidelity(verdict):
    rng = np.random.default_rng(909)
    n = 10**5
    worst_ks, worst_z = 0.0, 0.0
    for k in range(10):
        mod = random_continuous(rng)
        x = S.sample_continuous(mod, 9000 + k, n)
        worst_ks = max(worst_ks, stats.kstest(x, lambda v: C.cdf(mod, v)).statistic)
        mu, var = C.mean(mod), C.variance(mod)
        mu4 = np.mean((x - mu) ** 4)
        worst_z = max(worst_z, abs(x.mean() - mu) / np.sqrt(var / n),
                      abs(x.var() - var) / np.sqrt((mu4 - var**2) / n))
    ok = worst_ks < 0.01 and worst_z < 3
    verdict(9, ok, f"max Kolmogorov distance {worst_ks:.4f} (< 0.01), max |z| of mean/variance {worst_z:.2f} (< 3)")


# 10 ------------------------------------------------------------------------


def test_criterion_10_null_calibration(verdict):
    truth = ContinuousCutpointModel.erlang(4, REF_RATES, [REF_CUT])
    cfg = em.FitConfig(structure="erlang", phases=4, cutpoints=(REF_CUT,), quadrature_nodes=16)
    pvals = []
    for c in range(20):
        y = S.sample_continuous(truth, S.derive_seed(1010, c), 100)
        res = em.fit(y, cfg)
        boot = gof.bootstrap(y, res.model, gof.make_refitter(cfg, res.model), 199, seed=S.derive_seed(1011, c))
        pvals.append(boot.ks_pvalue)
    pvals = np.array(pvals)
    ok = np.any(pvals >= 0.1) and np.sum(pvals > 0.01) >= 18
    verdict(10, ok, f"{np.sum(pvals > 0.01)}/20 p > 0.01, {np.sum(pvals >= 0.1)}/20 p >= 0.1; "
                    f"p-values {np.round(np.sort(pvals), 3).tolist()}")


# 11 ------------------------------------------------------------------------


def _pipeline(root, model_path):
    root.mkdir()
    files = {k: root / v for k, v in dict(data="data.csv", fit="fit.json", curves="curves.csv",
                                             report="gof.json", row="gof.csv").items()}
    codes = [
        main(["simulate", "--model", str(model_path), "--size", "100", "--seed", "11", "--out", str(files["data"])]),
        main(["fit", "--input", str(files["data"]), "--structure", "erlang", "--phases", "4", "--cutpoints", "0.82",
              "--quadrature-nodes", "16", "--out", str(files["fit"])]),
        main(["eval", "--model", str(files["fit"]), "--out", str(files["curves"])]),
        main(["gof", "--input", str(files["data"]), "--model", str(files["fit"]), "--replicates", "99",
              "--seed", "12", "--quadrature-nodes", "16", "--out", str(files["report"]), "--csv", str(files["row"])]),
    ]
    return codes, {k: p.read_bytes() for k, p in files.items()}


def test_criterion_11_cli_golden(verdict, tmp_path, capsys):
    model_path = tmp_path / "erlang.json"
    save_model(ContinuousCutpointModel.erlang(4, REF_RATES, [REF_CUT]), model_path)
    codes_a, out_a = _pipeline(tmp_path / "run_a", model_path)
    codes_b, out_b = _pipeline(tmp_path / "run_b", model_path)
    identical = [k for k in out_a if out_a[k] == out_b[k]]

    y = S.generate_mixture_dataset(0)
    c_gen = em.FitConfig(phases=4, max_iterations=5, seed=1)
    c_erl = em.FitConfig(structure="erlang", phases=4, cutpoints=MIXTURE_CUTS, quadrature_nodes=16)
    rows = gof.compare_models(y, [("classical-PH-4", em.fit(y, c_gen), c_gen),
                                  ("erlang-4-3cut", em.fit(y, c_erl), c_erl)], replicates=99, seed=3)
    counts = {r.label: r.parameter_count for r in rows}
    ok = (codes_a == codes_b == [0, 0, 0, 0] and len(identical) == len(out_a)
          and counts == {"classical-PH-4": 24, "erlang-4-3cut": 4})
    verdict(11, ok, f"exit codes {codes_a}; byte-identical outputs {len(identical)}/{len(out_a)}; parameter counts {counts}")
