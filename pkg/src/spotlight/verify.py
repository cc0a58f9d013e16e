"""Self-checks run by ``spotlight verify``.

Each check builds seeded random instances, measures a deviation and compares
it with a fixed tolerance.  ``fault`` perturbs the projector basis so the
projector checks can be seen to fail.
"""
import math
import time

import numpy as np

from . import bayes, projector, tomo, truncation
from .model import GaussianPriorSpec, PartitionedForwardModel, whiten

THEORY, NUMERICS = "theory", "numerics"


def random_spd(rng, n, jitter=0.5):
    M = rng.standard_normal((n, n))
    return M @ M.T / n + jitter * np.eye(n)


def random_block_prior(rng, n1, n2):
    C = random_spd(rng, n1 + n2)
    return GaussianPriorSpec.from_blocks(C[:n1, :n1], C[:n1, n1:], C[:n1, n1:].T.copy(), C[n1:, n1:])


def random_whitened_model(rng, m, n1, n2):
    return PartitionedForwardModel(rng.standard_normal((m, n1)), rng.standard_normal((m, n2)),
                                   whitened=True)


def low_rank(rng, m, n, rank):
    return rng.standard_normal((m, rank)) @ rng.standard_normal((rank, n))


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def _maybe_faulty(basis, fault, rng):
    if not fault:
        return basis
    U = basis.U + 1e-3 * rng.standard_normal(basis.U.shape)
    return projector.SpotlightBasis(U=U, kind=basis.kind, spectrum=basis.spectrum)


# ---------------------------------------------------------------------------
# theory

def check_marginal_routes(seeds=50):
    worst_mean = worst_cov = worst_contraction = 0.0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        m, n1, n2 = int(rng.integers(5, 16)), int(rng.integers(1, 7)), int(rng.integers(1, 7))
        model = random_whitened_model(rng, m, n1, n2)
        prior = random_block_prior(rng, n1, n2)
        b = rng.standard_normal(m)
        pc = bayes.posterior_conditioning(model, prior, b, with_cov=True)
        pm = bayes.posterior_marginalization(model, prior, b, with_cov=True)
        worst_mean = max(worst_mean, _rel(pc.mean, pm.mean))
        worst_cov = max(worst_cov, _rel(pc.cov, pm.cov))
        C11 = prior.C11
        gap = np.linalg.eigvalsh(C11 - pc.cov).min() / np.linalg.norm(C11, 2)
        worst_contraction = max(worst_contraction, -gap)
    return [
        ("marginal_routes_mean_equality", worst_mean, 1e-10),
        ("marginal_routes_cov_equality", worst_cov, 1e-10),
        ("posterior_contraction", worst_contraction, 1e-10),
    ]


def limit_instance(seed, m=10, n1=3, n2=4):
    rng = np.random.default_rng(1000 + seed)
    model = random_whitened_model(rng, m, n1, n2)
    C11 = random_spd(rng, n1)
    b = model.forward(rng.standard_normal(n1), rng.standard_normal(n2)) + rng.standard_normal(m)
    return model, C11, b


def check_clutter_limit(instances=10, alphas=(1.0, 1e-1, 1e-2, 1e-3)):
    worst_increase = -math.inf
    worst_final = 0.0
    for seed in range(instances):
        model, C11, b = limit_instance(seed)
        d = bayes.limit_consistency_check(model, C11, b, alphas)
        worst_increase = max(worst_increase, float(np.max(np.diff(d))))
        worst_final = max(worst_final, float(d[-1]))
    # strictly decreasing <=> largest consecutive difference < 0
    return [
        ("clutter_limit_monotone_decrease", worst_increase, 0.0, "lt"),
        ("clutter_limit_distance", worst_final, 1e-4),
    ]


# ---------------------------------------------------------------------------
# numerics

def check_projectors(trials=20, fault=False):
    ann = idem = adj = pyth = trunc = ortho = 0.0
    for seed in range(trials):
        rng = np.random.default_rng(2000 + seed)
        m = int(rng.integers(5, 51))
        n2 = int(rng.integers(1, min(20, m - 1) + 1))
        A2 = rng.standard_normal((m, n2))
        exact = projector.exact_complement_basis(A2)
        basis = _maybe_faulty(exact, fault, rng)
        nA = np.linalg.norm(A2)
        ann = max(ann, np.linalg.norm(projector.apply_P_perp(basis, A2)) / nA)
        v, w = rng.standard_normal(m), rng.standard_normal(m)
        Pv = projector.apply_P(basis, v)
        idem = max(idem, _rel(projector.apply_P(basis, Pv), Pv))
        lhs, rhs = Pv @ w, v @ projector.apply_P(basis, w)
        adj = max(adj, abs(lhs - rhs) / (np.linalg.norm(v) * np.linalg.norm(w)))
        nv2 = v @ v
        Pp = projector.apply_P_perp(basis, v)
        pyth = max(pyth, abs(nv2 - Pv @ Pv - Pp @ Pp) / nv2)
        lam = exact.spectrum
        for r in range(lam.size + 1):
            tb = projector.truncated_basis(A2, r)
            tb = _maybe_faulty(tb, fault, rng)
            res = np.linalg.norm(projector.apply_P_perp(tb, A2)) ** 2
            expect = float(np.sum(lam[r:] ** 2))
            trunc = max(trunc, abs(res - expect) / nA ** 2)
        ortho = max(ortho, basis.orthonormality_error() / max(basis.r, 1))
    return [
        ("projector_exact_annihilation", ann, 1e-10),
        ("projector_idempotency", idem, 1e-12),
        ("projector_self_adjointness", adj, 1e-12),
        ("projector_pythagoras", pyth, 1e-12),
        ("truncated_residual_identity", trunc, 1e-10),
        ("basis_orthonormality", ortho, 1e-12),
    ]


def check_complement(trials=10):
    worst = 0.0
    for seed in range(trials):
        rng = np.random.default_rng(3000 + seed)
        m = int(rng.integers(4, 30))
        r = int(rng.integers(0, m))
        U = np.linalg.qr(rng.standard_normal((m, max(r, 1))))[0][:, :r]
        basis = projector.SpotlightBasis(U=U, kind="randomized")
        B = projector.complement_rows(basis)
        worst = max(worst, np.abs(B @ U).max(initial=0.0),
                    np.abs(B @ B.T - np.eye(m - r)).max(initial=0.0))
    return [("complement_basis_orthogonality", worst, 1e-12)]


def check_randomized(trials=20):
    worst = 0.0
    for seed in range(trials):
        rng = np.random.default_rng(4000 + seed)
        rho = int(rng.integers(1, 11))
        m = int(rng.integers(rho + 11, 201))
        n2 = int(rng.integers(rho + 1, 60))
        A2 = low_rank(rng, m, n2, rho)
        basis = projector.randomized_basis(lambda x: A2 @ x, n2, rho + 10, seed)
        worst = max(worst, np.linalg.norm(projector.apply_P_perp(basis, A2)) / np.linalg.norm(A2))
    return [("randomized_range_capture", worst, 1e-8)]


def r_curve_bruteforce(lam, c22, m):
    out = []
    for r in range(m):
        acc = 0.0
        for j in range(r, len(lam)):
            acc += lam[j] * lam[j]
        out.append(c22 * acc / (m - r))
    return np.array(out)


def check_r_curve(trials=20):
    worst = 0.0
    for seed in range(trials):
        rng = np.random.default_rng(5000 + seed)
        lam = np.sort(rng.uniform(0, 3, 6))[::-1]
        R = truncation.r_curve(lam, 1.7, 10)
        ref = r_curve_bruteforce(lam, 1.7, 10)
        worst = max(worst, float(np.max(np.abs(R - ref) / np.maximum(np.abs(ref), 1e-300))))
    hand = truncation.r_curve([2.0, 1.0], 1.0, 4)
    hand_err = float(np.max(np.abs(hand - np.array([1.25, 1 / 3, 0.0, 0.0]))))
    r_sel, _ = truncation.select_rank(hand)
    return [
        ("r_curve_bruteforce_oracle", worst, 1e-14),
        ("r_curve_hand_example", hand_err, 1e-15),
        ("select_rank_hand_example", float(abs(r_sel - 1)), 0.0, "le"),
    ]


def clipped_length(p, q, xmin, xmax, ymin, ymax):
    """Length of segment p->q inside an axis-aligned box (Liang-Barsky)."""
    dx, dy = q[0] - p[0], q[1] - p[1]
    t0, t1 = 0.0, 1.0
    for pk, qk in ((-dx, p[0] - xmin), (dx, xmax - p[0]), (-dy, p[1] - ymin), (dy, ymax - p[1])):
        if pk == 0:
            if qk < 0:
                return 0.0
            continue
        t = qk / pk
        if pk < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
    return max(0.0, t1 - t0) * math.hypot(dx, dy)


def bruteforce_row(p, q, grid_n, h=1.0):
    x0 = -grid_n * h / 2
    row = np.zeros(grid_n * grid_n)
    for i in range(grid_n):
        for j in range(grid_n):
            row[i * grid_n + j] = clipped_length(p, q, x0 + j * h, x0 + (j + 1) * h,
                                                 x0 + i * h, x0 + (i + 1) * h)
    return row


def check_raytracer(rays=100, grid_n=16):
    rng = np.random.default_rng(6000)
    worst = 0.0
    for _ in range(rays):
        t1, t2 = rng.uniform(0, 2 * np.pi, 2)
        p = 1.5 * grid_n * np.array([np.cos(t1), np.sin(t1)])
        q = 1.5 * grid_n * np.array([np.cos(t2), np.sin(t2)])
        idx, seg = tomo.siddon_ray(p, q, grid_n)
        fast = np.zeros(grid_n * grid_n)
        np.add.at(fast, idx, seg)
        worst = max(worst, float(np.abs(fast - bruteforce_row(p, q, grid_n)).max()))
    cons = 0.0
    for _ in range(rays):
        t1, t2 = rng.uniform(0, 2 * np.pi, 2)
        p = 2 * grid_n * np.array([np.cos(t1), np.sin(t1)])
        q = 2 * grid_n * np.array([np.cos(t2), np.sin(t2)])
        chord = clipped_length(p, q, -grid_n / 2, grid_n / 2, -grid_n / 2, grid_n / 2)
        if chord <= 0:
            continue
        _, seg = tomo.siddon_ray(p, q, grid_n)
        cons = max(cons, abs(seg.sum() - chord) / chord)
    return [
        ("raytracer_bruteforce_oracle", worst, 1e-10),
        ("raytracer_chord_conservation", cons, 1e-10),
    ]


def check_whitening(trials=10):
    worst = 0.0
    for seed in range(trials):
        rng = np.random.default_rng(7000 + seed)
        m, n1, n2 = 12, 4, 3
        sigma = float(rng.uniform(0.1, 3))
        model = PartitionedForwardModel(rng.standard_normal((m, n1)), rng.standard_normal((m, n2)),
                                        noise_std=sigma)
        b = rng.standard_normal(m)
        zeta = 0.7
        wm, bw = whiten(model, b)
        x_w = bayes.map_full(wm, zeta, bw)
        # raw normal equations with sigma^-2 likelihood weighting
        A = model.stacked_matrix()
        x_raw = np.linalg.solve(A.T @ A / sigma ** 2 + np.eye(n1 + n2) / zeta ** 2, A.T @ b / sigma ** 2)
        worst = max(worst, _rel(x_w, x_raw))
    return [("whitening_map_equivalence", worst, 1e-12)]


def _verdict(name, measured, tol, op="le", suite=NUMERICS, seconds=0.0):
    ok = measured < tol if op == "lt" else measured <= tol
    return {"name": name, "suite": suite, "measured": float(measured), "tolerance": float(tol),
            "comparison": op, "passed": bool(ok), "seconds": round(seconds, 3)}


def run(suite="all", fault=False):
    """Run checks and return a list of verdict dicts."""
    groups = []
    if suite in ("theory", "all"):
        groups += [(THEORY, check_marginal_routes, {}), (THEORY, check_clutter_limit, {})]
    if suite in ("numerics", "all"):
        groups += [(NUMERICS, check_projectors, {"fault": fault}),
                   (NUMERICS, check_complement, {}),
                   (NUMERICS, check_randomized, {}),
                   (NUMERICS, check_r_curve, {}),
                   (NUMERICS, check_raytracer, {}),
                   (NUMERICS, check_whitening, {})]
    if not groups:
        raise ValueError(f"unknown suite {suite!r}")
    out = []
    for name_suite, fn, kw in groups:
        t = time.perf_counter()
        results = fn(**kw)
        dt = time.perf_counter() - t
        for item in results:
            name, measured, tol = item[:3]
            op = item[3] if len(item) > 3 else "le"
            out.append(_verdict(name, measured, tol, op, name_suite, dt / len(results)))
    return out
