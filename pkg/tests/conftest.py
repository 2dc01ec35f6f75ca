"""Shared test helpers: a Monte Carlo occupancy simulator and numerical
quadrature entropies for Gaussian mixtures, both used as independent
oracles, plus the acceptance-report hook that prints one line per
acceptance criterion at the end of a run."""

import numpy as np
import pytest
from scipy.integrate import quad

ACCEPTANCE_LINES = []


def mixture_density_1d(w, mu, sigma):
    """Callable density of a 1-D Gaussian mixture (plain-formula path)."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float).ravel()
    sigma = np.asarray(sigma, dtype=float).ravel()

    def pdf(a):
        z = (a - mu) / sigma
        return float(w @ (np.exp(-0.5 * z * z) / (sigma * np.sqrt(2.0 * np.pi))))

    return pdf


def quad_tsallis_1d(w, mu, sigma, lo=-40.0, hi=40.0):
    """1/2 (1 - integral of the squared mixture density), by quadrature."""
    pdf = mixture_density_1d(w, mu, sigma)
    sq, _ = quad(lambda a: pdf(a) ** 2, lo, hi, limit=400, epsabs=1e-12, epsrel=1e-12)
    return 0.5 * (1.0 - sq)


def trapezoid_tsallis_2d(w, mu, sigma, half_width=12.0, n_points=801):
    """2-D tensor-product trapezoid version of the squared-density integral.

    Also returns the total mass on the grid so callers can check the box
    actually captured the mixture.
    """
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    axis = np.linspace(-half_width, half_width, n_points)
    h = axis[1] - axis[0]
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    dens = np.zeros(len(pts))
    for i in range(len(w)):
        z = (pts - mu[i]) / sigma[i]
        dens += w[i] * np.exp(-0.5 * (z**2).sum(axis=1)) / (2.0 * np.pi * sigma[i].prod())
    return 0.5 * (1.0 - float((dens**2).sum() * h * h)), float(dens.sum() * h * h)


def simulate_occupancy(mdp, policy, n_episodes, horizon, rng):
    """Per-episode discounted state-action visitation counts, (N, S*A).

    Simulates the chain directly with inverse-CDF sampling — a code path
    fully independent of the library's linear-solve occupancy.
    """
    counts = np.zeros((n_episodes, mdp.n_states * mdp.n_actions))
    states = (rng.random(n_episodes)[:, None] > np.cumsum(mdp.initial)[None, :-1]).sum(axis=1)
    pol_cum = np.cumsum(policy.probs, axis=1)
    trans_cum = np.cumsum(mdp.transition, axis=2)
    for t in range(horizon):
        acts = (rng.random(n_episodes)[:, None] > pol_cum[states][:, :-1]).sum(axis=1)
        counts[np.arange(n_episodes), states * mdp.n_actions + acts] += mdp.discount**t
        states = (rng.random(n_episodes)[:, None] > trans_cum[states, acts][:, :-1]).sum(axis=1)
    return counts


@pytest.fixture
def acceptance():
    """Recorder for acceptance-criterion outcomes.

    Each criterion test calls ``record(num, name, passed, detail)`` before
    asserting, so the final report always carries one line per criterion.
    """

    def record(num, name, passed, detail="", mark=None):
        mark = mark if mark is not None else ("PASS" if passed else "FAIL")
        suffix = f": {detail}" if detail else ""
        ACCEPTANCE_LINES.append((num, f"[{mark}] criterion {num} — {name}{suffix}"))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
