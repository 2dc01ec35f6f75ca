"""Sparse mixture density policies over continuous actions.

A policy maps a state through a small two-layer network to a Gaussian
mixture over actions whose weights come from a sparsemax gate, so unused
components carry exactly zero weight.  Because the squared density of a
Gaussian mixture integrates in closed form,

    integral pi(a|s)^2 da = sum_ij w_i w_j N(mu_i; mu_j, Sigma_i + Sigma_j),

the continuous Tsallis entropy ``1/2 (1 - integral pi^2)`` is analytic,
and so is its gradient with respect to every network parameter.  All
backward passes here are written by hand; gradients flow through the
sparsemax gate via its support Jacobian (identity minus the support mean
on supported coordinates, zero elsewhere).

Covariances are diagonal.  Scales are parameterized as
``sigma = sigma_floor + exp(raw)`` which keeps them smooth and strictly
above the floor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .sparsemax import sparsemax_batch
from .trajectories import TrajectoryBatch

__all__ = [
    "EntropyEstimate",
    "SparseMixturePolicy",
    "mixture_tsallis",
    "mixture_tsallis_grad",
    "tsallis_entropy_analytic",
    "tsallis_entropy_per_sample",
    "naive_tsallis_per_action",
    "gibbs_entropy_loglik",
    "entropy_gradient",
]

_LOG_2PI = float(np.log(2.0 * np.pi))
_PARAM_FIELDS = (
    "w_hidden",
    "b_hidden",
    "w_gate",
    "b_gate",
    "w_mean",
    "b_mean",
    "w_scale",
    "b_scale",
)


@dataclass(frozen=True)
class EntropyEstimate:
    """An entropy value tagged with the estimator that produced it."""

    value: float
    method: str

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError(f"entropy estimate is not finite: {self.value!r}")


def _overlap_matrix(mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Pairwise Gaussian overlaps G[.., i, j] = N(mu_i; mu_j, S_i + S_j).

    Accepts batched (B, K, d) means/scales and returns (B, K, K).
    """
    delta = mu[..., :, None, :] - mu[..., None, :, :]
    var = sigma[..., :, None, :] ** 2 + sigma[..., None, :, :] ** 2
    log_g = -0.5 * (np.log(2.0 * np.pi * var) + delta**2 / var).sum(axis=-1)
    return np.exp(log_g)


def mixture_tsallis(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Analytic per-state Tsallis entropy of Gaussian mixtures.

    ``1/2 (1 - sum_ij w_i w_j N(mu_i; mu_j, S_i + S_j))`` for each row of a
    (B, K) weight batch.  Always <= 1/2; negative values are legitimate for
    very peaked mixtures, exactly as differential entropies can be.
    """
    g = _overlap_matrix(mu, sigma)
    quad = np.einsum("...i,...j,...ij->...", w, w, g)
    return 0.5 * (1.0 - quad)


def mixture_tsallis_grad(
    w: np.ndarray, mu: np.ndarray, sigma: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-state entropy values and gradients wrt weights, means, scales.

    Derivatives of the overlap quadratic Q = sum_ij w_i w_j G_ij:

        dQ/dw_m     =  2 sum_j w_j G_mj
        dQ/dmu_mk   = -2 w_m sum_j w_j G_mj (mu_mk - mu_jk) / v_mjk
        dQ/dsig_mk  =  2 w_m sig_mk sum_j w_j G_mj (delta^2/v^2 - 1/v)_mjk

    with v = sig_m^2 + sig_j^2 elementwise; the j = m diagonal terms come
    out right because both argument slots of G vary together.  Components
    with w_m = 0 contribute exactly zero to the mean and scale gradients.
    """
    delta = mu[..., :, None, :] - mu[..., None, :, :]
    var = sigma[..., :, None, :] ** 2 + sigma[..., None, :, :] ** 2
    g = np.exp(-0.5 * (np.log(2.0 * np.pi * var) + delta**2 / var).sum(axis=-1))
    quad = np.einsum("...i,...j,...ij->...", w, w, g)
    value = 0.5 * (1.0 - quad)

    wg = np.einsum("...j,...ij->...i", w, g)
    d_w = -wg  # dE/dw = -1/2 * 2 * sum_j w_j G
    inner_mu = np.einsum("...j,...ijk->...ik", w, g[..., None] * delta / var)
    d_mu = w[..., None] * inner_mu
    inner_sig = np.einsum(
        "...j,...ijk->...ik", w, g[..., None] * (delta**2 / var**2 - 1.0 / var)
    )
    d_sigma = -w[..., None] * sigma * inner_sig
    return value, d_w, d_mu, d_sigma


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


class SparseMixturePolicy:
    """State-conditioned Gaussian mixture with a sparsemax (or softmax) gate.

    The network is ``tanh(W1 s + b1)`` followed by three linear heads:
    gate logits (divided by the gate temperature before the gate map),
    component means, and raw scales.
    """

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        n_components: int,
        hidden_width: int = 64,
        gate: str = "sparsemax",
        gate_temperature: float = 1.0,
        sigma_floor: float = 1e-3,
        init_sigma: float = 0.5,
        rng: np.random.Generator | None = None,
    ):
        if gate not in ("sparsemax", "softmax"):
            raise ValueError(f"unknown gate {gate!r}")
        if min(state_dim, action_dim, n_components, hidden_width) < 1:
            raise ValueError("all network sizes must be positive")
        if gate_temperature <= 0.0:
            raise ValueError("gate temperature must be positive")
        if sigma_floor <= 0.0 or init_sigma <= sigma_floor:
            raise ValueError("need 0 < sigma_floor < init_sigma")
        rng = rng if rng is not None else np.random.default_rng()
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.n_components = int(n_components)
        self.hidden_width = int(hidden_width)
        self.gate = gate
        self.gate_temperature = float(gate_temperature)
        self.sigma_floor = float(sigma_floor)

        h, ds, k, d = self.hidden_width, self.state_dim, self.n_components, self.action_dim
        self._params = {
            "w_hidden": rng.standard_normal((h, ds)) / np.sqrt(ds),
            "b_hidden": np.zeros(h),
            "w_gate": 0.1 * rng.standard_normal((k, h)) / np.sqrt(h),
            "b_gate": np.zeros(k),
            "w_mean": 0.1 * rng.standard_normal((k * d, h)) / np.sqrt(h),
            "b_mean": np.zeros(k * d),
            "w_scale": 0.1 * rng.standard_normal((k * d, h)) / np.sqrt(h),
            "b_scale": np.full(k * d, np.log(init_sigma - sigma_floor)),
        }

    # ------------------------------------------------------------------
    # parameters
    # ------------------------------------------------------------------
    @property
    def n_params(self) -> int:
        return sum(p.size for p in self._params.values())

    def get_params(self) -> np.ndarray:
        return np.concatenate([self._params[k].ravel() for k in _PARAM_FIELDS])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ValueError("parameters must be finite")
        offset = 0
        for key in _PARAM_FIELDS:
            size = self._params[key].size
            self._params[key] = flat[offset : offset + size].reshape(self._params[key].shape)
            offset += size

    @classmethod
    def constant(
        cls,
        gate_logits: np.ndarray,
        means: np.ndarray,
        sigmas: np.ndarray,
        state_dim: int = 1,
        gate: str = "sparsemax",
        gate_temperature: float = 1.0,
        sigma_floor: float = 1e-3,
    ) -> "SparseMixturePolicy":
        """A policy that ignores the state and emits one fixed mixture.

        Realized by zeroing every weight matrix and writing the requested
        mixture into the head biases; handy for tests and closed-form rigs.
        """
        means = np.atleast_2d(np.asarray(means, dtype=float))
        sigmas = np.atleast_2d(np.asarray(sigmas, dtype=float))
        gate_logits = np.asarray(gate_logits, dtype=float)
        k, d = means.shape
        if sigmas.shape != (k, d) or gate_logits.shape != (k,):
            raise ValueError("inconsistent mixture shapes")
        if np.any(sigmas <= sigma_floor):
            raise ValueError(f"all sigmas must exceed the floor {sigma_floor}")
        policy = cls(
            state_dim,
            d,
            k,
            hidden_width=1,
            gate=gate,
            gate_temperature=gate_temperature,
            sigma_floor=sigma_floor,
            init_sigma=2.0 * sigma_floor,
            rng=np.random.default_rng(0),
        )
        for key in ("w_hidden", "w_gate", "w_mean", "w_scale"):
            policy._params[key] = np.zeros_like(policy._params[key])
        policy._params["b_hidden"] = np.zeros_like(policy._params["b_hidden"])
        policy._params["b_gate"] = gate_logits * gate_temperature
        policy._params["b_mean"] = means.ravel().copy()
        policy._params["b_scale"] = np.log(sigmas - sigma_floor).ravel()
        return policy

    # ------------------------------------------------------------------
    # forward
    # ------------------------------------------------------------------
    def _forward(self, states: np.ndarray) -> dict:
        x = np.asarray(states, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.state_dim:
            raise ValueError(f"states must be (B, {self.state_dim}), got {x.shape}")
        p = self._params
        h_act = np.tanh(x @ p["w_hidden"].T + p["b_hidden"])
        gate_z = (h_act @ p["w_gate"].T + p["b_gate"]) / self.gate_temperature
        if self.gate == "sparsemax":
            w, _, _ = sparsemax_batch(gate_z)
        else:
            w = _softmax_rows(gate_z)
        b = x.shape[0]
        k, d = self.n_components, self.action_dim
        mu = (h_act @ p["w_mean"].T + p["b_mean"]).reshape(b, k, d)
        sigma = self.sigma_floor + np.exp(h_act @ p["w_scale"].T + p["b_scale"]).reshape(
            b, k, d
        )
        return {"x": x, "h": h_act, "w": w, "mu": mu, "sigma": sigma}

    def mixture(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gate weights, means, and scales at a batch of states."""
        cache = self._forward(np.atleast_2d(states))
        return cache["w"], cache["mu"], cache["sigma"]

    # ------------------------------------------------------------------
    # densities and sampling
    # ------------------------------------------------------------------
    def _log_components(self, cache: dict, actions: np.ndarray) -> np.ndarray:
        """log N(a; mu_i, diag sigma_i^2) for every component, (B, K)."""
        a = actions[:, None, :]
        mu, sigma = cache["mu"], cache["sigma"]
        z = (a - mu) / sigma
        return -0.5 * (_LOG_2PI + 2.0 * np.log(sigma) + z**2).sum(axis=2)

    def log_density_batch(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        if actions.shape != (states.shape[0], self.action_dim):
            raise ValueError(
                f"actions must be (B, {self.action_dim}) aligned with states, got {actions.shape}"
            )
        cache = self._forward(states)
        log_n = self._log_components(cache, actions)
        with np.errstate(divide="ignore"):
            log_w = np.where(cache["w"] > 0.0, np.log(cache["w"]), -np.inf)
        t = log_w + log_n
        m = t.max(axis=1)
        return m + np.log(np.exp(t - m[:, None]).sum(axis=1))

    def log_density(self, state: np.ndarray, action: np.ndarray) -> float:
        """Log mixture density at one (state, action); zero-weight components
        are excluded exactly rather than through a vanishing term."""
        return float(self.log_density_batch(np.asarray(state)[None], np.asarray(action)[None])[0])

    def density(self, state: np.ndarray, action: np.ndarray) -> float:
        return float(np.exp(self.log_density(state, action)))

    def sample_batch(
        self, states: np.ndarray, uniforms: np.ndarray, normals: np.ndarray
    ) -> np.ndarray:
        """Deterministic map from pre-drawn randomness to actions.

        ``uniforms`` picks the component through the gate CDF (zero-weight
        components occupy zero-width intervals and are never selected);
        ``normals`` provides the Gaussian draw.
        """
        w, mu, sigma = self.mixture(states)
        cum = np.cumsum(w, axis=1)
        comp = (cum < np.asarray(uniforms)[:, None]).sum(axis=1)
        comp = np.minimum(comp, self.n_components - 1)
        rows = np.arange(len(comp))
        return mu[rows, comp] + sigma[rows, comp] * np.atleast_2d(normals)

    def sample(self, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(1)
        z = rng.standard_normal((1, self.action_dim))
        return self.sample_batch(np.asarray(state)[None], u, z)[0]

    # ------------------------------------------------------------------
    # hand-derived backward pass
    # ------------------------------------------------------------------
    def _gate_backward(self, w: np.ndarray, d_w: np.ndarray) -> np.ndarray:
        """Pull a gradient wrt gate weights back to the gate logits z.

        Sparsemax Jacobian restricted to the support S is I - (1/|S|) 11^T
        and exactly zero on and into off-support coordinates; the softmax
        Jacobian is diag(w) - w w^T.
        """
        if self.gate == "sparsemax":
            mask = w > 0.0
            count = mask.sum(axis=1, keepdims=True)
            masked = np.where(mask, d_w, 0.0)
            mean = masked.sum(axis=1, keepdims=True) / count
            return np.where(mask, d_w - mean, 0.0)
        inner = (w * d_w).sum(axis=1, keepdims=True)
        return w * (d_w - inner)

    def _backward(
        self, cache: dict, d_w: np.ndarray, d_mu: np.ndarray, d_sigma: np.ndarray
    ) -> np.ndarray:
        """Accumulate the flat parameter gradient from head-space gradients.

        Off-support entries of ``d_w`` may hold arbitrary finite values:
        the sparsemax gate Jacobian annihilates them.
        """
        x, h, w, sigma = cache["x"], cache["h"], cache["w"], cache["sigma"]
        b = x.shape[0]
        p = self._params
        d_graw = self._gate_backward(w, d_w) / self.gate_temperature
        d_mraw = d_mu.reshape(b, -1)
        d_sraw = (d_sigma * (sigma - self.sigma_floor)).reshape(b, -1)

        grads = {
            "w_gate": d_graw.T @ h,
            "b_gate": d_graw.sum(axis=0),
            "w_mean": d_mraw.T @ h,
            "b_mean": d_mraw.sum(axis=0),
            "w_scale": d_sraw.T @ h,
            "b_scale": d_sraw.sum(axis=0),
        }
        d_h = d_graw @ p["w_gate"] + d_mraw @ p["w_mean"] + d_sraw @ p["w_scale"]
        d_hraw = (1.0 - h**2) * d_h
        grads["w_hidden"] = d_hraw.T @ x
        grads["b_hidden"] = d_hraw.sum(axis=0)
        return np.concatenate([grads[k].ravel() for k in _PARAM_FIELDS])

    def entropy_grad(
        self, states: np.ndarray, weights: np.ndarray | None = None
    ) -> tuple[float, np.ndarray]:
        """Weighted analytic Tsallis entropy over states, and its exact
        gradient with respect to the flat parameter vector."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        b = states.shape[0]
        weights = (
            np.full(b, 1.0 / b) if weights is None else np.asarray(weights, dtype=float)
        )
        if weights.shape != (b,):
            raise ValueError("weights must align with the state batch")
        cache = self._forward(states)
        value, d_w, d_mu, d_sigma = mixture_tsallis_grad(
            cache["w"], cache["mu"], cache["sigma"]
        )
        total = float(weights @ value)
        grad = self._backward(
            cache,
            d_w * weights[:, None],
            d_mu * weights[:, None, None],
            d_sigma * weights[:, None, None],
        )
        return total, grad

    def weighted_logp_grad(
        self, states: np.ndarray, actions: np.ndarray, coeffs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Log densities and the gradient of ``sum_b coeffs_b log pi(a_b|s_b)``.

        The responsibility calculus: with r_i the posterior component
        weight, d log pi / d mu_i = r_i (a - mu_i)/sigma_i^2 and so on;
        the gate sees d log pi / d w_i = N_i / pi, computed only on the
        support to keep the exponentials tame.
        """
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.atleast_2d(np.asarray(actions, dtype=float))
        coeffs = np.asarray(coeffs, dtype=float)
        cache = self._forward(states)
        w, mu, sigma = cache["w"], cache["mu"], cache["sigma"]
        log_n = self._log_components(cache, actions)
        with np.errstate(divide="ignore"):
            log_w = np.where(w > 0.0, np.log(w), -np.inf)
        t = log_w + log_n
        m = t.max(axis=1)
        logp = m + np.log(np.exp(t - m[:, None]).sum(axis=1))
        resp = np.exp(t - logp[:, None])  # zero exactly off-support

        gap = log_n - logp[:, None]
        d_w = np.exp(np.where(w > 0.0, gap, -np.inf))  # N_i / pi on support
        diff = (actions[:, None, :] - mu) / sigma
        d_mu = resp[:, :, None] * diff / sigma
        d_sigma = resp[:, :, None] * (diff**2 - 1.0) / sigma

        c = coeffs[:, None]
        grad = self._backward(
            cache, d_w * c, d_mu * c[:, :, None], d_sigma * c[:, :, None]
        )
        return logp, grad

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def save(self, path) -> None:
        payload = {
            "kind": "sparse_mixture_policy",
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "n_components": self.n_components,
            "hidden_width": self.hidden_width,
            "gate": self.gate,
            "gate_temperature": self.gate_temperature,
            "sigma_floor": self.sigma_floor,
            "params": {k: self._params[k].tolist() for k in _PARAM_FIELDS},
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "SparseMixturePolicy":
        with open(path) as fh:
            payload = json.load(fh)
        if payload.get("kind") != "sparse_mixture_policy":
            raise ValueError(f"{path} does not contain a mixture policy checkpoint")
        policy = cls(
            payload["state_dim"],
            payload["action_dim"],
            payload["n_components"],
            hidden_width=payload["hidden_width"],
            gate=payload["gate"],
            gate_temperature=payload["gate_temperature"],
            sigma_floor=payload["sigma_floor"],
            init_sigma=2.0 * payload["sigma_floor"],
            rng=np.random.default_rng(0),
        )
        for key in _PARAM_FIELDS:
            arr = np.asarray(payload["params"][key], dtype=float)
            if arr.shape != policy._params[key].shape:
                raise ValueError(f"checkpoint field {key} has shape {arr.shape}")
            policy._params[key] = arr
        return policy


# ----------------------------------------------------------------------
# entropy estimators
# ----------------------------------------------------------------------
def tsallis_entropy_analytic(
    policy: SparseMixturePolicy, states: np.ndarray, weights: np.ndarray | None = None
) -> EntropyEstimate:
    """Closed-form Tsallis entropy averaged over a weighted state batch."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    w, mu, sigma = policy.mixture(states)
    values = mixture_tsallis(w, mu, sigma)
    if weights is None:
        weights = np.full(states.shape[0], 1.0 / states.shape[0])
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (states.shape[0],):
        raise ValueError("weights must align with the state batch")
    return EntropyEstimate(float(weights @ values), "analytic_integral")


def _traj_weights(batch: TrajectoryBatch, gamma: float) -> np.ndarray:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma!r}")
    return batch.step_discounts(gamma) / len(batch)


def tsallis_entropy_per_sample(
    policy: SparseMixturePolicy, batch: TrajectoryBatch, gamma: float
) -> EntropyEstimate:
    """Plug-in estimator: the analytic per-state entropy at visited states,
    discounted and averaged over episodes."""
    weights = _traj_weights(batch, gamma)
    est = tsallis_entropy_analytic(policy, batch.flat_states(), weights)
    return EntropyEstimate(est.value, "per_sample_plugin")


def naive_tsallis_per_action(
    policy: SparseMixturePolicy, batch: TrajectoryBatch, gamma: float
) -> EntropyEstimate:
    """Single-draw estimator ``(gamma^t/2N) sum (1 - pi(a_t|s_t))``.

    Unbiased for the same quantity as the plug-in form but built from
    density values at sampled actions, which exceed one on peaked
    mixtures; its variance is what makes it a poor training signal.
    """
    weights = _traj_weights(batch, gamma)
    dens = np.exp(policy.log_density_batch(batch.flat_states(), batch.flat_actions()))
    return EntropyEstimate(float(weights @ (0.5 * (1.0 - dens))), "per_action_naive")


def gibbs_entropy_loglik(
    policy: SparseMixturePolicy, batch: TrajectoryBatch, gamma: float
) -> EntropyEstimate:
    """Discounted negative log likelihood: the Shannon-entropy analogue used
    by soft (log-likelihood bonus) imitation baselines."""
    weights = _traj_weights(batch, gamma)
    logp = policy.log_density_batch(batch.flat_states(), batch.flat_actions())
    return EntropyEstimate(float(weights @ (-logp)), "gibbs_loglik")


def entropy_gradient(
    policy: SparseMixturePolicy, states: np.ndarray, weights: np.ndarray | None = None
) -> np.ndarray:
    """Exact parameter gradient of the weighted analytic Tsallis entropy."""
    return policy.entropy_grad(states, weights)[1]
