"""Federated training of an L2-regularized squared-loss model.

Two modes match the two packet kinds. Primal mode is FedAvg: each user runs
seeded sequential SGD from the broadcast weights and sends (n_k, w_k);
aggregation is the sample-weighted mean. Primal-dual mode is distributed
dual coordinate ascent: each user takes exact maximizing steps on its own
dual coordinates, sends (1, delta_v_k), and the shared iterate moves by the
average; both the dual variables and the shared iterate scale the local
step by 1/K so v = X^T alpha / (xi n) stays consistent.

Aggregation goes through the in-network message algebra, so the global
trajectory is identical bit for bit no matter how users are grouped onto
edges.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from fedinc.aggregation import cloud_merge, edge_aggregate, global_update, make_user_packet
from fedinc.model import CLOUD
from fedinc.seeds import rng_for


@dataclass(frozen=True)
class LossSpec:
    """Squared loss with L2 regularization weight xi."""

    xi: float = 0.1

    def __post_init__(self):
        if self.xi <= 0:
            raise ValueError("regularization weight xi must be positive")


@dataclass
class Dataset:
    """User-partitioned regression data: features[k] is (n_k, d)."""

    features: list
    targets: list

    def __post_init__(self):
        if len(self.features) != len(self.targets) or not self.features:
            raise ValueError("features and targets must align, one entry per user")
        d = self.features[0].shape[1]
        for x_k, y_k in zip(self.features, self.targets):
            if x_k.ndim != 2 or x_k.shape[1] != d:
                raise ValueError("all users must share the feature dimension")
            if x_k.shape[0] != y_k.shape[0] or x_k.shape[0] == 0:
                raise ValueError("each user needs matching, nonempty features and targets")

    @property
    def num_users(self) -> int:
        return len(self.features)

    @property
    def dim(self) -> int:
        return self.features[0].shape[1]

    @property
    def total_samples(self) -> int:
        return sum(x.shape[0] for x in self.features)

    def stacked(self) -> tuple:
        return np.vstack(self.features), np.concatenate(self.targets)


@dataclass
class TrainState:
    """Mutable state across rounds: the global vector, per-user duals (only
    used in primal-dual mode), and the round counter."""

    psi: np.ndarray
    alpha: list = field(default_factory=list)
    round_index: int = 0


def synthetic_dataset(num_users: int, samples_per_user, dim: int, seed,
                      noise: float = 0.1) -> Dataset:
    """Linear-model data for the desk-scale experiments, seeded."""
    rng = rng_for(seed, "dataset")
    truth = rng.normal(size=dim)
    counts = np.broadcast_to(np.asarray(samples_per_user, dtype=int), (num_users,))
    features, targets = [], []
    for k in range(num_users):
        x = rng.normal(size=(int(counts[k]), dim)) / np.sqrt(dim)
        y = x @ truth + noise * rng.normal(size=int(counts[k]))
        features.append(x)
        targets.append(y)
    return Dataset(features, targets)


def primal_objective(w, dataset: Dataset, loss: LossSpec) -> float:
    """(1/n) sum_i 0.5 (x_i^T w - y_i)^2 + xi * 0.5 ||w||^2."""
    x, y = dataset.stacked()
    resid = x @ w - y
    return float(0.5 * resid @ resid / len(y) + 0.5 * loss.xi * (w @ w))


def primal_gradient(w, dataset: Dataset, loss: LossSpec) -> np.ndarray:
    x, y = dataset.stacked()
    return x.T @ (x @ w - y) / len(y) + loss.xi * w


def shared_iterate(alpha, dataset: Dataset, loss: LossSpec) -> np.ndarray:
    """v = X^T alpha / (xi n); also the primal candidate w(alpha)."""
    x, _ = dataset.stacked()
    a = np.concatenate(alpha)
    return x.T @ a / (loss.xi * len(a))


def dual_objective(alpha, dataset: Dataset, loss: LossSpec) -> float:
    """(1/n) sum_i (alpha_i y_i - alpha_i^2 / 2) - (xi/2) ||v(alpha)||^2."""
    _, y = dataset.stacked()
    a = np.concatenate(alpha)
    v = shared_iterate(alpha, dataset, loss)
    return float((a @ y - 0.5 * a @ a) / len(y) - 0.5 * loss.xi * (v @ v))


def normal_equation_solution(dataset: Dataset, loss: LossSpec) -> np.ndarray:
    """Closed-form ridge optimum (X^T X / n + xi I) w = X^T y / n."""
    x, y = dataset.stacked()
    n, d = x.shape
    return np.linalg.solve(x.T @ x / n + loss.xi * np.eye(d), x.T @ y / n)


def local_sgd_update(w_start, features, targets, loss: LossSpec, step_size: float,
                     num_steps: int, seed) -> np.ndarray:
    """Sequential SGD on one user's local objective.

    Each step draws a sample index uniformly and applies
    w <- w - eta * ((x_i^T w - y_i) x_i + xi w).
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    rng = np.random.default_rng(seed)
    w = np.array(w_start, dtype=np.float64, copy=True)
    n_k = features.shape[0]
    for i in rng.integers(0, n_k, size=num_steps):
        resid = features[i] @ w - targets[i]
        w -= step_size * (resid * features[i] + loss.xi * w)
    return w


def local_dual_update(v_start, alpha_k, features, targets, loss: LossSpec,
                      total_samples: int, num_steps: int, seed) -> tuple:
    """Exact coordinate ascent on one user's dual block.

    Each step draws a local index uniformly and maximizes the dual in that
    coordinate exactly; for squared loss the maximizer is
    delta = (y_i - alpha_i - x_i^T v) / (1 + ||x_i||^2 / (xi n)).
    Returns (delta_alpha_k, delta_v_k) before any aggregation scaling.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    rng = np.random.default_rng(seed)
    xi_n = loss.xi * total_samples
    alpha = np.array(alpha_k, dtype=np.float64, copy=True)
    alpha0 = alpha.copy()
    v = np.array(v_start, dtype=np.float64, copy=True)
    n_k = features.shape[0]
    for i in rng.integers(0, n_k, size=num_steps):
        x_i = features[i]
        delta = (targets[i] - alpha[i] - x_i @ v) / (1.0 + (x_i @ x_i) / xi_n)
        alpha[i] += delta
        v += (delta / xi_n) * x_i
    return alpha - alpha0, v - np.asarray(v_start, dtype=np.float64)


def _route_and_merge(carry, psi_prev, packets, assignment):
    """Push packets through the assignment's aggregation tree."""
    nodes = assignment.nodes
    direct = [p for p, node in zip(packets, nodes) if node == CLOUD]
    edge_msgs = []
    for m in range(1, assignment.matrix.shape[1]):
        group = [p for p, node in zip(packets, nodes) if node == m]
        if group:
            edge_msgs.append(edge_aggregate(group))
    aggregate = cloud_merge(direct, edge_msgs)
    return global_update(carry, psi_prev, [aggregate])


def run_fl_round(mode: str, state: TrainState, dataset: Dataset, loss: LossSpec,
                 assignment, hyper: dict, round_seed) -> dict:
    """One synchronous round: broadcast, local updates, routed aggregation.

    mode is 'primal' (FedAvg) or 'primal_dual' (dual coordinate ascent).
    Mutates state in place and returns a metrics row. Per-user streams are
    seeded by (round_seed, user id), so the trajectory is independent of
    scheduling, iteration order and routing; the exact aggregation algebra
    makes it independent of the assignment bit for bit.
    """
    k = dataset.num_users
    if assignment.matrix.shape[0] != k:
        raise ValueError("assignment must cover every user")

    if mode == "primal":
        steps = int(hyper.get("sgd_steps", 32))
        eta = float(hyper["step_size"])
        packets = []
        for u in range(k):
            w_u = local_sgd_update(state.psi, dataset.features[u], dataset.targets[u],
                                   loss, eta, steps, rng_for(round_seed, "sgd", u))
            packets.append(make_user_packet("primal", dataset.features[u].shape[0], w_u))
        state.psi = _route_and_merge(0.0, state.psi, packets, assignment)
    elif mode == "primal_dual":
        steps = int(hyper.get("dual_steps", 32))
        n = dataset.total_samples
        if not state.alpha:
            state.alpha = [np.zeros(x.shape[0]) for x in dataset.features]
        packets, deltas = [], []
        for u in range(k):
            d_alpha, d_v = local_dual_update(state.psi, state.alpha[u],
                                             dataset.features[u], dataset.targets[u],
                                             loss, n, steps,
                                             rng_for(round_seed, "dual", u))
            deltas.append(d_alpha)
            packets.append(make_user_packet("primal_dual", dataset.features[u].shape[0], d_v))
        state.psi = _route_and_merge(1.0, state.psi, packets, assignment)
        for u in range(k):
            state.alpha[u] = state.alpha[u] + deltas[u] / k
    else:
        raise ValueError(f"unknown training mode {mode!r}")

    state.round_index += 1
    metrics = {
        "round": state.round_index,
        "mode": mode,
        "primal_objective": primal_objective(state.psi, dataset, loss),
    }
    if mode == "primal_dual":
        metrics["dual_objective"] = dual_objective(state.alpha, dataset, loss)
        metrics["duality_gap"] = metrics["primal_objective"] - metrics["dual_objective"]
    return metrics
