"""Molecule allocation among RXs for SD detection.

The surrogate objective is the constant-threshold error probability with a
continuous threshold (regularized incomplete Gamma form), evaluated on frozen
RX-history scenarios so that every start sees the same smooth function.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .analytics import (adaptive_threshold, coin_toss_rx_history, link_error_probs, q_sharp, rx_decision_probs,
                        sd_conditional_error, upsilon)
from .channel import ChannelModel
from .config import SystemConfig
from .stochastic import SeededStream

log = logging.getLogger(__name__)


@dataclass
class AllocationProblem:
    config: SystemConfig
    N: float = 2000.0
    p1: Optional[float] = None
    tx_prefix: Optional[tuple] = None
    n_scenarios: int = 1
    seed: int = 0
    coupled: bool = True
    xi_max: Optional[float] = None

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError("N must be > 0")
        if self.n_scenarios < 1:
            raise ValueError("need at least one scenario")
        if self.p1 is None:
            self.p1 = self.config.release.p1

    @property
    def K(self) -> int:
        return self.config.K

    @cached_property
    def model(self) -> ChannelModel:
        return ChannelModel(self.config)

    @cached_property
    def scenarios(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Frozen (TX prefix, RX history) pairs; the prefix has length L - 1."""
        stream = SeededStream(self.seed, (7,))
        L = self.config.timing.L
        out = []
        for s in range(self.n_scenarios):
            sub = stream.fork(s)
            if self.tx_prefix is not None:
                w = np.asarray(self.tx_prefix, dtype=np.int64)
            else:
                w = (sub.rng.random(L - 1) < self.p1).astype(np.int64)
            p = link_error_probs(self.model, w)
            out.append((w, coin_toss_rx_history(sub.fork(1), w, p, coupled=self.coupled)))
        return out

    @cached_property
    def xi_upper(self) -> float:
        if self.xi_max is not None:
            return float(self.xi_max)
        m = self.model
        top = 0.0
        for w, h in self.scenarios:
            isi = sum(self.N * float(h[k] @ m.fc_sum[k][len(w):0:-1]) if len(w) else 0.0 for k in range(self.K))
            sig = self.N * float(m.fc_sum[:, 0].max())
            top = max(top, isi + sig)
        return top + 12.0 * math.sqrt(top + 1.0) + 10.0

    def surrogate(self, s_alloc, xi: float, continuous: bool = True) -> float:
        vals = [q_sharp(s_alloc, xi, w, h, self.model, self.p1, continuous) for w, h in self.scenarios]
        return float(np.mean(vals))

    def full_objective(self, s_alloc) -> float:
        """Adaptive-threshold SD error probability averaged over the frozen scenarios."""
        s = np.asarray(s_alloc, dtype=float)
        vals = [float(sd_conditional_error(self.model, w, h, self.p1, s_k=s)) for w, h in self.scenarios]
        return float(np.mean(vals))

    def full_allocation(self, head) -> np.ndarray:
        head = np.asarray(head, dtype=float)
        return np.append(head, self.N - head.sum())


@dataclass
class AllocationSolution:
    s_dagger: np.ndarray
    xi_dagger: int
    objective: float
    starts_used: int
    converged: bool
    xi_continuous: float = float("nan")
    stationarity: float = float("nan")
    full_objective: float = float("nan")
    history: list = field(default_factory=list)


def _start_points(problem: AllocationProblem, starts: int, stream: SeededStream) -> List[np.ndarray]:
    K, N = problem.K, problem.N
    pts = [np.full(K, N / K)]
    pts += [N * np.eye(K)[k] for k in range(K)]
    rng = stream.rng
    while len(pts) < starts:
        pts.append(N * rng.dirichlet(np.ones(K)))
    return pts[:max(starts, 1)]


def _projected_gradient(problem: AllocationProblem, x: np.ndarray, scale: np.ndarray) -> float:
    """Finite-difference gradient of the surrogate in natural units, zeroed where bounds block descent.

    Coordinates are S_1..S_{K-1} (S_K = N - sum) and the threshold.
    """
    K, N = problem.K, problem.N

    def f(v):
        return problem.surrogate(problem.full_allocation(v[:K - 1]), v[K - 1])

    def feasible(v):
        return np.all(v >= 0) and v[:K - 1].sum() <= N and v[K - 1] <= problem.xi_upper

    g = np.zeros_like(x)
    f0 = f(x)
    for i in range(x.size):
        h = 1e-4 * scale[i]
        e = np.zeros_like(x)
        e[i] = h
        up, down = feasible(x + e), feasible(x - e)
        if up and down:
            g[i] = (f(x + e) - f(x - e)) / (2 * h)
        elif up:
            g[i] = min((f(x + e) - f0) / h, 0.0)   # only descent into the interior counts
        elif down:
            g[i] = max((f0 - f(x - e)) / h, 0.0)
    return float(np.linalg.norm(g))


def solve_allocation(problem: AllocationProblem, starts: Optional[int] = None,
                     stream: Optional[SeededStream] = None) -> AllocationSolution:
    """Multistart SLSQP on (S_1..S_{K-1}, xi) with S_K eliminated by the budget."""
    K, N = problem.K, problem.N
    starts = 20 + 2 * K if starts is None else starts
    if starts < 1:
        raise ValueError("starts must be >= 1")
    stream = stream or SeededStream(problem.seed, (11,))
    xi_hi = problem.xi_upper
    if K == 1:
        s = np.array([N])
        res = minimize(lambda v: problem.surrogate(s, v[0]), x0=[_initial_xi(problem, s)],
                       bounds=[(0.0, xi_hi)], method="L-BFGS-B")
        xi = float(res.x[0])
        return AllocationSolution(s_dagger=s, xi_dagger=int(math.ceil(xi)), objective=float(res.fun),
                                  starts_used=1, converged=bool(res.success), xi_continuous=xi,
                                  stationarity=0.0, full_objective=problem.full_objective(s))
    # work in scaled variables: allocation / N and xi / xi_hi
    scale = np.append(np.full(K - 1, N), xi_hi)

    def fun(u):
        v = u * scale
        # finite-difference probes may step just outside the simplex
        alloc = np.maximum(problem.full_allocation(v[:K - 1]), 0.0)
        return problem.surrogate(alloc, max(v[K - 1], 0.0))

    cons = [{"type": "ineq", "fun": lambda u: 1.0 - np.sum(u[:K - 1])}]
    bounds = [(0.0, 1.0)] * K
    runs = []
    for p in _start_points(problem, starts, stream):
        u0 = np.append(p[:K - 1] / N, _initial_xi(problem, p) / xi_hi)
        res = minimize(fun, u0, method="SLSQP", bounds=bounds, constraints=cons,
                       options={"ftol": 1e-14, "maxiter": 500, "eps": 1e-7})
        u = np.clip(res.x, 0.0, 1.0)
        if u[:K - 1].sum() > 1.0:
            u[:K - 1] /= u[:K - 1].sum()
        val = fun(u)
        alloc = problem.full_allocation(u[:K - 1] * N)
        runs.append((val, tuple(np.round(alloc, 9)), u, bool(res.success)))
    runs.sort(key=lambda r: (r[0], r[1]))
    val, _, u, ok = runs[0]
    v = u * scale
    alloc = problem.full_allocation(v[:K - 1])
    alloc = np.clip(alloc, 0.0, N)
    stat = _projected_gradient(problem, v, scale)
    return AllocationSolution(s_dagger=alloc, xi_dagger=int(math.ceil(v[K - 1])), objective=float(val),
                              starts_used=len(runs), converged=ok, xi_continuous=float(v[K - 1]),
                              stationarity=stat, full_objective=problem.full_objective(alloc),
                              history=[(r[0], r[1]) for r in runs])


def _initial_xi(problem: AllocationProblem, alloc) -> float:
    w, h = problem.scenarios[0]
    return float(max(adaptive_threshold(problem.model, w, h, s_k=np.asarray(alloc, dtype=float)), 0.5))


def lattice(N: float, K: int, step: float, limit: int = 10_000) -> np.ndarray:
    n = int(round(N / step))
    if n < 1 or abs(n * step - N) > 1e-9 * N:
        raise ValueError("grid step must divide N")
    count = math.comb(n + K - 1, K - 1)
    if count > limit:
        raise ValueError(f"grid of {count} points exceeds the limit of {limit}")
    pts = []
    for c in itertools.product(range(n + 1), repeat=K - 1):
        if sum(c) <= n:
            pts.append(list(c) + [n - sum(c)])
    return np.array(pts, dtype=float) * step


def exhaustive_grid(problem: AllocationProblem, grid_step: float) -> AllocationSolution:
    """Adaptive-threshold objective on the allocation lattice; the argmin is the reference optimum."""
    pts = lattice(problem.N, problem.K, grid_step)
    vals = np.array([problem.full_objective(p) for p in pts])
    order = sorted(range(len(pts)), key=lambda i: (vals[i], tuple(pts[i])))
    i = order[0]
    w, h = problem.scenarios[0]
    xi = adaptive_threshold(problem.model, w, h, s_k=pts[i])
    return AllocationSolution(s_dagger=pts[i], xi_dagger=int(xi), objective=float(vals[i]), starts_used=len(pts),
                              converged=True, full_objective=float(vals[i]),
                              history=[(float(v), tuple(p)) for v, p in zip(vals, pts)])


@dataclass
class SymmetricCheck:
    upsilon: float
    xi: int
    first_derivative: float
    second_derivative: float
    objective: float
    passed: bool


def _is_symmetric(cfg: SystemConfig, tol: float = 1e-12) -> bool:
    sp, rel = cfg.spatial, cfg.release
    if cfg.K != 2:
        return False
    d_tx, d_fc = sp.d_tx, sp.d_fc
    return (abs(d_tx[0] - d_tx[1]) <= tol * max(d_tx) and abs(d_fc[0] - d_fc[1]) <= tol * max(d_fc)
            and sp.rx_radius[0] == sp.rx_radius[1] and rel.d_k[0] == rel.d_k[1]
            and cfg.rx_thresholds[0] == cfg.rx_thresholds[1])


def symmetric_local_min_check(problem: AllocationProblem) -> SymmetricCheck:
    """Sign condition and central differences of the surrogate at the equal split (K = 2)."""
    if not _is_symmetric(problem.config):
        raise ValueError("needs a symmetric two-RX geometry")
    N = problem.N
    w, hist = problem.scenarios[0]
    s_eq = np.array([N / 2, N / 2])
    xi = adaptive_threshold(problem.model, w, hist, s_k=s_eq)
    probs = rx_decision_probs(problem.model, 1, w, hist)
    sigma = float(probs.sigma.mean())
    ups = upsilon(xi, N, float(probs.nu[0]), sigma, probs.alpha_sym, probs.beta_sym, problem.p1)
    h = N / 1000.0

    def f(s1):
        return q_sharp(np.array([s1, N - s1]), float(xi), w, hist, problem.model, problem.p1, continuous=True)

    f0, fp, fm = f(N / 2), f(N / 2 + h), f(N / 2 - h)
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / (h * h)
    stationary = abs(fp - fm) <= 1e-6 * abs(f0)
    return SymmetricCheck(upsilon=ups, xi=int(xi), first_derivative=d1, second_derivative=d2, objective=f0,
                          passed=bool(ups > 0 and stationary and d2 > 0))
