"""Variational free-energy minimization over circuit parameters.

The mixed state is the reduction of the circuit's output ``|psi(theta)>`` onto
the physical block, which sits at the left end of the chain. Its energy is
``<psi| H (x) I |psi>`` and its entropy is the entanglement entropy of the
cut between the physical and ancilla blocks.
"""

from __future__ import annotations

import json
import math
import warnings
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .circuitir import Circuit, simulate
from .errors import OptimizerAbort, PreparationFailedError
from .tensornet import CHI_MAX_DEFAULT, SVD_CUTOFF_DEFAULT, Mpo, entanglement_entropy, expectation_mpo

BETA_FLOOR = 1e-5
TRUNCATION_WARNING = 1e-4
SCHEMA_VERSION = 1


def clamp_beta(beta: float) -> tuple[float, bool]:
    """Map ``beta = 0`` to the regularized ``1e-5``; returns ``(beta, clamped)``."""
    beta = float(beta)
    if not math.isfinite(beta) or beta < 0:
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    if beta < BETA_FLOOR:
        return BETA_FLOOR, True
    return beta, False


@dataclass(frozen=True)
class ObjectiveContext:
    circuit: Circuit
    hamiltonian: Mpo
    beta: float
    chi_max: int = CHI_MAX_DEFAULT
    svd_cutoff: float = SVD_CUTOFF_DEFAULT
    ancilla_cut: int | None = None
    beta_clamped: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        beta, clamped = clamp_beta(self.beta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "beta_clamped", clamped)
        if self.ancilla_cut is None:
            object.__setattr__(self, "ancilla_cut", self.circuit.n_physical)
        if self.ancilla_cut != self.circuit.n_physical:
            raise ValueError("ancilla_cut must equal n_physical for the block layout")
        if self.hamiltonian.n_sites != self.circuit.n_qubits:
            raise ValueError(
                f"MPO has {self.hamiltonian.n_sites} sites, circuit has {self.circuit.n_qubits} qubits"
            )


@dataclass(frozen=True)
class FreeEnergy:
    F: float
    E: float
    S: float
    discarded_weight: float
    truncation_warning: bool


def free_energy(theta: Sequence[float], ctx: ObjectiveContext) -> FreeEnergy:
    """Evaluate ``F = E - S / beta`` for the state prepared by ``theta``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.shape[0] != ctx.circuit.n_params:
        raise ValueError(f"expected {ctx.circuit.n_params} parameters, got {theta.shape[0]}")
    state = simulate(ctx.circuit, theta, chi_max=ctx.chi_max, svd_cutoff=ctx.svd_cutoff)
    energy = expectation_mpo(state, ctx.hamiltonian)
    entropy = entanglement_entropy(state, ctx.ancilla_cut)
    lost = state.cumulative_discarded_weight
    return FreeEnergy(
        F=energy - entropy / ctx.beta,
        E=energy,
        S=entropy,
        discarded_weight=lost,
        truncation_warning=lost > TRUNCATION_WARNING,
    )


@dataclass
class MinimizeResult:
    theta: np.ndarray
    fun: float
    iterations: int
    trace: list[tuple[int, float]]


def _simplex_gradient(x: np.ndarray, f: np.ndarray, kopt: int) -> tuple[list[int], np.ndarray, np.ndarray]:
    """Linear interpolation through the simplex, anchored at vertex ``kopt``.

    Returns the other vertex indices, the Lagrange gradient matrix (column
    ``j`` is the gradient of the linear polynomial that is 1 at ``others[j]``
    and 0 elsewhere) and the model gradient.
    """
    others = [k for k in range(x.shape[0]) if k != kopt]
    lagrange = np.linalg.inv(x[others] - x[kopt])
    return others, lagrange, lagrange @ (f[others] - f[kopt])


def _linear_trust_region(
    f: Callable[[np.ndarray], float], x0: np.ndarray, budget: Callable[[], bool], rho_begin: float, rho_end: float
) -> None:
    """Unconstrained COBYLA: linear models on an ``n + 1`` point simplex.

    The caller's ``f`` tracks the best point; ``budget()`` is False once the
    evaluation allowance is spent.
    """
    n = x0.shape[0]
    x = np.tile(x0, (n + 1, 1))
    x[1:] += rho_begin * np.eye(n)
    fx = np.empty(n + 1)
    fx[0] = f(x[0])
    for j in range(1, n + 1):
        if not budget():
            return
        fx[j] = f(x[j])
    kopt = int(np.argmin(fx))
    rho = delta = rho_begin
    while budget():
        others, lagrange, grad = _simplex_gradient(x, fx, kopt)
        gnorm = np.linalg.norm(grad)
        ratio = -1.0
        if gnorm > 0:
            step = -delta * grad / gnorm
            trial = x[kopt] + step
            ftrial = f(trial)
            ratio = (fx[kopt] - ftrial) / (delta * gnorm)
            length = delta
            if ratio <= 0.1:
                delta *= 0.5
            elif ratio <= 0.7:
                delta = max(0.5 * delta, length)
            else:
                delta = max(0.5 * delta, 2.0 * length)
            if delta <= 1.5 * rho:
                delta = rho
            # replace the vertex whose Lagrange value (weighted by distance) is largest
            lag = step @ lagrange
            dist = np.linalg.norm(x[others] - x[kopt], axis=1)
            score = np.abs(lag) * np.maximum(1.0, (dist / delta) ** 2)
            if ftrial < fx[kopt]:
                cand = np.append(score, abs(1.0 - lag.sum()))
                j = int(np.argmax(cand))
                k = others[j] if j < n else kopt
                x[k], fx[k], kopt = trial, ftrial, k
            else:
                j = int(np.argmax(score))
                if score[j] > 1.0:
                    x[others[j]], fx[others[j]] = trial, ftrial
        if ratio > 0.1:
            continue
        others = [k for k in range(n + 1) if k != kopt]
        dist = np.linalg.norm(x[others] - x[kopt], axis=1)
        far = int(np.argmax(dist))
        if dist[far] > 2.0 * delta:
            if not budget():
                return
            # geometry step: move the far vertex to a well-poised point near the optimum
            others, lagrange, grad = _simplex_gradient(x, fx, kopt)
            col = lagrange[:, far]
            step = delta * col / np.linalg.norm(col)
            if grad @ step > 0:
                step = -step
            k = others[far]
            x[k] = x[kopt] + step
            fx[k] = f(x[k])
            if fx[k] < fx[kopt]:
                kopt = k
            continue
        if delta <= rho:
            if rho <= rho_end:
                return
            if rho > 250 * rho_end:
                new = 0.1 * rho
            elif rho > 16 * rho_end:
                new = math.sqrt(rho * rho_end)
            else:
                new = rho_end
            delta, rho = max(0.5 * rho, new), new


def cobyla_minimize(
    f: Callable[[np.ndarray], float],
    theta0: Sequence[float],
    max_iter: int = 10_000,
    rho_begin: float = 0.5,
    rho_end: float = 1e-6,
    method: str = "COBYLA",
) -> MinimizeResult:
    """Derivative-free unconstrained minimization.

    ``method="COBYLA"`` runs the linear-approximation trust-region method,
    stopping when the radius reaches ``rho_end`` or the budget is spent;
    ``"Nelder-Mead"`` is a simplex fallback with the same budget semantics.
    The best point ever evaluated is returned, so ``fun <= f(theta0)``.
    ``iterations`` counts objective evaluations and ``trace`` holds
    ``(evaluation, best value so far)`` at every improvement.

    Raises:
        OptimizerAbort: the objective returned NaN or infinity.
    """
    theta0 = np.asarray(theta0, dtype=float).reshape(-1)
    n = theta0.shape[0]
    if max_iter < n + 2:
        raise ValueError(f"max_iter must be >= dimension + 2 = {n + 2}")
    if not rho_begin > rho_end > 0:
        raise ValueError("need rho_begin > rho_end > 0")
    if method not in ("COBYLA", "Nelder-Mead"):
        raise ValueError(f"unknown method {method!r}")

    best_x = theta0.copy()
    best_f = math.inf
    count = 0
    trace: list[tuple[int, float]] = []

    def wrapped(x: np.ndarray) -> float:
        nonlocal best_x, best_f, count
        value = float(f(x))
        count += 1
        if not math.isfinite(value):
            raise OptimizerAbort(f"objective returned {value} at evaluation {count}")
        if value < best_f:
            best_f, best_x = value, np.array(x, dtype=float)
            trace.append((count, value))
        return value

    if method == "COBYLA":
        _linear_trust_region(wrapped, theta0, lambda: count < max_iter, rho_begin, rho_end)
    else:
        simplex = np.vstack([theta0] + [theta0 + rho_begin * e for e in np.eye(n)])
        options = {"maxfev": max_iter - 1, "xatol": rho_end, "fatol": 0.0, "initial_simplex": simplex}
        wrapped(theta0)  # the start point counts against the budget
        minimize(wrapped, theta0, method=method, options=options)
    return MinimizeResult(theta=best_x, fun=best_f, iterations=count, trace=trace)


@dataclass
class PrepRecord:
    beta: float
    theta_star: list[float]
    F: float
    E: float
    S: float
    restarts_run: int
    best_restart: int
    iterations_used: int
    seed: int
    convergence_trace: list[tuple[int, float]]
    beta_requested: float = 0.0
    beta_clamped: bool = False
    discarded_weight: float = 0.0
    truncation_warning: bool = False
    restart_outcomes: list[dict] = field(default_factory=list)
    label: str = ""
    exact_F: float | None = None
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        data = asdict(self)
        data["convergence_trace"] = [list(p) for p in self.convergence_trace]
        return json.dumps({"kind": "prep", **data})

    @classmethod
    def from_json(cls, line: str) -> PrepRecord:
        data = json.loads(line)
        if data.pop("kind", "prep") != "prep":
            raise ValueError("not a prep record")
        data["convergence_trace"] = [(int(i), float(v)) for i, v in data["convergence_trace"]]
        return cls(**data)


def initial_theta(n_params: int, seed: int, restart: int) -> np.ndarray:
    """Uniform(-pi, pi) start for restart ``restart``; independent of the restart count."""
    return np.random.default_rng([seed, restart]).uniform(-np.pi, np.pi, n_params)


@dataclass(frozen=True)
class _RestartTask:
    ctx: ObjectiveContext
    restart: int
    seed: int
    max_iter: int
    rho_begin: float
    rho_end: float
    method: str


def _run_restart(task: _RestartTask) -> tuple[int, MinimizeResult | None, str]:
    def objective(x: np.ndarray) -> float:
        return free_energy(x, task.ctx).F

    theta0 = initial_theta(task.ctx.circuit.n_params, task.seed, task.restart)
    try:
        res = cobyla_minimize(objective, theta0, task.max_iter, task.rho_begin, task.rho_end, task.method)
    except (OptimizerAbort, np.linalg.LinAlgError) as exc:
        return task.restart, None, f"aborted: {exc}"
    return task.restart, res, "ok"


def multistart_prepare(
    ctx: ObjectiveContext,
    restarts: int,
    seed: int,
    max_iter: int = 10_000,
    rho_begin: float = 0.5,
    rho_end: float = 1e-6,
    method: str = "COBYLA",
    workers: int = 1,
    beta_requested: float | None = None,
    label: str = "",
) -> PrepRecord:
    """Best-of-``restarts`` minimization of the free energy at ``ctx.beta``.

    Restart ``k`` always starts from the same point for a given ``seed``, so
    adding restarts can only lower the reported minimum. Results are merged
    in restart order, making the record independent of ``workers``.

    Raises:
        PreparationFailedError: every restart aborted.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    tasks = [_RestartTask(ctx, k, seed, max_iter, rho_begin, rho_end, method) for k in range(restarts)]
    if workers > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_restart, tasks))
    else:
        results = [_run_restart(t) for t in tasks]

    outcomes = []
    best: tuple[int, MinimizeResult] | None = None
    for k, res, status in sorted(results, key=lambda r: r[0]):
        if res is None:
            outcomes.append({"restart": k, "status": status})
            continue
        outcomes.append({"restart": k, "status": status, "F": res.fun, "iterations": res.iterations})
        if best is None or res.fun < best[1].fun:
            best = (k, res)
    if best is None:
        raise PreparationFailedError("all restarts aborted", diagnostics=outcomes)

    k, res = best
    final = free_energy(res.theta, ctx)
    if final.truncation_warning:
        warnings.warn(
            f"MPS truncation discarded weight {final.discarded_weight:.2e} at beta={ctx.beta}",
            RuntimeWarning,
            stacklevel=2,
        )
    return PrepRecord(
        beta=ctx.beta,
        theta_star=[float(x) for x in res.theta],
        F=final.F,
        E=final.E,
        S=final.S,
        restarts_run=restarts,
        best_restart=k,
        iterations_used=sum(o.get("iterations", 0) for o in outcomes),
        seed=seed,
        convergence_trace=res.trace,
        beta_requested=ctx.beta if beta_requested is None else float(beta_requested),
        beta_clamped=ctx.beta_clamped,
        discarded_weight=final.discarded_weight,
        truncation_warning=final.truncation_warning,
        restart_outcomes=outcomes,
        label=label,
    )


def infidelity(rho: np.ndarray, sigma: np.ndarray, tol: float = 1e-10) -> float:
    """``1 - (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``, clamped to ``[0, 1]``.

    Raises:
        ValueError: shapes differ or either input has an eigenvalue below ``-tol``.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape != sigma.shape:
        raise ValueError("rho and sigma must be square matrices of equal shape")
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    ws = np.linalg.eigvalsh((sigma + sigma.conj().T) / 2)
    if w.min() < -tol or ws.min() < -tol:
        raise ValueError("density matrices must be positive semidefinite")
    sqrt_rho = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    m = sqrt_rho @ sigma @ sqrt_rho
    ev = np.linalg.eigvalsh((m + m.conj().T) / 2)
    fid = float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)
    return min(1.0, max(0.0, 1.0 - fid))


def prepared_density_matrix(
    circuit: Circuit, theta: Sequence[float], site_layout: Sequence[int] | None = None
) -> np.ndarray:
    """Dense reduced state of the physical block, by statevector and partial trace.

    With ``site_layout`` (lattice site -> chain position) the qubits are
    reordered so qubit ``s`` of the result is lattice site ``s``.
    """
    from .oracles.dense import reduced_density_matrix, statevector

    n = circuit.n_physical
    rho = reduced_density_matrix(statevector(circuit, theta), n)
    if site_layout is not None and tuple(site_layout) != tuple(range(n)):
        perm = [int(p) for p in site_layout]
        rho = rho.reshape((2,) * (2 * n)).transpose(perm + [n + p for p in perm]).reshape(2**n, 2**n)
    return rho
