"""Families of runs over (eps, b, N) compared on a shared Eulerian lattice.

Each run is advanced in segments that end exactly on the comparison
times, resampled conservatively onto a uniform radial lattice, and reduced
to (rho, m) space-time arrays. Runs execute on a process pool and are merged
by index, so the record does not depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from nsp_free import fields, initdata, solver
from nsp_free.constants import ModelParams
from nsp_free.monitor import Monitor

# concentration radii as fractions of b; the lower monitor defaults sit
# inside the inner boundary 1/b for b = 4 and would only ever read zero
SWEEP_DELTA_FRACTIONS = (0.1, 0.2, 0.3, 0.5)
# default distance exponents stay this far below their open upper bounds
P_MARGIN = 0.1


@dataclass(frozen=True)
class InitialSpec:
    """How each run's initial state is made.

    ``kind='uniform'`` is the constant-density star rho0 on [1/b, b] at rest;
    any other kind names an ``initdata.PRESETS`` entry fed through the
    construction pipeline with total mass ``M`` and extra keyword ``options``.
    """

    kind: str = "uniform"
    rho0: float = 1.0
    M: float = 1.0
    options: tuple = ()

    def state(self, params: ModelParams, b: float, N: int, grid_rule: str = "mass") -> solver.LagrangianState:
        if self.kind == "uniform":
            return solver.uniform_state(params, b, N, self.rho0, grid_rule)
        if self.kind not in initdata.PRESETS:
            raise ValueError(f"unknown initial kind {self.kind!r}")
        profile = initdata.PRESETS[self.kind](self.M, n=params.n, **dict(self.options))
        data = initdata.build(profile, params, b)
        return solver.init_state(data, N, params, grid_rule)


@dataclass(frozen=True)
class SweepPlan:
    n: int = 3
    gamma: float = 2.0
    kappa: int = 1
    eps_ladder: tuple = (0.1, 0.05, 0.025)
    b: object = 4.0  # a float, or one value per eps (b-ladder mode)
    N0: int = 512  # cells at eps_ladder[0]
    N_cap: int = 4096
    N_exponent: float = 0.5
    T: float = 1.0
    t_window: tuple = (0.2, 1.0)
    nt: int = 17
    r_window: tuple = (0.2, 0.8)  # fractions of min b
    nr: int = 241
    p_rho: Optional[tuple] = None  # default (1, gamma + 1 - P_MARGIN)
    p_m: Optional[tuple] = None  # default (1, 3(gamma+1)/(gamma+3) - P_MARGIN)
    delta_ladder: Optional[tuple] = None
    initial: InitialSpec = InitialSpec()
    grid_rule: str = "mass"
    cfl: float = 0.4

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_ladder)
        object.__setattr__(self, "eps_ladder", eps)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("eps ladder must be non-empty and positive")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("eps ladder must be strictly decreasing")
        bs = self.b_values
        if len(bs) != len(eps):
            raise ValueError("b schedule length must match the eps ladder")
        lo, hi = self.window_radii
        if not 0 < lo < hi < min(bs):
            raise ValueError("comparison window [d, D] must lie in (0, min b)")
        t0, t1 = self.t_window
        if not 0 <= t0 < t1 <= self.T:
            raise ValueError("time window must lie in [0, T]")
        if self.nt < 2 or self.nr < 2:
            raise ValueError("lattice needs at least two points per axis")
        if self.p_rho is None:
            object.__setattr__(self, "p_rho", (1.0, self.gamma + 1 - P_MARGIN))
        if self.p_m is None:
            object.__setattr__(self, "p_m", (1.0, self.m_exponent_bound - P_MARGIN))
        object.__setattr__(self, "p_rho", tuple(float(p) for p in self.p_rho))
        object.__setattr__(self, "p_m", tuple(float(p) for p in self.p_m))
        for p in self.p_rho:
            if not 1 <= p < self.gamma + 1:
                raise ValueError(f"rho distance exponent {p} outside [1, gamma+1)")
        for p in self.p_m:
            if not 1 <= p < self.m_exponent_bound:
                raise ValueError(f"m distance exponent {p} outside [1, 3(gamma+1)/(gamma+3))")

    @property
    def m_exponent_bound(self) -> float:
        return 3 * (self.gamma + 1) / (self.gamma + 3)

    @property
    def b_values(self) -> tuple:
        if isinstance(self.b, (int, float)):
            return (float(self.b),) * len(self.eps_ladder)
        return tuple(float(v) for v in self.b)

    @property
    def window_radii(self) -> tuple[float, float]:
        bmin = min(self.b_values)
        return self.r_window[0] * bmin, self.r_window[1] * bmin

    def cells(self, eps: float) -> int:
        """N(eps) = N0 (eps0/eps)^N_exponent, capped."""
        N = self.N0 * (self.eps_ladder[0] / eps) ** self.N_exponent
        return int(min(self.N_cap, round(N)))

    def deltas(self) -> tuple:
        if self.delta_ladder is not None:
            return tuple(float(d) for d in self.delta_ladder)
        bmin = min(self.b_values)
        return tuple(f * bmin for f in SWEEP_DELTA_FRACTIONS)

    def lattice(self) -> tuple[np.ndarray, np.ndarray]:
        d, D = self.window_radii
        return np.linspace(*self.t_window, self.nt), np.linspace(d, D, self.nr)

    def params(self, k: int) -> ModelParams:
        return ModelParams(self.n, self.gamma, self.kappa, self.eps_ladder[k])


@dataclass
class RunResult:
    index: int
    eps: float
    b: float
    N: int
    mass: float
    halted: bool
    halt_time: Optional[float]
    halt_reason: Optional[str]
    summary: dict
    min_b: float
    rho: np.ndarray  # (nt, nr); NaN rows after a halt
    m: np.ndarray
    concentration: dict  # delta -> max over lattice times
    trajectory: dict = field(default_factory=dict)  # t, b, rho_b, oracle at report times


@dataclass
class SweepRecord:
    plan: SweepPlan
    runs: list[RunResult]
    distances: dict = field(default_factory=dict)  # (quantity, p) -> matrix
    concentration: np.ndarray = None  # (len eps, len delta)

    def to_json(self) -> dict:
        runs = []
        for r in self.runs:
            runs.append({
                "index": r.index, "eps": r.eps, "b": r.b, "N": r.N, "mass": r.mass, "min_b": r.min_b,
                "halted": r.halted, "halt_time": r.halt_time, "halt_reason": r.halt_reason,
                "summary": r.summary,
                "concentration": {repr(k): v for k, v in r.concentration.items()},
                "trajectory": r.trajectory,
            })
        plan = asdict(self.plan)
        return {
            "plan": plan,
            "runs": runs,
            "distances": {f"{q}_p{p:g}": _nan_to_none(mat.tolist()) for (q, p), mat in self.distances.items()},
            "successive_d1_rho": _nan_to_none(self.successive("rho", 1.0).tolist())
            if ("rho", 1.0) in self.distances else None,
        }

    def successive(self, quantity: str, p: float) -> np.ndarray:
        mat = self.distances[(quantity, float(p))]
        return np.array([mat[k, k + 1] for k in range(mat.shape[0] - 1)])


def _nan_to_none(obj):
    if isinstance(obj, list):
        return [_nan_to_none(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class _Once:
    """Forward to a monitor but ignore the restart call of later segments."""

    def __init__(self, mon: Monitor):
        self.mon = mon
        self.started = False

    def __call__(self, new, old, dt):
        if old is None:
            if self.started:
                return
            self.started = True
        self.mon(new, old, dt)


def run_one(plan: SweepPlan, k: int) -> RunResult:
    """Single run k of the plan, sampled on the shared lattice."""
    params = plan.params(k)
    b = plan.b_values[k]
    N = plan.cells(params.eps)
    times, radii = plan.lattice()
    deltas = plan.deltas()
    state = plan.initial.state(params, b, N, plan.grid_rule)
    d, D = plan.window_radii
    mon = Monitor(cadence=(times[1] - times[0]), K=(d, D), delta_ladder=deltas, slice_checks=False)
    obs = _Once(mon)
    rho = np.full((times.size, radii.size), np.nan)
    m = np.full_like(rho, np.nan)
    conc = dict.fromkeys(deltas, 0.0)
    halted, halt_time, reason = False, None, None
    try:
        for i, t in enumerate(times):
            if t > state.tau:
                state = solver.run(state, t - state.tau, obs, cfl=plan.cfl)
            elif not obs.started:
                obs(state, None, 0.0)
            sl = fields.resample(state, radii)
            rho[i], m[i] = sl.rho, sl.m
            full = fields.cell_slice(state)
            for dl, v in zip(deltas, params.omega_n * full.cumulative_mass(np.asarray(deltas))):
                conc[dl] = max(conc[dl], float(v))
        if plan.T > state.tau:
            state = solver.run(state, plan.T - state.tau, obs, cfl=plan.cfl)
    except solver.SimulationHalted as exc:
        halted, halt_time, reason = True, float(exc.state.tau), str(exc)
        state = exc.state
    mon.finalize()
    traj = {
        "t": [r.tau for r in mon.reports],
        "b": [r.b_of_t for r in mon.reports],
        "rho_b": [r.rho_boundary for r in mon.reports],
        "oracle": [r.rho_boundary_oracle for r in mon.reports],
    }
    return RunResult(k, params.eps, b, N, state.mass, halted, halt_time, reason, mon.summary(),
                     mon.min_b, rho, m, conc, traj)


def lp_distance(fa, fb, p: float, window=None, times=None, radii=None) -> float:
    """(sum |fa - fb|^p dr dt)^(1/p) over a uniform space-time lattice.

    ``fa`` and ``fb`` are (nt, nr) arrays on the lattice (``times``,
    ``radii``). ``window=(t0, t1, d, D)`` restricts the sum; without
    ``times``/``radii`` unit spacing is assumed.
    """
    fa = np.asarray(fa, float)
    fb = np.asarray(fb, float)
    if fa.shape != fb.shape:
        raise ValueError(f"lattice mismatch: {fa.shape} vs {fb.shape}")
    if p < 1:
        raise ValueError("p must be at least 1")
    nt, nr = fa.shape[0], fa.shape[-1]
    t = np.arange(nt, dtype=float) if times is None else np.asarray(times, float)
    r = np.arange(nr, dtype=float) if radii is None else np.asarray(radii, float)
    dt = t[1] - t[0] if nt > 1 else 1.0
    dr = r[1] - r[0] if nr > 1 else 1.0
    mask = np.ones(fa.shape, bool)
    if window is not None:
        t0, t1, d, D = window
        mask &= ((t >= t0) & (t <= t1))[:, None] & ((r >= d) & (r <= D))[None, :]
    diff = np.abs(fa - fb)[mask]
    # scale by the largest difference so |diff|^p cannot underflow or overflow
    scale = float(np.max(diff)) if diff.size else 0.0
    if scale == 0.0 or not math.isfinite(scale):
        return scale if diff.size else 0.0
    return scale * float(np.sum((diff / scale) ** p) * dr * dt) ** (1.0 / p)


def window_measure(shape, times=None, radii=None) -> float:
    nt, nr = shape
    dt = times[1] - times[0] if times is not None and nt > 1 else 1.0
    dr = radii[1] - radii[0] if radii is not None and nr > 1 else 1.0
    return nt * nr * dt * dr


def _worker(args):
    plan, k = args
    return run_one(plan, k)


def execute(plan: SweepPlan, threads: int = 1) -> SweepRecord:
    """Run every configuration of the plan and fill the record."""
    jobs = [(plan, k) for k in range(len(plan.eps_ladder))]
    if threads <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_worker, jobs))
    results.sort(key=lambda r: r.index)
    times, radii = plan.lattice()
    rec = SweepRecord(plan, results)
    K = len(results)
    for quantity, exps in (("rho", plan.p_rho), ("m", plan.p_m)):
        for p in exps:
            mat = np.zeros((K, K))
            for i in range(K):
                for j in range(i + 1, K):
                    fa = getattr(results[i], quantity)
                    fb = getattr(results[j], quantity)
                    mat[i, j] = mat[j, i] = lp_distance(fa, fb, p, times=times, radii=radii)
            rec.distances[(quantity, float(p))] = mat
    deltas = plan.deltas()
    rec.concentration = np.array([[r.concentration[dl] for dl in deltas] for r in results])
    return rec


def b_threshold(plan: SweepPlan, candidates: Sequence[float], eps_index: int = 0, threads: int = 1) -> dict:
    """Smallest candidate b whose run keeps min_t b(t) >= b/2 over [0, T].

    Returns the per-candidate ratios and the threshold (None if none holds).
    """
    cands = sorted(float(c) for c in candidates)
    eps = plan.eps_ladder[eps_index]
    sub = [SweepPlan(**{**_plan_kwargs(plan), "eps_ladder": (eps,), "b": c, "t_window": (0.0, plan.T), "nt": 2})
           for c in cands]
    jobs = [(p, 0) for p in sub]
    if threads <= 1:
        results = [_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
            results = list(pool.map(_worker, jobs))
    ratios = {c: (r.min_b / c if not r.halted else float("nan")) for c, r in zip(cands, results)}
    ok = [c for c in cands if ratios[c] >= 0.5]
    return {"eps": eps, "ratios": ratios, "threshold": ok[0] if ok else None}


def _plan_kwargs(plan: SweepPlan) -> dict:
    return {f: getattr(plan, f) for f in plan.__dataclass_fields__}


def write_outputs(rec: SweepRecord, out_dir, svg: bool = False) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = out / "sweep_summary.json"
    summary.write_text(json.dumps(rec.to_json(), indent=2, default=_json_default))
    written.append(summary)
    dist = out / "distances.csv"
    with dist.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["quantity", "p", "i", "j", "eps_i", "eps_j", "distance"])
        for (q, p), mat in rec.distances.items():
            for i in range(mat.shape[0]):
                for j in range(mat.shape[1]):
                    wr.writerow([q, p, i, j, rec.runs[i].eps, rec.runs[j].eps, repr(float(mat[i, j]))])
    written.append(dist)
    conc = out / "concentration.csv"
    with conc.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["eps", "delta", "value"])
        for r, row in zip(rec.runs, rec.concentration):
            for dl, v in zip(rec.plan.deltas(), row):
                wr.writerow([r.eps, dl, repr(float(v))])
    written.append(conc)
    if svg:
        written.extend(_plots(rec, out))
    return written


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _plots(rec: SweepRecord, out: Path) -> list[Path]:
    from nsp_free.plotting import Figure

    paths = []
    if ("rho", 1.0) in rec.distances and len(rec.runs) > 1:
        fig = Figure("successive L1 distance of rho", "eps", "d1", logx=True, logy=True)
        eps = [r.eps for r in rec.runs[1:]]
        fig.add(eps, rec.successive("rho", 1.0), "d1(eps_k, eps_k+1)")
        paths.append(fig.save(out / "distance_vs_eps.svg"))
    fig = Figure("outer radius", "t", "b(t)")
    for r in rec.runs:
        fig.add(r.trajectory["t"], r.trajectory["b"], f"eps={r.eps:g}")
    paths.append(fig.save(out / "boundary_radius.svg"))
    fig = Figure("boundary density", "t", "rho(t, b(t))")
    for r in rec.runs:
        fig.add(r.trajectory["t"], r.trajectory["rho_b"], f"eps={r.eps:g}")
        fig.add(r.trajectory["t"], r.trajectory["oracle"], f"oracle eps={r.eps:g}", dashed=True)
    paths.append(fig.save(out / "boundary_density.svg"))
    fig = Figure("concentration", "delta", "mass within delta")
    for r, row in zip(rec.runs, rec.concentration):
        fig.add(rec.plan.deltas(), row, f"eps={r.eps:g}")
    paths.append(fig.save(out / "concentration.svg"))
    return paths


def default_threads() -> int:
    return max(1, min(4, os.cpu_count() or 1))
