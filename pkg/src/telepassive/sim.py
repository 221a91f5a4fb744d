"""Sampled-data simulation of the master/slave loop.

Positions are sampled every ``T`` seconds, passed through the channel delay,
fed to the discrete controllers and the resulting forces are held until the
next sample. Between samples each robot, together with its termination
(operator spring/damper on the master, wall on the slave), is a linear
time-invariant system driven by a constant force, which is advanced with its
exact state-transition matrix. Wall contact and exogenous force changes are
detected on substep boundaries.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from .control import ControllerState, controller_pair, error_sign, step_controller
from .model import RobotParams, Scenario, WallMode, validate_scenario

DIVERGENCE_LIMIT = 1e9
TRACE_COLUMNS = ("t", "q_m", "q_s", "qdot_m", "qdot_s", "F_h", "F_e", "F_m", "F_s", "energy")


class DivergenceError(RuntimeError):
    def __init__(self, time: float):
        self.time = time
        super().__init__(f"simulation diverged at t={time:.6g} s")


@dataclass(frozen=True)
class PlantState:
    q_m: float = 0.0
    q_s: float = 0.0
    qdot_m: float = 0.0
    qdot_s: float = 0.0
    t: float = 0.0


def _advance_mass_damper(q: float, v: float, M: float, B: float, F: float, dt: float):
    """Exact response of ``M qdd + B qd = F`` with constant ``F`` over ``dt``."""
    if B == 0.0:
        a = F / M
        return q + v * dt + 0.5 * a * dt * dt, v + a * dt
    tau = M / B
    decay = math.exp(-dt / tau)
    v_inf = F / B
    # -expm1 keeps 1 - e^{-x} accurate for small x
    growth = -math.expm1(-dt / tau)
    v_new = v * decay + v_inf * growth
    q_new = q + v_inf * dt + (v - v_inf) * tau * growth
    return q_new, v_new


def plant_substep(
    state: PlantState,
    master: RobotParams,
    slave: RobotParams,
    force_m: float,
    force_s: float,
    dt: float,
) -> PlantState:
    """Advance both robots by ``dt`` under constant net external forces.

    ``force_m`` and ``force_s`` already include held control forces and any
    termination forces frozen for the interval.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_m, v_m = _advance_mass_damper(state.q_m, state.qdot_m, master.mass, master.damping, force_m, dt)
    q_s, v_s = _advance_mass_damper(state.q_s, state.qdot_s, slave.mass, slave.damping, force_s, dt)
    return PlantState(q_m, q_s, v_m, v_s, state.t + dt)


@lru_cache(maxsize=64)
def _transition(M: float, B: float, K: float, dt: float, n: int):
    """Powers of the exact transition of ``M qdd + B qd + K q = f`` (f constant).

    Returns ``(Phi, Gamma)`` with ``Phi[j]``, ``Gamma[j]`` mapping the state
    and the force to the state ``j`` substeps later, ``j = 0..n``.
    """
    aug = np.zeros((3, 3))
    aug[0, 1] = 1.0
    aug[1, 0] = -K / M
    aug[1, 1] = -B / M
    aug[1, 2] = 1.0 / M
    E = expm(aug * dt)
    phi1, gam1 = E[:2, :2], E[:2, 2]
    Phi = np.empty((n + 1, 2, 2))
    Gam = np.empty((n + 1, 2))
    Phi[0], Gam[0] = np.eye(2), 0.0
    for j in range(1, n + 1):
        Phi[j] = phi1 @ Phi[j - 1]
        Gam[j] = phi1 @ Gam[j - 1] + gam1
    Phi.setflags(write=False)
    Gam.setflags(write=False)
    return Phi, Gam


def _propagate(Phi, Gam, x0: np.ndarray, f: float, n: int) -> np.ndarray:
    """States after 1..n substeps, shape ``(n, 2)``."""
    return Phi[1 : n + 1] @ x0 + Gam[1 : n + 1] * f


@dataclass
class SimulationTrace:
    t: np.ndarray
    q_m: np.ndarray
    q_s: np.ndarray
    qdot_m: np.ndarray
    qdot_s: np.ndarray
    F_h: np.ndarray
    F_e: np.ndarray
    F_m: np.ndarray
    F_s: np.ndarray
    energy: np.ndarray
    period: float
    alpha: float = 1.0
    scenario_hash: str = ""
    force_log: list[tuple[float, float, float]] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return self.t.size

    def columns(self) -> list[np.ndarray]:
        return [getattr(self, c) for c in TRACE_COLUMNS]

    def to_csv(self, fh=None) -> str:
        """Write the trace as CSV (fixed column order, shortest round-trip floats)."""
        buf = io.StringIO() if fh is None else fh
        write_csv(buf, TRACE_COLUMNS, zip(*(c.tolist() for c in self.columns())))
        return buf.getvalue() if fh is None else ""


def fmt(x: float) -> str:
    return repr(float(x))


def write_csv(fh, header, rows) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])


def scenario_hash(sc: Scenario) -> str:
    return hashlib.sha256(repr(sc).encode()).hexdigest()[:16]


def _delay_samples(delay: float, T: float) -> int:
    return int(round(delay / T))


def run_simulation(sc: Scenario, log_forces: bool = False) -> SimulationTrace:
    """Run the sampled-data loop and record every sample instant.

    ``log_forces`` keeps ``(t, F_m, F_s)`` for every substep, so the hold
    structure can be inspected.
    """
    validate_scenario(sc)
    T = sc.sampling.period
    n_sub = sc.sampling.substeps
    dt = T / n_sub
    alpha = sc.sampling.alpha
    n_samples = int(math.floor(sc.duration / T + 1e-9)) + 1

    op, wall = sc.operator, sc.environment
    M_m, M_s = sc.master.mass, sc.slave.mass
    master_tr = _transition(M_m, sc.master.damping + op.damping, op.stiffness, dt, n_sub)
    slave_free = _transition(M_s, sc.slave.damping, 0.0, dt, n_sub)
    spring_wall = wall.mode is WallMode.SPRING
    slave_contact = _transition(M_s, sc.slave.damping, wall.stiffness, dt, n_sub) if spring_wall else None
    breakpoints = op.breakpoints()

    C_m, C_s = controller_pair(sc.law, alpha, T)
    sign = error_sign(sc.law)
    st_m = ControllerState(C_m, _delay_samples(sc.delay.t2, T))
    st_s = ControllerState(C_s, _delay_samples(sc.delay.t1, T))

    out = np.zeros((len(TRACE_COLUMNS) - 1, n_samples))
    xm = np.zeros(2)
    xs = np.zeros(2)
    pinned = False  # rigid wall currently holding the slave
    force_log: list[tuple[float, float, float]] = []

    for k in range(n_samples):
        t = k * T
        # sample, delay, control
        q_s_remote = st_m.delayed(xs[0])
        q_m_remote = st_s.delayed(xm[0])
        u_m = sign * step_controller(st_m, C_m, q_s_remote - alpha * xm[0])
        u_s = sign * step_controller(st_s, C_s, alpha * q_m_remote - xs[0])

        F_h = op.force_at(t) - op.stiffness * xm[0] - op.damping * xm[1]
        if spring_wall:
            F_e = wall.stiffness * (xs[0] - wall.contact_position) if xs[0] > wall.contact_position else 0.0
        else:
            F_e = max(u_s, 0.0) if pinned else 0.0
        out[:, k] = (t, xm[0], xs[0], xm[1], xs[1], F_h, F_e, -u_m, u_s)
        if k == n_samples - 1:
            break

        # master: operator force may change inside the period
        if not any(t < b < t + T for b in breakpoints):
            xm = _propagate(*master_tr, xm, u_m + op.force_at(t), n_sub)[-1]
        else:
            Phi, Gam = master_tr
            for j in range(n_sub):
                xm = Phi[1] @ xm + Gam[1] * (u_m + op.force_at(t + j * dt))

        # slave: wall contact switches on substep boundaries
        if spring_wall:
            j = 0
            while j < n_sub:
                contact = xs[0] > wall.contact_position
                tr = slave_contact if contact else slave_free
                f = u_s + (wall.stiffness * wall.contact_position if contact else 0.0)
                traj = _propagate(*tr, xs, f, n_sub - j)
                flips = np.nonzero((traj[:-1, 0] > wall.contact_position) != contact)[0]
                if flips.size:
                    step = int(flips[0]) + 1
                    xs, j = traj[step - 1], j + step
                else:
                    xs, j = traj[-1], n_sub
        else:
            pinned, xs = _rigid_wall_period(xs, u_s, wall.contact_position, pinned, slave_free, n_sub)

        if log_forces:
            force_log.extend((t + j * dt, -u_m, u_s) for j in range(n_sub))
        if not (np.all(np.abs(xm) < DIVERGENCE_LIMIT) and np.all(np.abs(xs) < DIVERGENCE_LIMIT)):
            raise DivergenceError(t + T)

    rows = dict(zip(TRACE_COLUMNS[:-1], out))
    trace = SimulationTrace(
        **rows,
        energy=np.zeros(n_samples),
        period=T,
        alpha=alpha,
        scenario_hash=scenario_hash(sc),
        force_log=force_log,
    )
    trace.energy = energy_monitor(trace).energy
    return trace


def _rigid_wall_period(xs, u_s, position, pinned, free_tr, n_sub):
    """Advance the slave one period against a wall that reflects the held force."""
    j = 0
    while j < n_sub:
        if pinned:
            if u_s > 0.0:
                return True, np.array([position, 0.0])
            pinned = False
        traj = _propagate(*free_tr, xs, u_s, n_sub - j)
        hits = np.nonzero(traj[:, 0] >= position)[0]
        if hits.size == 0:
            return False, traj[-1]
        step = int(hits[0]) + 1
        # inelastic contact: the wall absorbs the approach velocity
        xs, j = np.array([position, 0.0]), j + step
        pinned = True
    return pinned, xs


@dataclass
class EnergyReport:
    energy: np.ndarray
    min_energy: float
    passive: bool
    threshold: float


def energy_monitor(trace: SimulationTrace, threshold: float = 1e-6) -> EnergyReport:
    """Cumulative energy delivered to the teleoperator through both ports.

    ``E(n) = T * sum_{k<=n} (F_h q̇_m - F_e q̇_s)``; passive when
    ``min E >= -threshold``.
    """
    if len(trace) == 0:
        raise ValueError("empty trace")
    power = trace.F_h * trace.qdot_m - trace.F_e * trace.qdot_s
    energy = trace.period * np.cumsum(power)
    lo = float(energy.min())
    return EnergyReport(energy=energy, min_energy=lo, passive=lo >= -threshold, threshold=threshold)


@dataclass(frozen=True)
class TrackingMetrics:
    max_abs_position_error: float
    final_position_error: float
    max_abs_force_error: float


def tracking_metrics(trace: SimulationTrace) -> TrackingMetrics:
    """Position error ``alpha q_m - q_s`` and force error ``F_m - F_s``."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    pos_err = trace.alpha * trace.q_m - trace.q_s
    force_err = trace.F_m - trace.F_s
    return TrackingMetrics(
        max_abs_position_error=float(np.max(np.abs(pos_err))),
        final_position_error=float(abs(pos_err[-1])),
        max_abs_force_error=float(np.max(np.abs(force_err))),
    )
