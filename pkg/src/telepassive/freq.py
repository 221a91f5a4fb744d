"""Frequency-domain passivity checks.

Two independent views are provided:

* the sampled-data sufficient condition, swept over a frequency grid and
  compared with the closed-form damping bound of each law;
* the two-port view, where the hybrid matrix is mapped to a scattering
  matrix whose largest singular value must stay at or below one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .control import DiscreteTransfer, controller_pair, error_sign, eval_transfer
from .model import (
    ControllerLaw,
    DelayConfig,
    PDDissipation,
    PDLike,
    PLike,
    RobotParams,
    Side,
    robot_impedance,
)

SINGULAR_TOL = 1e-12
DISCREPANCY_RTOL = 1e-2


class SingularityError(ArithmeticError):
    """The passivity condition is 0/0 at this frequency (cos wT == 1)."""


class SingularMatrixError(ArithmeticError):
    def __init__(self, message: str, omega: float | None = None):
        self.omega = omega
        super().__init__(message if omega is None else f"{message} at omega={omega!r}")


@dataclass(frozen=True)
class FrequencyGrid:
    omegas: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("frequency grid is empty")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValueError("grid frequencies must be finite and positive")
        if np.any(np.diff(w) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    @classmethod
    def default(cls, T: float, points: int = 2000, omega_min: float = 1e-3) -> FrequencyGrid:
        """Log-spaced grid on ``[omega_min, pi/T]`` that always contains ``pi/T``.

        ``omega_min`` is raised when needed so that ``1 - cos(omega_min T)``
        clears the singularity threshold. A single point means Nyquist only.
        """
        nyquist = math.pi / T
        if points < 1:
            raise ValueError("grid needs at least one point")
        if points == 1:
            return cls(np.array([nyquist]))
        floor = math.sqrt(2.0 * SINGULAR_TOL) * 1.0001 / T
        lo = max(omega_min, floor)
        if lo >= nyquist:
            raise ValueError("omega_min must be below the Nyquist frequency")
        w = np.logspace(math.log10(lo), math.log10(nyquist), points)
        w[0], w[-1] = lo, nyquist
        return cls(w)

    def check_sampled(self, T: float) -> None:
        if self.omegas[-1] > math.pi / T * (1 + 1e-12):
            raise ValueError("grid extends beyond the Nyquist frequency pi/T")

    def __len__(self) -> int:
        return self.omegas.size


def passivity_rhs(C: DiscreteTransfer, T: float, alpha: float, omega):
    """Right-hand side of the sampled-data damping condition at ``omega``.

    ``c Re{(1 - e^{-jwT}) C(e^{jwT})} / (1 - cos wT)`` with ``c = T (alpha+1) / 2``,
    which is ``T`` when ``alpha == 1``.
    """
    theta = np.asarray(omega, dtype=float) * T
    half = np.sin(theta / 2.0)
    one_minus_cos = 2.0 * half * half  # cancellation-free 1 - cos(theta)
    if np.any(one_minus_cos < SINGULAR_TOL):
        raise SingularityError("1 - cos(wT) vanishes; the condition is 0/0 there")
    w = one_minus_cos + 1j * np.sin(theta)  # 1 - e^{-j theta}
    value = eval_transfer(C, np.exp(1j * theta))
    c = T * (alpha + 1.0) / 2.0
    out = c * np.real(w * value) / one_minus_cos
    return float(out) if np.ndim(out) == 0 else out


def closed_form_bound(law: ControllerLaw, side: Side, T: float) -> float:
    """Closed-form damping bound of each law, exactly as derived for the folded transfers."""
    if T <= 0:
        raise ValueError("sampling period must be positive")
    master = side == "master"
    if isinstance(law, PLike):
        K, L = (law.K_m, law.L_m) if master else (law.K_s, law.L_s)
        return K * T + 2.0 * L
    if isinstance(law, PDLike):
        K, gamma = (law.K_m, law.gamma_s) if master else (law.K_s, law.gamma_m)
        return K * T + 2.0 * law.Kd * gamma
    if isinstance(law, PDDissipation):
        # sign pattern kept as published; the sweep disagrees and the report says so
        return law.Kp * T + 2.0 * law.Kd - 2.0 * law.Peps - 2.0 * law.Kv
    raise TypeError(f"unsupported controller law {type(law).__name__}")


@dataclass
class PassivityReport:
    side: Side
    sweep_sup: float
    sweep_argmax_omega: float
    closed_form_bound: float
    robot_damping: float
    passive_by_sweep: bool
    passive_by_closed_form: bool
    discrepancy_flag: bool
    per_omega_rhs: list[tuple[float, float]] = field(repr=False, default_factory=list)

    @property
    def sweep_margin(self) -> float:
        return self.robot_damping - self.sweep_sup

    @property
    def closed_form_margin(self) -> float:
        return self.robot_damping - self.closed_form_bound


def passivity_margin_sweep(
    law: ControllerLaw,
    side: Side,
    T: float,
    alpha: float,
    grid: FrequencyGrid,
    robot: RobotParams,
    rtol: float = DISCREPANCY_RTOL,
) -> PassivityReport:
    grid.check_sampled(T)
    C_m, C_s = controller_pair(law, alpha, T)
    C = C_m if side == "master" else C_s
    rhs = passivity_rhs(C, T, alpha, grid.omegas)
    rhs = np.atleast_1d(rhs)
    i = int(np.argmax(rhs))
    sup = float(rhs[i])
    bound = closed_form_bound(law, side, T)
    scale = max(abs(bound), abs(sup))
    discrepancy = abs(sup - bound) > rtol * scale if scale > 0 else False
    return PassivityReport(
        side=side,
        sweep_sup=sup,
        sweep_argmax_omega=float(grid.omegas[i]),
        closed_form_bound=bound,
        robot_damping=robot.damping,
        passive_by_sweep=robot.damping > sup,
        passive_by_closed_form=robot.damping > bound,
        discrepancy_flag=bool(discrepancy),
        per_omega_rhs=list(zip(grid.omegas.tolist(), rhs.tolist())),
    )


@dataclass(frozen=True)
class GainCheck:
    name: str
    lhs: float
    relation: str
    rhs: float
    passed: bool
    applicable: bool = True

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        if not self.applicable:
            verdict = "n/a"
        return f"{self.name}: {self.lhs!r} {self.relation} {self.rhs!r} -> {verdict}"


def check_gain_conditions(
    law: ControllerLaw, delay: DelayConfig, tol: float = 1e-9
) -> list[GainCheck]:
    """Auxiliary gain conditions attached to each law.

    P-like: ``4 L_s L_m > (T1^2 + T2^2) K_m K_s``; PD-like: ``K_s >= K_m``;
    dissipative PD: ``Kd == nu/2 * Kp`` within ``tol`` (relative, with an
    absolute floor of ``tol``).
    """
    if isinstance(law, PLike):
        lhs = 4.0 * law.L_s * law.L_m
        rhs = (delay.t1**2 + delay.t2**2) * law.K_m * law.K_s
        return [GainCheck("bounded tracking (4 L_s L_m > (T1^2+T2^2) K_m K_s)", lhs, ">", rhs, lhs > rhs)]
    if isinstance(law, PDLike):
        return [GainCheck("slave gain dominance (K_s >= K_m)", law.K_s, ">=", law.K_m, law.K_s >= law.K_m)]
    if isinstance(law, PDDissipation):
        target = delay.nu / 2.0 * law.Kp
        ok = abs(law.Kd - target) <= tol * max(1.0, abs(target))
        return [GainCheck("dissipation gain (Kd == nu/2 Kp)", law.Kd, "==", target, ok)]
    raise TypeError(f"unsupported controller law {type(law).__name__}")


def virtual_wall_bound(K_wall: float, B_wall: float, T: float) -> float:
    """Minimum device damping for a passive sampled virtual wall."""
    if T <= 0:
        raise ValueError("sampling period must be positive")
    return K_wall * T / 2.0 + B_wall


# --- two-port analysis ------------------------------------------------------


def hybrid_matrix(
    omega: float,
    master: RobotParams,
    slave: RobotParams,
    C_m: complex,
    C_s: complex,
    convention: str = "impedance",
) -> np.ndarray:
    """Hybrid matrix mapping ``(v_m, F_e)`` to ``(F_h, -v_s)``.

    ``C_m`` and ``C_s`` are the coupling impedances (force per velocity) at ``omega``.
    """
    Z_m = robot_impedance(master, omega, convention)
    Z_s = robot_impedance(slave, omega, convention)
    den = Z_s + C_s
    if abs(den) < 1e-300:
        raise SingularMatrixError("Z_s + C_s vanishes", omega)
    return np.array(
        [
            [Z_m + C_m * Z_s / den, C_m / den],
            [-C_s / den, 1.0 / den],
        ],
        dtype=complex,
    )


_FLIP = np.diag([1.0, -1.0]).astype(complex)


def scattering_matrix(H: np.ndarray) -> np.ndarray:
    """``S = diag(1, -1) (H - I) (H + I)^-1``."""
    H = np.asarray(H, dtype=complex)
    eye = np.eye(2, dtype=complex)
    P = H + eye
    det = P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]
    if abs(det) < 1e-300:
        raise SingularMatrixError("H + I is singular")
    P_inv = np.array([[P[1, 1], -P[0, 1]], [-P[1, 0], P[0, 0]]]) / det
    return _FLIP @ (H - eye) @ P_inv


def max_singular_value_2x2(S: np.ndarray) -> float:
    """Largest singular value from the eigenvalues of ``S^H S`` in closed form."""
    S = np.asarray(S, dtype=complex)
    t = float(np.sum(np.abs(S) ** 2))  # trace(S^H S)
    d = abs(S[0, 0] * S[1, 1] - S[0, 1] * S[1, 0]) ** 2  # det(S^H S)
    disc = max(t * t - 4.0 * d, 0.0)
    return math.sqrt(max((t + math.sqrt(disc)) / 2.0, 0.0))


@dataclass
class ScatteringSample:
    omega: float
    H: np.ndarray
    S: np.ndarray
    sigma_max: float


@dataclass
class ScatteringResult:
    samples: list[ScatteringSample]
    passive: bool
    worst_omega: float
    worst_sigma: float
    tol: float = 0.0


Coupling = Callable[[float], complex]


def continuous_coupling(law: ControllerLaw, side: Side, alpha: float = 1.0) -> Coupling:
    """Coupling impedance of the continuous law the discrete transfer was derived from.

    The position-domain gain ``C(s)`` becomes force-per-velocity ``C(jw) / jw``.
    """
    master = side == "master"
    scale = alpha if master else 1.0
    sign = error_sign(law)
    if isinstance(law, PLike):
        K, L = (law.K_m, law.L_m) if master else (law.K_s, law.L_s)
        p, d = K, -L
    elif isinstance(law, PDLike):
        K, gamma = (law.K_m, law.gamma_s) if master else (law.K_s, law.gamma_m)
        p, d = K, law.Kd * gamma
    elif isinstance(law, PDDissipation):
        p, d = -law.Kp, -(law.Kv + law.Kd + law.Peps)
    else:
        raise TypeError(f"unsupported controller law {type(law).__name__}")

    def coupling(omega: float) -> complex:
        s = 1j * omega
        return sign * scale * (p + d * s) / s

    return coupling


def sampled_coupling(law: ControllerLaw, side: Side, T: float, alpha: float = 1.0) -> Coupling:
    """Fundamental-harmonic coupling impedance of the sampled controller.

    Uses ``C(e^{jwT})`` followed by the hold response ``(1 - e^{-jwT}) / (jwT)``;
    aliased components are ignored.
    """
    C_m, C_s = controller_pair(law, alpha, T)
    C = C_m if side == "master" else C_s
    sign = error_sign(law)

    def coupling(omega: float) -> complex:
        s = 1j * omega
        hold = (1.0 - np.exp(-s * T)) / (s * T)
        return complex(sign * eval_transfer(C, np.exp(s * T)) * hold / s)

    return coupling


def scattering_sweep(
    grid: FrequencyGrid,
    master: RobotParams,
    slave: RobotParams,
    coupling_m: Coupling,
    coupling_s: Coupling,
    convention: str = "impedance",
    tol: float = 0.0,
) -> ScatteringResult:
    """Scattering samples over ``grid``; passive iff ``sigma_max <= 1 + tol`` everywhere."""
    samples = []
    for w in grid.omegas:
        w = float(w)
        H = hybrid_matrix(w, master, slave, coupling_m(w), coupling_s(w), convention)
        try:
            S = scattering_matrix(H)
        except SingularMatrixError as exc:
            raise SingularMatrixError(str(exc), w) from None
        samples.append(ScatteringSample(w, H, S, max_singular_value_2x2(S)))
    worst = max(samples, key=lambda s: s.sigma_max)
    return ScatteringResult(
        samples=samples,
        passive=all(s.sigma_max <= 1.0 + tol for s in samples),
        worst_omega=worst.omega,
        worst_sigma=worst.sigma_max,
        tol=tol,
    )


def identity_sweep(grid: FrequencyGrid) -> ScatteringResult:
    """Degenerate sweep with ``H = I`` at every point (the matched two-port)."""
    eye = np.eye(2, dtype=complex)
    samples = []
    for w in grid.omegas:
        S = scattering_matrix(eye)
        samples.append(ScatteringSample(float(w), eye.copy(), S, max_singular_value_2x2(S)))
    worst = max(samples, key=lambda s: s.sigma_max)
    return ScatteringResult(samples, all(s.sigma_max <= 1.0 for s in samples), worst.omega, worst.sigma_max)


@dataclass(frozen=True)
class WaveVariables:
    a: complex
    b: complex
    R0: float


def wave_transform(F, V, R0: float, port: int = 1) -> WaveVariables:
    """Wave variables of one port.

    Port 1: ``a = (F + R0 V) / 2 sqrt(R0)``, ``b = (F - R0 V) / 2 sqrt(R0)``.
    Port 2 swaps the velocity sign in both.
    """
    if R0 <= 0:
        raise ValueError("R0 must be positive")
    if port not in (1, 2):
        raise ValueError("port must be 1 or 2")
    root = 2.0 * math.sqrt(R0)
    sv = R0 * V if port == 1 else -R0 * V
    return WaveVariables(a=(F + sv) / root, b=(F - sv) / root, R0=R0)


def two_port_waves(
    F_h, V_h, F_e, V_e, R0: float
) -> tuple[WaveVariables, WaveVariables]:
    return wave_transform(F_h, V_h, R0, port=1), wave_transform(F_e, V_e, R0, port=2)


def sweep_rows(reports: Sequence[PassivityReport]) -> list[tuple[float, ...]]:
    """Rows ``(omega, rhs_side0, rhs_side1, ...)`` in grid order."""
    if not reports:
        return []
    omegas = [w for w, _ in reports[0].per_omega_rhs]
    cols = [[v for _, v in r.per_omega_rhs] for r in reports]
    return [tuple([w, *vals]) for w, *vals in zip(omegas, *cols)]
