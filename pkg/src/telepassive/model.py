"""Domain types for a 1-DOF master/slave teleoperation scenario.

All types are frozen dataclasses. Construction never validates; call
:func:`validate_scenario` (or :func:`scenario_errors`) once a scenario has been
assembled so that every violated constraint is reported together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Literal, Union

Side = Literal["master", "slave"]
SIDES: tuple[Side, Side] = ("master", "slave")


class ScenarioError(ValueError):
    """Raised when a scenario violates one or more invariants."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RobotParams:
    mass: float
    damping: float


# Plant 2.2 / (3.5 s + 4) read as a velocity-per-force admittance.
REFERENCE_ROBOT = RobotParams(mass=3.5 / 2.2, damping=4.0 / 2.2)


@dataclass(frozen=True)
class ForceSegment:
    """Constant exogenous force applied on ``start <= t < end``."""

    start: float
    end: float
    magnitude: float


@dataclass(frozen=True)
class TerminationModel:
    """Operator model: exogenous force minus a PD pull toward zero position."""

    stiffness: float = 10.0
    damping: float = 1.0
    exogenous_force: tuple[ForceSegment, ...] = (ForceSegment(10.0, 20.0, 1.0),)

    def force_at(self, t: float) -> float:
        total = 0.0
        for seg in self.exogenous_force:
            if seg.start <= t < seg.end:
                total += seg.magnitude
        return total

    def breakpoints(self) -> list[float]:
        return sorted({x for seg in self.exogenous_force for x in (seg.start, seg.end)})


class WallMode(str, Enum):
    SPRING = "spring"
    RIGID_REFLECT = "rigid_reflect"


@dataclass(frozen=True)
class WallModel:
    contact_position: float = 4.0
    stiffness: float = 1000.0
    mode: WallMode = WallMode.SPRING


@dataclass(frozen=True)
class PLike:
    """Proportional coupling plus damping-injection term, per side gains."""

    K_m: float = 1.0
    K_s: float = 1.0
    L_m: float = 0.1
    L_s: float = 0.1

    kind = "p_like"


@dataclass(frozen=True)
class PDLike:
    Kd: float = 1.0
    K_m: float = 2.0
    K_s: float = 2.0
    gamma_m: float = 1.0
    gamma_s: float = 1.0

    kind = "pd_like"


@dataclass(frozen=True)
class PDDissipation:
    """PD coupling with an extra dissipation gain; gains are shared by both sides."""

    Kv: float = 10.0
    Kp: float = 1.0
    Kd: float = 2.0
    Peps: float = 0.002

    kind = "pd_dissipation"


ControllerLaw = Union[PLike, PDLike, PDDissipation]
LAW_TYPES: dict[str, type] = {cls.kind: cls for cls in (PLike, PDLike, PDDissipation)}


@dataclass(frozen=True)
class SamplingConfig:
    period: float = 0.002
    alpha: float = 1.0
    substeps: int = 100


@dataclass(frozen=True)
class DelayConfig:
    """Constant channel delays. ``nu`` is an upper bound on the round trip."""

    t1: float = 0.0
    t2: float = 0.0
    nu: float = 0.0


@dataclass(frozen=True)
class Scenario:
    master: RobotParams = REFERENCE_ROBOT
    slave: RobotParams = REFERENCE_ROBOT
    operator: TerminationModel = field(default_factory=TerminationModel)
    environment: WallModel = field(default_factory=WallModel)
    law: ControllerLaw = field(default_factory=PLike)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    delay: DelayConfig = field(default_factory=DelayConfig)
    duration: float = 40.0


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _law_errors(law: ControllerLaw) -> list[str]:
    errors = []
    if not isinstance(law, (PLike, PDLike, PDDissipation)):
        return [f"controller: unknown law {type(law).__name__}"]
    for name, value in vars(law).items():
        key = f"controller.{name}"
        if not _finite(value):
            errors.append(f"{key} must be a finite number")
        elif name.startswith("gamma"):
            if not 0.0 < value <= 1.0:
                errors.append(f"{key}: gamma must lie in (0,1]")
        elif value < 0:
            errors.append(f"{key} must be non-negative")
    return errors


def scenario_errors(sc: Scenario) -> list[str]:
    """Return one message per violated invariant; empty when the scenario is valid."""
    errors: list[str] = []

    for name in SIDES:
        robot = getattr(sc, name)
        if not _finite(robot.mass) or robot.mass <= 0:
            errors.append(f"{name}.mass: mass must be positive")
        if not _finite(robot.damping) or robot.damping < 0:
            errors.append(f"{name}.damping: damping must be non-negative")

    op = sc.operator
    if not _finite(op.stiffness) or op.stiffness < 0:
        errors.append("operator.stiffness must be non-negative")
    if not _finite(op.damping) or op.damping < 0:
        errors.append("operator.damping must be non-negative")
    segs = sorted(op.exogenous_force, key=lambda s: s.start)
    for i, seg in enumerate(segs):
        if not all(_finite(v) for v in (seg.start, seg.end, seg.magnitude)):
            errors.append(f"operator.force[{i}] must contain finite numbers")
        elif seg.start >= seg.end:
            errors.append(f"operator.force[{i}]: start must be before end")
        elif i and seg.start < segs[i - 1].end:
            errors.append(f"operator.force[{i}]: segments overlap")

    wall = sc.environment
    if not _finite(wall.contact_position):
        errors.append("wall.position must be finite")
    if not isinstance(wall.mode, WallMode):
        errors.append(f"wall.mode must be one of {[m.value for m in WallMode]}")
    if not _finite(wall.stiffness) or wall.stiffness < 0:
        errors.append("wall.stiffness must be non-negative")
    elif wall.mode is WallMode.SPRING and wall.stiffness <= 0:
        errors.append("wall.stiffness must be positive for a spring wall")

    errors.extend(_law_errors(sc.law))

    smp = sc.sampling
    if not _finite(smp.period) or smp.period <= 0:
        errors.append("sampling.period must be positive")
    if not _finite(smp.alpha) or smp.alpha <= 0:
        errors.append("sampling.alpha must be positive")
    if not isinstance(smp.substeps, int) or isinstance(smp.substeps, bool) or smp.substeps < 1:
        errors.append("sampling.substeps must be an integer >= 1")

    d = sc.delay
    if not _finite(d.t1) or d.t1 < 0:
        errors.append("delay.t1 must be non-negative")
    if not _finite(d.t2) or d.t2 < 0:
        errors.append("delay.t2 must be non-negative")
    if not _finite(d.nu):
        errors.append("delay.nu must be finite")
    elif _finite(d.t1) and _finite(d.t2) and d.nu < d.t1 + d.t2:
        errors.append("delay.nu must be >= delay.t1 + delay.t2")

    if not _finite(sc.duration) or sc.duration <= 0:
        errors.append("duration must be positive")
    return errors


def validate_scenario(sc: Scenario) -> Scenario:
    """Return ``sc`` unchanged, or raise :class:`ScenarioError` listing every violation."""
    errors = scenario_errors(sc)
    if errors:
        raise ScenarioError(errors)
    return sc


def robot_impedance(r: RobotParams, omega: float, convention: str = "impedance") -> complex:
    """Mechanical impedance ``M jw + B`` of a mass-damper robot.

    ``convention="reciprocal"`` returns ``1 / (M jw + B)`` instead.
    """
    z = complex(r.damping, r.mass * omega)
    if convention == "impedance":
        return z
    if convention == "reciprocal":
        return 1.0 / z
    raise ValueError(f"unknown impedance convention {convention!r}")
