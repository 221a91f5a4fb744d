"""Discrete-time coupling controllers.

Every law is folded into a single transfer ``C(z)`` driven by the position
error. The derivative terms use the backward-difference substitution
``s -> (z - 1) / (T z)``, so every transfer has denominator ``T z``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import ControllerLaw, PDDissipation, PDLike, PLike, Side


@dataclass(frozen=True)
class DiscreteTransfer:
    """Rational function of z; coefficients in descending powers."""

    num: tuple[float, ...]
    den: tuple[float, ...]
    period: float
    # (p, d) of p + d (z - 1) / (T z) when built from a law; evaluated directly
    # so the derivative path vanishes exactly at z = 1
    pd_form: tuple[float, float] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        num = tuple(float(c) for c in self.num) or (0.0,)
        den = tuple(float(c) for c in self.den)
        if not den or den[0] == 0.0:
            raise ValueError("leading denominator coefficient must be non-zero")
        # strip leading zeros so the causality check looks at the true degree
        while len(num) > 1 and num[0] == 0.0:
            num = num[1:]
        if len(num) > len(den):
            raise ValueError("transfer is not causal: deg(num) > deg(den)")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @property
    def order(self) -> int:
        return len(self.den) - 1

    def padded_num(self) -> tuple[float, ...]:
        return (0.0,) * (len(self.den) - len(self.num)) + self.num

    def scaled(self, k: float) -> DiscreteTransfer:
        pd = None if self.pd_form is None else (k * self.pd_form[0], k * self.pd_form[1])
        return DiscreteTransfer(tuple(k * c for c in self.num), self.den, self.period, pd)

    def __call__(self, z):
        return eval_transfer(self, z)


def _derivative_form(p: float, d: float, T: float) -> DiscreteTransfer:
    # p + d (z - 1) / (T z)  =  ((p T + d) z - d) / (T z)
    return DiscreteTransfer((p * T + d, -d), (T, 0.0), T, (p, d))


def discretize(law: ControllerLaw, side: Side, T: float) -> DiscreteTransfer:
    """Folded discrete controller of one side."""
    if T <= 0:
        raise ValueError("sampling period must be positive")
    if side not in ("master", "slave"):
        raise ValueError(f"side must be 'master' or 'slave', got {side!r}")
    master = side == "master"
    if isinstance(law, PLike):
        K, L = (law.K_m, law.L_m) if master else (law.K_s, law.L_s)
        return _derivative_form(K, -L, T)
    if isinstance(law, PDLike):
        # each side uses the remote side's gamma
        K, gamma = (law.K_m, law.gamma_s) if master else (law.K_s, law.gamma_m)
        return _derivative_form(K, law.Kd * gamma, T)
    if isinstance(law, PDDissipation):
        damping = law.Kv + law.Kd + law.Peps
        return _derivative_form(-law.Kp, -damping, T)
    raise TypeError(f"unsupported controller law {type(law).__name__}")


def controller_pair(
    law: ControllerLaw, alpha: float, T: float
) -> tuple[DiscreteTransfer, DiscreteTransfer]:
    """Return ``(C_m, C_s)`` with the master transfer scaled by ``alpha``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return discretize(law, "master", T).scaled(alpha), discretize(law, "slave", T)


def error_sign(law: ControllerLaw) -> float:
    """Sign applied to ``remote - local`` before it enters the transfer.

    The dissipative law is written on ``local - remote``, the other two on
    ``remote - local``.
    """
    return -1.0 if isinstance(law, PDDissipation) else 1.0


def eval_transfer(C: DiscreteTransfer, z):
    """Evaluate ``N(z) / D(z)``; accepts scalars or numpy arrays."""
    z = np.asarray(z, dtype=complex)
    d = np.polyval(C.den, z)
    if np.any(np.abs(d) < 1e-300):
        raise ZeroDivisionError("transfer evaluated at a pole")
    if C.pd_form is not None:
        p, dg = C.pd_form
        out = p + dg * (z - 1.0) / (C.period * z)
    else:
        out = np.polyval(C.num, z) / d
    return complex(out) if out.ndim == 0 else out


class ControllerState:
    """Histories for the direct-form difference equation of one transfer."""

    def __init__(self, C: DiscreteTransfer, delay_samples: int = 0):
        n = C.order
        self.inputs: deque[float] = deque([0.0] * n, maxlen=n)
        self.outputs: deque[float] = deque([0.0] * n, maxlen=n)
        # remote samples in flight; index 0 is the oldest
        self.delay_line: deque[float] | None = (
            deque([0.0] * delay_samples, maxlen=delay_samples) if delay_samples > 0 else None
        )

    def delayed(self, sample: float) -> float:
        """Push a fresh remote sample and return the one released this tick."""
        if self.delay_line is None:
            return sample
        out = self.delay_line[0]
        self.delay_line.append(sample)
        return out


def step_controller(state: ControllerState, C: DiscreteTransfer, error_sample: float) -> float:
    """Advance one sample: ``a0 y[k] = sum b_i e[k-i] - sum_{i>=1} a_i y[k-i]``."""
    b = C.padded_num()
    a = C.den
    acc = b[0] * error_sample
    # deques hold newest sample last
    for i in range(1, len(a)):
        acc += b[i] * state.inputs[-i] - a[i] * state.outputs[-i]
    y = acc / a[0]
    if C.order:
        state.inputs.append(error_sample)
        state.outputs.append(y)
    return y
