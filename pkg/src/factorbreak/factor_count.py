"""Information criteria for the number of factors (Bai and Ng, 2002)."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ParameterError
from .panel_model import PanelData, panel_spectrum

V_FLOOR = 1e-300


class IcVariant(enum.IntEnum):
    IC1 = 1
    IC2 = 2

    @classmethod
    def parse(cls, value) -> IcVariant:
        if isinstance(value, IcVariant):
            return value
        text = str(value).upper().removeprefix("IC")
        try:
            return cls(int(text))
        except ValueError:
            raise ParameterError(f"unknown information criterion {value!r}; use IC1 or IC2") from None


@dataclass(frozen=True)
class IcResult:
    r_hat: int
    criterion_values: NDArray[np.float64]
    residual_variance: NDArray[np.float64]
    variant: IcVariant

    @property
    def r_max(self) -> int:
        return self.criterion_values.size


def default_r_max(t_len: int, n_len: int) -> int:
    return max(1, min(8, min(n_len, t_len) // 4))


def penalty(variant: IcVariant, t_len: int, n_len: int) -> float:
    """Per-factor penalty of the chosen criterion."""
    nt, n_plus_t = n_len * t_len, n_len + t_len
    if variant is IcVariant.IC1:
        return (n_plus_t / nt) * np.log(nt / n_plus_t)
    return (n_plus_t / nt) * np.log(min(n_len, t_len))


def residual_variances(panel: PanelData, r_max: int) -> NDArray[np.float64]:
    """``V(r) = (1/NT) sum_t |x_t - Lambda g_t|^2`` for r = 1..r_max.

    The r-factor PCA residual equals the sum of the discarded eigenvalues of
    ``XX'/(NT)``, so one eigendecomposition serves every r.
    """
    w = panel_spectrum(panel)
    tails = np.cumsum(w[::-1])[::-1]
    # tails[j] = sum of eigenvalues j, j+1, ... (0-based); V(r) = tails[r].
    v = np.append(tails, 0.0)[1 : r_max + 1]
    return np.maximum(v, 0.0)


def select_r(panel: PanelData, r_max: int | None = None, variant: IcVariant | str | int = IcVariant.IC1) -> IcResult:
    """Pick the number of factors minimizing IC1 or IC2 over 1..r_max.

    ``V(r)`` is floored at 1e-300 before taking logs so that exactly
    low-rank panels stay finite; ties go to the smaller r.
    """
    variant = IcVariant.parse(variant)
    t_len, n_len = panel.t_len, panel.n_len
    if r_max is None:
        r_max = default_r_max(t_len, n_len)
    upper = min(t_len, n_len) - 1
    if int(r_max) != r_max or not 1 <= r_max <= upper:
        raise ParameterError(f"r_max={r_max} must satisfy 1 <= r_max <= min(T, N) - 1 = {upper}")
    r_max = int(r_max)

    v = residual_variances(panel, r_max)
    ranks = np.arange(1, r_max + 1)
    crit = np.log(np.maximum(v, V_FLOOR)) + ranks * penalty(variant, t_len, n_len)
    r_hat = int(np.argmin(crit)) + 1
    return IcResult(r_hat=r_hat, criterion_values=crit, residual_variance=v, variant=variant)
