"""Seeded simulation designs for factor panels with one loading break.

Four loading scenarios are provided:

``1A``  pre-break loadings ``Lambda1`` with i.i.d. N(0, 1/r0^2) entries and
        ``Lambda2 = Lambda1 C`` with ``C = diag(1, 1, 0)``; a factor
        disappears after the break.
``1B``  ``Lambda2 = Lambda1 C`` with ``C`` lower triangular, diagonal
        (0.5, 1.5, 2.5) and standard normal entries below it; a rotation.
``1C``  ``C = [[1, 0, 0], [2, 1, 0], [3, 2, m]]``, full rank for m > 0 and
        singular at m = 0.
``1D``  loadings on disjoint factor sets before and after the break.  The
        pre-break loadings have their last column zero and the remaining
        ``r0 - 1`` columns i.i.d. N(0, 1/(r0 - 1)); the post-break loadings
        are i.i.d. N(0, 1/r0) and independent.  Both regimes are laid out on
        ``2 r0 - 1`` pseudo-factors.

Factors are AR(1) with coefficient ``rho`` and unit innovations, started
from their stationary law.  Idiosyncratic errors are AR(1) with coefficient
``alpha`` and Gaussian innovations with Toeplitz covariance
``Omega[i, j] = beta**|i - j|``; the first error vector is drawn from the
stationary law ``N(0, Omega / (1 - alpha^2))``.

Random streams for factors, errors, loadings and padding are derived from
the configuration seed and a purpose tag, so each is reproducible on its own.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import linalg, signal

from .errors import NumericalError, ParameterError
from .panel_model import PanelData

SEED_MAX = 2**64


class Scenario(str, enum.Enum):
    ONE_A = "1A"
    ONE_B = "1B"
    ONE_C = "1C"
    ONE_D = "1D"

    @classmethod
    def parse(cls, value: str | Scenario) -> Scenario:
        if isinstance(value, Scenario):
            return value
        key = str(value).upper().replace(".", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        raise ParameterError(
            f"unknown scenario {value!r}; expected one of {[m.value for m in cls]}"
        )


@dataclass(frozen=True)
class DgpConfig:
    """Full parameterization of one simulated panel.

    ``k0`` defaults to ``T // 2``.  ``m`` is the (3, 3) entry of ``C`` and
    is only used (and required) by scenario ``1C``.  ``zero_error`` drops
    the idiosyncratic component entirely and exists for exact tests.
    """

    n_len: int
    t_len: int
    scenario: Scenario = Scenario.ONE_A
    r0: int = 3
    k0: int | None = None
    rho: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    m: float | None = None
    seed: int = 0
    zero_error: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        if self.k0 is None:
            object.__setattr__(self, "k0", self.t_len // 2)
        problems = self.problems()
        if problems:
            raise ParameterError("; ".join(problems))

    def problems(self) -> list[str]:
        """Every violated constraint, as readable messages."""
        out = []
        if int(self.n_len) != self.n_len or self.n_len < 2:
            out.append(f"n_len must be an integer >= 2, got {self.n_len}")
        if int(self.t_len) != self.t_len or self.t_len < 4:
            out.append(f"t_len must be an integer >= 4, got {self.t_len}")
        elif not 1 <= self.k0 < self.t_len:
            out.append(f"k0 must satisfy 1 <= k0 < T={self.t_len}, got {self.k0}")
        for name in ("rho", "alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                out.append(f"{name} must lie in [0, 1), got {v}")
        if self.scenario is Scenario.ONE_C:
            if self.m is None or not 0.0 <= self.m <= 1.0:
                out.append(f"scenario 1C requires m in [0, 1], got {self.m}")
        if self.scenario is Scenario.ONE_D:
            if self.r0 < 2:
                out.append(f"scenario 1D requires r0 >= 2, got {self.r0}")
        elif self.r0 != 3:
            out.append(f"scenario {self.scenario.value} is defined for r0 = 3, got {self.r0}")
        if not 0 <= self.seed < SEED_MAX:
            out.append(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        return out

    def with_seed(self, seed: int) -> DgpConfig:
        return replace(self, seed=int(seed))

    def label(self) -> str:
        parts = [self.scenario.value, f"N{self.n_len}", f"T{self.t_len}"]
        if self.scenario is Scenario.ONE_C:
            parts.append(f"m{self.m:g}")
        parts += [f"rho{self.rho:g}", f"alpha{self.alpha:g}", f"beta{self.beta:g}"]
        return "_".join(parts)

    def to_dict(self) -> dict:
        return {
            "n_len": self.n_len,
            "t_len": self.t_len,
            "scenario": self.scenario.value,
            "r0": self.r0,
            "k0": self.k0,
            "rho": self.rho,
            "alpha": self.alpha,
            "beta": self.beta,
            "m": self.m,
            "seed": self.seed,
        }


def stream(seed: int, tag: str) -> np.random.Generator:
    """Independent generator for one purpose, keyed by ``(seed, tag)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(tag.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


class Loadings(NamedTuple):
    lambda1: NDArray[np.float64]
    lambda2: NDArray[np.float64]
    r: int
    r1: int
    r2: int
    c: NDArray[np.float64] | None


@dataclass(frozen=True)
class SimulatedPanel:
    """A simulated panel together with the ground truth that produced it.

    ``pseudo_factors`` is the T x r matrix that multiplies ``lambda1`` up to
    ``k0`` and ``lambda2`` afterwards.  For scenarios 1A-1C it equals the
    original factors; for 1D the original factors are placed in the regime's
    column block and the other columns hold independent padding streams
    (which meet zero loadings).
    """

    panel: PanelData
    factors: NDArray[np.float64]
    pseudo_factors: NDArray[np.float64]
    errors: NDArray[np.float64]
    lambda1: NDArray[np.float64]
    lambda2: NDArray[np.float64]
    r_pseudo: int
    r1: int
    r2: int
    k0: int
    c: NDArray[np.float64] | None = field(default=None)

    def common_component(self) -> NDArray[np.float64]:
        return _assemble(self.pseudo_factors, self.lambda1, self.lambda2, self.k0)


def _assemble(g, lambda1, lambda2, k0):
    return np.vstack([g[:k0] @ lambda1.T, g[k0:] @ lambda2.T])


def _ar1(innov: NDArray[np.float64], coef: float) -> NDArray[np.float64]:
    if coef == 0.0:
        return innov
    return signal.lfilter([1.0], [1.0, -coef], innov, axis=0)


def toeplitz_omega(n_len: int, beta: float) -> NDArray[np.float64]:
    """Cross-sectional covariance ``beta**|i-j|``."""
    return linalg.toeplitz(beta ** np.arange(n_len, dtype=np.float64))


def gen_factors(cfg: DgpConfig, rng: np.random.Generator, n_factors: int | None = None) -> NDArray[np.float64]:
    """Stationary AR(1) factors, shape (T, n_factors), default ``cfg.r0``."""
    k = cfg.r0 if n_factors is None else n_factors
    u = rng.standard_normal((cfg.t_len, k))
    u[0] /= np.sqrt(1.0 - cfg.rho**2)
    return _ar1(u, cfg.rho)


def gen_errors(cfg: DgpConfig, rng: np.random.Generator) -> NDArray[np.float64]:
    """AR(1) idiosyncratic errors with Toeplitz cross-sectional covariance."""
    z = rng.standard_normal((cfg.t_len, cfg.n_len))
    if cfg.beta > 0.0:
        try:
            chol = linalg.cholesky(toeplitz_omega(cfg.n_len, cfg.beta), lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError(f"Cholesky factorization of Omega failed: {exc}") from exc
        v = z @ chol.T
    else:
        v = z
    v[0] /= np.sqrt(1.0 - cfg.alpha**2)
    return _ar1(v, cfg.alpha)


def scenario_c(scenario: Scenario, rng: np.random.Generator, m: float | None = None) -> NDArray[np.float64]:
    """Break matrix ``C`` with ``Lambda2 = Lambda1 C`` for scenarios 1A-1C."""
    if scenario is Scenario.ONE_A:
        return np.diag([1.0, 1.0, 0.0])
    if scenario is Scenario.ONE_B:
        c = np.diag([0.5, 1.5, 2.5])
        rows, cols = np.tril_indices(3, k=-1)
        c[rows, cols] = rng.standard_normal(rows.size)
        return c
    if scenario is Scenario.ONE_C:
        if m is None:
            raise ParameterError("scenario 1C requires m")
        return np.array([[1.0, 0.0, 0.0], [2.0, 1.0, 0.0], [3.0, 2.0, float(m)]])
    raise ParameterError(f"scenario {scenario.value} has no C matrix")


def gen_loadings(
    scenario: Scenario | str,
    r0: int,
    n_len: int,
    rng: np.random.Generator,
    m: float | None = None,
) -> Loadings:
    """Pre- and post-break loadings on the pseudo-factor layout."""
    scenario = Scenario.parse(scenario)
    if scenario is Scenario.ONE_D:
        if r0 < 2:
            raise ParameterError(f"scenario 1D requires r0 >= 2, got {r0}")
        r1, r2 = r0 - 1, r0
        r = r1 + r2
        theta1 = rng.standard_normal((n_len, r0)) * np.sqrt(1.0 / r1)
        theta1[:, r1:] = 0.0
        theta2 = rng.standard_normal((n_len, r0)) * np.sqrt(1.0 / r2)
        lambda1 = np.zeros((n_len, r))
        lambda2 = np.zeros((n_len, r))
        # Column r1 of lambda1 is the zeroed last original loading.
        lambda1[:, :r0] = theta1
        lambda2[:, r1:] = theta2
        return Loadings(lambda1, lambda2, r, r1, r2, None)

    if r0 != 3:
        raise ParameterError(f"scenario {scenario.value} is defined for r0 = 3, got {r0}")
    lambda1 = rng.standard_normal((n_len, r0)) / r0
    c = scenario_c(scenario, rng, m)
    r2 = int(np.linalg.matrix_rank(c))
    return Loadings(lambda1, lambda1 @ c, r0, r0, r2, c)


def gen_panel(cfg: DgpConfig) -> SimulatedPanel:
    """Simulate one panel; output is a pure function of ``cfg``."""
    load = gen_loadings(cfg.scenario, cfg.r0, cfg.n_len, stream(cfg.seed, "loadings"), cfg.m)
    factors = gen_factors(cfg, stream(cfg.seed, "factors"))

    if cfg.scenario is Scenario.ONE_D:
        k0, r1 = cfg.k0, load.r1
        g = gen_factors(cfg, stream(cfg.seed, "padding"), n_factors=load.r)
        g[:k0, :r1] = factors[:k0, :r1]
        g[k0:, r1:] = factors[k0:, :]
    else:
        g = factors

    if cfg.zero_error:
        errors = np.zeros((cfg.t_len, cfg.n_len))
    else:
        errors = gen_errors(cfg, stream(cfg.seed, "errors"))

    x = _assemble(g, load.lambda1, load.lambda2, cfg.k0) + errors
    arrays = (factors, g, errors, load.lambda1, load.lambda2)
    for arr in arrays:
        arr.setflags(write=False)
    return SimulatedPanel(
        panel=PanelData(x),
        factors=factors,
        pseudo_factors=g,
        errors=errors,
        lambda1=load.lambda1,
        lambda2=load.lambda2,
        r_pseudo=load.r,
        r1=load.r1,
        r2=load.r2,
        k0=cfg.k0,
        c=load.c,
    )
