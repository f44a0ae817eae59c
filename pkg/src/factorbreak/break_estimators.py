"""Break-date estimators on estimated pseudo-factors.

The QML estimator minimizes

    U(k) = k log det S1(k) + (T - k) log det S2(k)

over ``floor(tau1 T) <= k <= floor(tau2 T)``, where ``S1(k)`` and
``S2(k)`` are the second-moment matrices of the estimated factors before
and after ``k``.  ``k`` counts the periods in the first regime, so it is
also the 1-based index of the last pre-break period.

Cumulative outer-product sums make a full sweep cost O(T r^2) plus one
batched r x r eigendecomposition per candidate date.

The module also provides a least-squares baseline on the split means of
``vech(g_t g_t')`` and the two-sided limiting process ``W(l)`` whose argmin
describes ``k_hat - k0`` under a rotational break.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ParameterError

DEFAULT_FLOOR = 1e-12
SYMMETRY_TOL = 1e-8


class Method(str, enum.Enum):
    QML = "qml"
    LS = "ls"

    @classmethod
    def parse(cls, value) -> Method:
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ParameterError(f"unknown estimator {value!r}; use 'qml' or 'ls'") from None


@dataclass(frozen=True)
class SearchWindow:
    """Trimming fractions bounding the candidate break dates."""

    tau1: float = 0.15
    tau2: float = 0.85

    def __post_init__(self) -> None:
        if not 0.0 < self.tau1 < self.tau2 < 1.0:
            raise ParameterError(
                f"window needs 0 < tau1 < tau2 < 1, got tau1={self.tau1}, tau2={self.tau2}"
            )

    def bounds(self, t_len: int) -> tuple[int, int]:
        """Integer parts of ``tau1 T`` and ``tau2 T``, validated for this T."""
        # The small offset keeps e.g. 0.29 * 100 = 28.999... at 29.
        lo = math.floor(self.tau1 * t_len + 1e-9)
        hi = math.floor(self.tau2 * t_len + 1e-9)
        if lo < 1 or hi > t_len - 1 or lo > hi:
            raise ParameterError(
                f"window [{self.tau1}, {self.tau2}] gives candidate range [{lo}, {hi}], "
                f"which is empty or outside [1, T-1] for T={t_len}"
            )
        return lo, hi

    def candidates(self, t_len: int) -> NDArray[np.int64]:
        lo, hi = self.bounds(t_len)
        return np.arange(lo, hi + 1)


@dataclass(frozen=True)
class PrefixMoments:
    """Cumulative sums ``S_k = sum_{t<=k} g_t g_t'`` for k = 0..T."""

    cumulative: NDArray[np.float64]

    @property
    def t_len(self) -> int:
        return self.cumulative.shape[0] - 1

    @property
    def r(self) -> int:
        return self.cumulative.shape[1]

    @property
    def total(self) -> NDArray[np.float64]:
        return self.cumulative[-1]


@dataclass(frozen=True)
class BreakEstimate:
    """Estimated break date with the objective over the search window.

    ``objective[j]`` is ``U(candidates[j])``.  ``floor_activations`` counts
    the (k, regime) pairs in which at least one eigenvalue was raised to the
    floor.
    """

    k_hat: int
    candidates: NDArray[np.int64]
    objective: NDArray[np.float64]
    method: Method
    window: SearchWindow
    floor_activations: int = 0

    def objective_map(self) -> dict[int, float]:
        return {int(k): float(u) for k, u in zip(self.candidates, self.objective)}

    @property
    def min_objective(self) -> float:
        return float(self.objective[self.k_hat - self.candidates[0]])


def _as_factors(g_hat: ArrayLike) -> NDArray[np.float64]:
    g = np.asarray(g_hat, dtype=np.float64)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2 or g.shape[0] < 2 or g.shape[1] < 1:
        raise ParameterError(f"factors must be a (T, r) array with T >= 2, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ParameterError("factors contain NaN or infinite entries")
    return g


def prefix_moments(g_hat: ArrayLike) -> PrefixMoments:
    g = _as_factors(g_hat)
    t_len, r = g.shape
    cum = np.zeros((t_len + 1, r, r))
    np.cumsum(g[:, :, None] * g[:, None, :], axis=0, out=cum[1:])
    cum.setflags(write=False)
    return PrefixMoments(cum)


def _check_split(pm: PrefixMoments, k) -> None:
    t_len = pm.t_len
    if np.any(np.asarray(k) < 1) or np.any(np.asarray(k) > t_len - 1):
        raise ParameterError(f"split point k={k} must satisfy 1 <= k <= T-1 = {t_len - 1}")


def split_covariances(pm: PrefixMoments, k: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Second-moment matrices of the factors up to ``k`` and after ``k``."""
    _check_split(pm, k)
    t_len = pm.t_len
    s_k = pm.cumulative[k]
    return s_k / k, (pm.total - s_k) / (t_len - k)


def log_det_psd(m: ArrayLike, floor: float = DEFAULT_FLOOR) -> tuple[float, bool]:
    """Log-determinant of a symmetric PSD matrix with eigenvalue flooring.

    Returns ``(sum_j log(max(eig_j, floor)), any eig_j < floor)``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {m.shape}")
    if floor <= 0.0:
        raise ParameterError(f"floor must be positive, got {floor}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ParameterError("matrix is not symmetric within tolerance")
    eig = np.linalg.eigvalsh(0.5 * (m + m.T))
    return float(np.sum(np.log(np.maximum(eig, floor)))), bool(np.any(eig < floor))


def _batched_logdet(mats: NDArray[np.float64], floor: float) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    eig = np.linalg.eigvalsh(mats)
    return np.log(np.maximum(eig, floor)).sum(axis=-1), np.any(eig < floor, axis=-1)


def _qml_curve(pm: PrefixMoments, ks: NDArray[np.int64], floor: float) -> tuple[NDArray[np.float64], int]:
    t_len = pm.t_len
    s_k = pm.cumulative[ks]
    kk = ks[:, None, None].astype(np.float64)
    ld1, fl1 = _batched_logdet(s_k / kk, floor)
    ld2, fl2 = _batched_logdet((pm.total - s_k) / (t_len - kk), floor)
    u = ks * ld1 + (t_len - ks) * ld2
    return u, int(fl1.sum() + fl2.sum())


def qml_objective(pm: PrefixMoments, k: int, floor: float = DEFAULT_FLOOR) -> float:
    """``U(k) = k log det S1(k) + (T-k) log det S2(k)``."""
    sigma1, sigma2 = split_covariances(pm, k)
    ld1, _ = log_det_psd(sigma1, floor)
    ld2, _ = log_det_psd(sigma2, floor)
    return k * ld1 + (pm.t_len - k) * ld2


def estimate_break_qml(
    g_hat: ArrayLike | PrefixMoments,
    window: SearchWindow | None = None,
    floor: float = DEFAULT_FLOOR,
) -> BreakEstimate:
    """QML break date: the smallest minimizer of ``U(k)`` over the window."""
    window = window or SearchWindow()
    if floor <= 0.0:
        raise ParameterError(f"floor must be positive, got {floor}")
    pm = g_hat if isinstance(g_hat, PrefixMoments) else prefix_moments(g_hat)
    ks = window.candidates(pm.t_len)
    u, n_floor = _qml_curve(pm, ks, floor)
    j = int(np.argmin(u))
    return BreakEstimate(
        k_hat=int(ks[j]),
        candidates=ks,
        objective=u,
        method=Method.QML,
        window=window,
        floor_activations=n_floor,
    )


def vech(m: NDArray[np.float64]) -> NDArray[np.float64]:
    """Lower-triangular half (diagonal included) of the trailing r x r axes."""
    rows, cols = np.tril_indices(m.shape[-1])
    return m[..., rows, cols]


def ls_objective_curve(g_hat: ArrayLike, ks: NDArray[np.int64]) -> NDArray[np.float64]:
    """Split-means residual sum of squares of ``vech(g_t g_t')`` at each k."""
    g = _as_factors(g_hat)
    t_len = g.shape[0]
    z = vech(g[:, :, None] * g[:, None, :])
    # Centring does not change the SSR and limits cancellation.
    z = z - z.mean(axis=0)
    total_sq = float(np.sum(z * z))
    cum = np.cumsum(z, axis=0)
    p_k = cum[ks - 1]
    p_t = cum[-1]
    ssr = total_sq - np.sum(p_k**2, axis=1) / ks - np.sum((p_t - p_k) ** 2, axis=1) / (t_len - ks)
    return np.maximum(ssr, 0.0)


def estimate_break_ls(g_hat: ArrayLike, window: SearchWindow | None = None) -> BreakEstimate:
    """Least-squares baseline on the second moments of the factors.

    Minimizes the pooled within-regime sum of squares of ``vech(g_t g_t')``
    around its pre- and post-``k`` means.
    """
    window = window or SearchWindow()
    g = _as_factors(g_hat)
    ks = window.candidates(g.shape[0])
    u = ls_objective_curve(g, ks)
    j = int(np.argmin(u))
    return BreakEstimate(k_hat=int(ks[j]), candidates=ks, objective=u, method=Method.LS, window=window)


def estimate_break(g_hat, method: Method | str = Method.QML, window: SearchWindow | None = None, floor: float = DEFAULT_FLOOR) -> BreakEstimate:
    method = Method.parse(method)
    if method is Method.QML:
        return estimate_break_qml(g_hat, window, floor)
    return estimate_break_ls(g_hat, window)


# ---------------------------------------------------------------------------
# Limiting process under a rotational break


@dataclass(frozen=True)
class LimitSpec:
    """Population pre- and post-break second moments of the rotated factors."""

    sigma1: NDArray[np.float64]
    sigma2: NDArray[np.float64]

    def __post_init__(self) -> None:
        s1 = np.atleast_2d(np.asarray(self.sigma1, dtype=np.float64))
        s2 = np.atleast_2d(np.asarray(self.sigma2, dtype=np.float64))
        if s1.shape != s2.shape or s1.shape[0] != s1.shape[1]:
            raise ParameterError(f"sigma1 {s1.shape} and sigma2 {s2.shape} must be equal square shapes")
        for name, s in (("sigma1", s1), ("sigma2", s2)):
            if not np.allclose(s, s.T, rtol=0.0, atol=SYMMETRY_TOL * max(1.0, np.abs(s).max())):
                raise ParameterError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(s)[0] <= 0.0:
                raise ParameterError(f"{name} is not positive definite")
        object.__setattr__(self, "sigma1", s1)
        object.__setattr__(self, "sigma2", s2)

    @property
    def r(self) -> int:
        return self.sigma1.shape[0]

    def is_degenerate(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.sigma1, self.sigma2, rtol=0.0, atol=atol))

    def drifts(self) -> tuple[float, float]:
        """Per-period drift of W for negative and positive lags."""
        a_pos = np.linalg.solve(self.sigma1, self.sigma2)  # Sigma1^{-1} Sigma2
        a_neg = np.linalg.solve(self.sigma2, self.sigma1).T  # Sigma1 Sigma2^{-1}
        return kl_drift(a_neg), kl_drift(a_pos)

    def trace_weights(self) -> NDArray[np.float64]:
        """``Sigma1^{-1} - Sigma2^{-1}``."""
        return np.linalg.inv(self.sigma1) - np.linalg.inv(self.sigma2)


def kl_drift(a: ArrayLike) -> float:
    """``tr(A) - r - log det(A)``; nonnegative when A is similar to a PD matrix."""
    a = np.asarray(a, dtype=np.float64)
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0:
        raise ParameterError("drift matrix must have a positive determinant")
    return float(np.trace(a) - a.shape[0] - logdet)


def _xi_array(xi, ell_max: int, r: int) -> NDArray[np.float64]:
    arr = np.asarray(xi, dtype=np.float64)
    if arr.shape != (2 * ell_max + 1, r, r):
        raise ParameterError(f"xi must have shape {(2 * ell_max + 1, r, r)}, got {arr.shape}")
    return arr


def limit_w(ell: int, spec: LimitSpec, xi: ArrayLike | Mapping[int, ArrayLike]) -> float:
    """Value of the limiting process at lag ``ell``.

    ``xi`` supplies the centred second-moment shocks indexed by their offset
    ``s = t - k0``.  It is either a mapping ``{s: r x r matrix}`` or an array
    of shape ``(2L+1, r, r)`` whose row ``L + s`` holds offset ``s`` (row
    ``L``, offset 0, is never used).  Positive lags use offsets ``1..ell``;
    negative lags use ``ell..-1``.
    """
    ell = int(ell)
    if ell == 0:
        return 0.0
    weights = spec.trace_weights()
    offsets = range(1, ell + 1) if ell > 0 else range(ell, 0)
    if isinstance(xi, Mapping):
        mats = []
        for s in offsets:
            if s not in xi:
                raise ParameterError(f"xi has no entry for offset {s}")
            mats.append(np.asarray(xi[s], dtype=np.float64))
    else:
        arr = np.asarray(xi, dtype=np.float64)
        half = (arr.shape[0] - 1) // 2
        if abs(ell) > half:
            raise ParameterError(f"|ell|={abs(ell)} exceeds the {half} offsets supplied on each side")
        mats = [arr[half + s] for s in offsets]
    shock = sum(float(np.sum(weights * m.T)) for m in mats)
    drift_neg, drift_pos = spec.drifts()
    if ell > 0:
        return shock + drift_pos * ell
    # tr((Sigma2^{-1} - Sigma1^{-1}) xi) = -tr(weights xi); -drift * ell > 0.
    return -shock - drift_neg * ell


def limit_w_path(spec: LimitSpec, xi: ArrayLike) -> NDArray[np.float64]:
    """``W(l)`` for every ``l`` in ``-L..L`` at once, for an xi array."""
    arr = np.asarray(xi, dtype=np.float64)
    half = (arr.shape[0] - 1) // 2
    arr = _xi_array(arr, half, spec.r)
    tr = np.einsum("ij,tji->t", spec.trace_weights(), arr)
    drift_neg, drift_pos = spec.drifts()
    lags = np.arange(1, half + 1)
    w_pos = np.cumsum(tr[half + 1 :]) + drift_pos * lags
    # Negative side accumulates offsets -1, -2, ... outward.
    w_neg = np.cumsum(-tr[:half][::-1]) + drift_neg * lags
    return np.concatenate([w_neg[::-1], [0.0], w_pos])


XiSampler = Callable[[np.random.Generator, int], NDArray[np.float64]]


def zero_xi_sampler(spec: LimitSpec) -> XiSampler:
    def sample(rng: np.random.Generator, ell_max: int) -> NDArray[np.float64]:
        return np.zeros((2 * ell_max + 1, spec.r, spec.r))

    return sample


def wishart_xi_sampler(spec: LimitSpec, scale: float = 0.1) -> XiSampler:
    """i.i.d. ``scale * (z z' - I)`` shocks with standard normal ``z``."""

    def sample(rng: np.random.Generator, ell_max: int) -> NDArray[np.float64]:
        z = rng.standard_normal((2 * ell_max + 1, spec.r))
        return scale * (z[:, :, None] * z[:, None, :] - np.eye(spec.r))

    return sample


def factor_xi_sampler(spec: LimitSpec) -> XiSampler:
    """Shocks ``h_t h_t' - Sigma`` from i.i.d. Gaussian rotated factors.

    ``h_t ~ N(0, Sigma1)`` for offsets ``s <= 0`` and ``N(0, Sigma2)`` for
    ``s >= 1``, matching the pre- and post-break regimes.
    """
    chol1 = np.linalg.cholesky(spec.sigma1)
    chol2 = np.linalg.cholesky(spec.sigma2)

    def sample(rng: np.random.Generator, ell_max: int) -> NDArray[np.float64]:
        z = rng.standard_normal((2 * ell_max + 1, spec.r))
        h = np.empty_like(z)
        h[: ell_max + 1] = z[: ell_max + 1] @ chol1.T
        h[ell_max + 1 :] = z[ell_max + 1 :] @ chol2.T
        xi = h[:, :, None] * h[:, None, :]
        xi[: ell_max + 1] -= spec.sigma1
        xi[ell_max + 1 :] -= spec.sigma2
        return xi

    return sample


@dataclass(frozen=True)
class LimitDistribution:
    """Empirical distribution of ``argmin_l W(l)`` over simulated paths."""

    lags: NDArray[np.int64]
    counts: NDArray[np.int64]

    @property
    def n_draws(self) -> int:
        return int(self.counts.sum())

    def as_dict(self) -> dict[int, int]:
        return {int(l): int(c) for l, c in zip(self.lags, self.counts)}

    def probabilities(self) -> NDArray[np.float64]:
        return self.counts / self.n_draws


def simulate_limit_distribution(
    spec: LimitSpec,
    xi_sampler: XiSampler | None = None,
    ell_max: int = 20,
    n_draws: int = 1000,
    seed: int = 0,
) -> LimitDistribution:
    """Monte Carlo law of ``argmin_{|l| <= ell_max} W(l)``.

    Each draw calls ``xi_sampler(rng, ell_max)`` once on a single generator
    seeded with ``seed``; ties go to the smallest lag.  The default sampler
    is :func:`factor_xi_sampler`.
    """
    if ell_max < 1 or n_draws < 1:
        raise ParameterError(f"need ell_max >= 1 and n_draws >= 1, got {ell_max}, {n_draws}")
    if spec.is_degenerate():
        raise ParameterError("sigma1 equals sigma2: the limiting process has no identified break")
    sampler = xi_sampler or factor_xi_sampler(spec)
    rng = np.random.default_rng(seed)
    lags = np.arange(-ell_max, ell_max + 1)
    counts = np.zeros(lags.size, dtype=np.int64)
    for _ in range(n_draws):
        path = limit_w_path(spec, sampler(rng, ell_max))
        counts[int(np.argmin(path))] += 1
    return LimitDistribution(lags=lags, counts=counts)
