"""Panel containers and full-sample principal component extraction.

The panel is stored time-major: ``values[t, i]`` is series ``i`` at period
``t``. Principal components are normalized so that ``G'G / T = I_r`` and the
loadings are ``Lambda = X'G / T``, which makes ``G`` satisfy the eigen
fixed point ``(1/NT) X X' G = G V``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import NumericalError, ParameterError

# Relative size below which an eigenvalue is treated as numerically zero.
EIGEN_REL_FLOOR = 1e-12
# Relative gap at the r-th eigenvalue below which the top-r subspace is
# flagged as rotation-indeterminate.
MULTIPLICITY_RTOL = 1e-10


@dataclass(frozen=True)
class PanelData:
    """Observed T x N panel, rows are periods and columns are series."""

    values: NDArray[np.float64]

    def __post_init__(self) -> None:
        x = np.array(self.values, dtype=np.float64, copy=True)
        if x.ndim != 2:
            raise ParameterError(f"panel must be two-dimensional, got ndim={x.ndim}")
        t_len, n_len = x.shape
        if t_len < 4 or n_len < 2:
            raise ParameterError(
                f"panel needs T >= 4 and N >= 2, got T={t_len}, N={n_len}"
            )
        if not np.all(np.isfinite(x)):
            raise ParameterError("panel contains NaN or infinite entries")
        x.setflags(write=False)
        object.__setattr__(self, "values", x)

    @classmethod
    def from_array(cls, values: ArrayLike) -> PanelData:
        return cls(np.asarray(values, dtype=np.float64))

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def n_len(self) -> int:
        return self.values.shape[1]

    def standardized(self) -> PanelData:
        """Demean and scale every series to unit sample variance.

        Constant series are only demeaned.
        """
        x = self.values - self.values.mean(axis=0)
        sd = x.std(axis=0)
        sd[sd == 0.0] = 1.0
        return PanelData(x / sd)


@dataclass(frozen=True)
class PcaFit:
    """Estimated pseudo-factors, loadings and leading eigenvalues.

    Attributes
    ----------
    g_hat : ndarray, shape (T, r)
        Estimated factors; row ``t`` is the estimate of ``g_t'``.
    lambda_hat : ndarray, shape (N, r)
        Estimated loadings ``X'G/T``.
    v_nt : ndarray, shape (r,)
        Leading eigenvalues of ``XX'/(NT)`` in descending order.
    degenerate : bool
        True when the r-th and (r+1)-th eigenvalues coincide within
        tolerance, so that ``g_hat`` is only determined up to a rotation
        inside the tied eigenspace.
    """

    g_hat: NDArray[np.float64]
    lambda_hat: NDArray[np.float64]
    v_nt: NDArray[np.float64]
    degenerate: bool = False

    @property
    def r(self) -> int:
        return self.g_hat.shape[1]

    @property
    def t_len(self) -> int:
        return self.g_hat.shape[0]

    def common_component(self) -> NDArray[np.float64]:
        return self.g_hat @ self.lambda_hat.T


def gram_matrix(panel: PanelData) -> NDArray[np.float64]:
    """Return the T x T matrix ``XX'/(NT)``, symmetrized exactly."""
    x = panel.values
    g = (x @ x.T) / (panel.n_len * panel.t_len)
    return 0.5 * (g + g.T)


def _dual_gram(panel: PanelData) -> NDArray[np.float64]:
    x = panel.values
    g = (x.T @ x) / (panel.n_len * panel.t_len)
    return 0.5 * (g + g.T)


def _eigh_descending(m: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    try:
        w, v = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    return w[::-1], v[:, ::-1]


def panel_spectrum(panel: PanelData) -> NDArray[np.float64]:
    """All min(T, N) eigenvalues of ``XX'/(NT)`` in descending order.

    Values below ``EIGEN_REL_FLOOR`` times the largest one (and any
    round-off negatives) are set to exactly zero.
    """
    m = gram_matrix(panel) if panel.t_len <= panel.n_len else _dual_gram(panel)
    try:
        w = np.linalg.eigvalsh(m)[::-1]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"symmetric eigensolver failed: {exc}") from exc
    top = w[0] if w.size else 0.0
    w = np.where(w > EIGEN_REL_FLOOR * max(top, 0.0), w, 0.0)
    return w


def _fix_signs(g: NDArray[np.float64]) -> NDArray[np.float64]:
    # Largest |entry| of each column made positive; argmax picks the earliest tie.
    idx = np.argmax(np.abs(g), axis=0)
    signs = np.sign(g[idx, np.arange(g.shape[1])])
    signs[signs == 0] = 1.0
    return g * signs


def estimate_pca(panel: PanelData, r: int) -> PcaFit:
    """Extract ``r`` principal-component factors from the full sample.

    The eigenproblem is solved on the smaller of ``XX'/(NT)`` (T x T) and
    ``X'X/(NT)`` (N x N); both share the same nonzero spectrum.

    Parameters
    ----------
    panel : PanelData
        Observed panel.
    r : int
        Number of factors, ``1 <= r <= min(T, N)``.

    Returns
    -------
    PcaFit

    Raises
    ------
    ParameterError
        If ``r`` is out of range.
    NumericalError
        If the eigensolver fails or one of the top ``r`` eigenvalues is
        numerically zero.
    """
    t_len, n_len = panel.t_len, panel.n_len
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= min(t_len, n_len):
        raise ParameterError(
            f"number of factors r={r} must satisfy 1 <= r <= min(T, N) = {min(t_len, n_len)}"
        )
    r = int(r)
    x = panel.values
    small_t = t_len <= n_len
    w, vecs = _eigh_descending(gram_matrix(panel) if small_t else _dual_gram(panel))

    if w[0] <= 0.0 or w[r - 1] < EIGEN_REL_FLOOR * w[0]:
        raise NumericalError(
            f"eigenvalue {r} of the panel Gram matrix is numerically zero; "
            f"the panel has rank below r={r}"
        )
    v_nt = w[:r].copy()

    if small_t:
        g_hat = vecs[:, :r] * np.sqrt(t_len)
    else:
        # X'X u = NT v u  =>  XX'(Xu) = NT v (Xu), and |Xu|^2 = NT v.
        g_hat = (x @ vecs[:, :r]) / np.sqrt(n_len * v_nt)

    g_hat = _fix_signs(g_hat)
    lambda_hat = (x.T @ g_hat) / t_len

    degenerate = False
    if r < w.size:
        degenerate = bool(w[r - 1] - w[r] <= MULTIPLICITY_RTOL * w[0])
    if r > 1 and np.any(np.diff(v_nt) >= -MULTIPLICITY_RTOL * w[0]):
        degenerate = True

    for arr in (g_hat, lambda_hat, v_nt):
        arr.setflags(write=False)
    return PcaFit(g_hat=g_hat, lambda_hat=lambda_hat, v_nt=v_nt, degenerate=degenerate)
