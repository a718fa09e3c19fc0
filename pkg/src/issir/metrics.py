"""BSS-Eval style separation scores (SDR, SIR, SAR).

An estimate is split into three orthogonal-ish parts with ``L``-tap
time-invariant filters: the part explained by filtered copies of its own
reference, the extra part explained by the other references, and the
remainder.  As in the usual toolbox convention, the estimate is zero-padded
by ``L - 1`` samples so that the filtered references fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.linalg
from scipy.signal import fftconvolve

__all__ = [
    "Decomposition",
    "SeparationScores",
    "ReferenceSet",
    "decompose",
    "scores",
    "bss_eval",
    "relative_scores",
    "SCORE_CAP_DB",
]

SCORE_CAP_DB = 100.0
RIDGE = 1e-12


@dataclass
class Decomposition:
    target: np.ndarray
    interference: np.ndarray
    artifacts: np.ndarray
    regularized: bool = False
    degenerate: bool = False


def _next_fast_len(n: int) -> int:
    return scipy.fft.next_fast_len(n, real=True)


class ReferenceSet:
    """Reference signals with their delayed-copy Gram matrix factorised once.

    Args:
        references: ``(J, T)`` array-like.
        filter_length: number of delays ``L``.
    """

    def __init__(self, references, filter_length: int = 512):
        refs = np.atleast_2d(np.asarray(references, dtype=float))
        if filter_length < 1:
            raise ValueError("filter length must be >= 1")
        self.refs = refs
        self.L = int(filter_length)
        J, T = refs.shape
        self.nfft = _next_fast_len(T + self.L - 1)
        self.spectra = np.fft.rfft(refs, n=self.nfft)
        self._own = {}
        self._all = None

    @property
    def num_sources(self) -> int:
        return self.refs.shape[0]

    def _gram(self, idx) -> np.ndarray:
        """Gram matrix of the delayed copies of references ``idx``."""
        L = self.L
        n = len(idx)
        G = np.empty((n * L, n * L))
        for a, i in enumerate(idx):
            for b, j in enumerate(idx[a:], start=a):
                # xc[m] = sum_t r_i(t) r_j(t + m); negative lags wrap to the tail.
                xc = np.fft.irfft(np.conj(self.spectra[i]) * self.spectra[j], n=self.nfft)
                block = scipy.linalg.toeplitz(xc[:L], np.concatenate([xc[:1], xc[::-1][:L - 1]]))
                G[a * L:(a + 1) * L, b * L:(b + 1) * L] = block
                if b != a:
                    G[b * L:(b + 1) * L, a * L:(a + 1) * L] = block.T
        return G

    def _factor(self, idx):
        G = self._gram(idx)
        ridge = RIDGE * np.trace(G)
        try:
            return scipy.linalg.cho_factor(G + ridge * np.eye(G.shape[0])), G, False
        except np.linalg.LinAlgError:
            return None, G, True

    def _solver(self, idx):
        key = tuple(idx)
        if len(idx) == 1:
            if key not in self._own:
                self._own[key] = self._factor(idx)
            return self._own[key]
        if self._all is None:
            self._all = self._factor(idx)
        return self._all

    def project(self, estimate, idx) -> tuple[np.ndarray, bool]:
        """Least-squares projection of ``estimate`` onto delayed copies of ``idx``."""
        L = self.L
        T = self.refs.shape[1]
        est_spec = np.fft.rfft(estimate, n=self.nfft)
        rhs = np.empty(len(idx) * L)
        for a, i in enumerate(idx):
            xc = np.fft.irfft(np.conj(self.spectra[i]) * est_spec, n=self.nfft)
            rhs[a * L:(a + 1) * L] = xc[:L]
        factor, G, singular = self._solver(idx)
        if factor is not None:
            coef = scipy.linalg.cho_solve(factor, rhs)
        else:
            coef = np.linalg.lstsq(G, rhs, rcond=None)[0]
        coef = coef.reshape(len(idx), L)
        proj = np.zeros(T + L - 1)
        for a, i in enumerate(idx):
            proj += fftconvolve(self.refs[i], coef[a])
        return proj, singular


def decompose(estimate, references, j: int, filter_length: int = 512,
              reference_set: ReferenceSet | None = None) -> Decomposition:
    """Split ``estimate`` into target, interference and artifact parts.

    Args:
        estimate: estimated source, same length as the references.
        references: ``(J, T)`` true sources.
        j: index of the reference the estimate is meant to recover.
        filter_length: number of filter taps ``L``.
        reference_set: optional prebuilt :class:`ReferenceSet` for the same
            references, to reuse its factorisations.

    Returns:
        A :class:`Decomposition` whose three parts (length ``T + L - 1``) add
        up to the zero-padded estimate.
    """
    refs = reference_set if reference_set is not None else ReferenceSet(references, filter_length)
    estimate = np.asarray(estimate, dtype=float)
    T = refs.refs.shape[1]
    if estimate.shape != (T,):
        raise ValueError("estimate and references differ in length")
    if not 0 <= j < refs.num_sources:
        raise ValueError("reference index out of range")
    padded = np.concatenate([estimate, np.zeros(refs.L - 1)])
    if not np.any(refs.refs[j]) or not np.any(estimate):
        zero = np.zeros_like(padded)
        return Decomposition(zero, zero.copy(), padded, degenerate=True)
    s_target, sing_own = refs.project(estimate, [j])
    p_all, sing_all = refs.project(estimate, list(range(refs.num_sources)))
    return Decomposition(
        target=s_target,
        interference=p_all - s_target,
        artifacts=padded - p_all,
        regularized=sing_own or sing_all,
    )


def _ratio_db(num: float, den: float) -> float:
    if den <= 0:
        return SCORE_CAP_DB
    if num <= 0:
        return -SCORE_CAP_DB
    return float(min(10.0 * np.log10(num / den), SCORE_CAP_DB))


@dataclass
class SeparationScores:
    """Per-source scores in dB; ``nan`` marks an undefined entry."""

    sdr: np.ndarray
    sir: np.ndarray
    sar: np.ndarray
    baseline: str | None = None
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.sdr = np.atleast_1d(np.asarray(self.sdr, dtype=float))
        self.sir = np.atleast_1d(np.asarray(self.sir, dtype=float))
        self.sar = np.atleast_1d(np.asarray(self.sar, dtype=float))

    def __len__(self):
        return self.sdr.size

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"sdr": self.sdr, "sir": self.sir, "sar": self.sar}

    def mean(self) -> dict[str, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return {k: float(np.nanmean(v)) for k, v in self.as_dict().items()}

    def std(self) -> dict[str, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return {k: float(np.nanstd(v)) for k, v in self.as_dict().items()}


def scores(decomposition: Decomposition | list) -> SeparationScores:
    """SDR, SIR and SAR of one decomposition or a list of them.

    Ratios with a zero denominator are capped at +100 dB; degenerate
    decompositions (silent reference or estimate) score ``nan``.
    """
    items = decomposition if isinstance(decomposition, (list, tuple)) else [decomposition]
    sdr, sir, sar, flags = [], [], [], []
    for d in items:
        if d.degenerate:
            sdr.append(np.nan)
            sir.append(np.nan)
            sar.append(np.nan)
            flags.append("undefined")
            continue
        t = float(np.dot(d.target, d.target))
        i = float(np.dot(d.interference, d.interference))
        a = float(np.dot(d.artifacts, d.artifacts))
        ia = d.interference + d.artifacts
        ti = d.target + d.interference
        sdr.append(_ratio_db(t, float(np.dot(ia, ia))))
        sir.append(_ratio_db(t, i))
        sar.append(_ratio_db(float(np.dot(ti, ti)), a))
        flags.append("regularized" if d.regularized else "")
    return SeparationScores(sdr, sir, sar, flags=flags)


def bss_eval(estimates, references, filter_length: int = 512,
             reference_set: ReferenceSet | None = None) -> SeparationScores:
    """Score every estimate against its own reference (order is known)."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    refs = reference_set if reference_set is not None else ReferenceSet(references, filter_length)
    if estimates.shape != refs.refs.shape:
        raise ValueError("estimates and references differ in shape")
    return scores([decompose(e, None, j, reference_set=refs) for j, e in enumerate(estimates)])


def relative_scores(result: SeparationScores, baseline: SeparationScores,
                    name: str = "baseline") -> SeparationScores:
    """Element-wise dB difference ``result - baseline``."""
    if len(result) != len(baseline):
        raise ValueError("score sets differ in source count")
    return SeparationScores(result.sdr - baseline.sdr, result.sir - baseline.sir,
                            result.sar - baseline.sar, baseline=name)
