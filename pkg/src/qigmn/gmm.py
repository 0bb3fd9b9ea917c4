"""Fast incremental Gaussian mixture (FIGMN) over joint input/output vectors.

Components are stored as stacked arrays so that per-sample work is a handful
of batched numpy calls. Each component keeps its precision matrix and the
determinant of its covariance; both are maintained by rank-one updates, so no
full matrix is ever inverted during learning.

Missing entries are expressed with a boolean ``known`` mask. Distances,
likelihoods and posteriors on a partial vector use the marginal over the known
block, obtained from the precision matrix through a Schur complement, and
unknown entries are filled with each component's conditional mean.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import NotPositiveDefinite, chi2_threshold, cholesky_logdet, invert_symmetric, symmetrize

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
_LOG_2PI = math.log(2.0 * math.pi)
DET_FLOOR = 1e-300


class EmptyModel(RuntimeError):
    """Raised by read operations on a mixture with no components."""


class NumericalFailure(ArithmeticError):
    """Raised when a density or a precision block stops being usable."""


@dataclass
class GaussianComponent:
    mean: np.ndarray
    precision: np.ndarray
    cov_det: float
    sp: float = 1.0
    age: int = 1
    prior: float = 1.0


@dataclass
class MixtureConfig:
    """Hyperparameters of a mixture.

    Attributes:
        beta: creation threshold; a sample further than the ``1 - beta``
            chi-squared percentile from every component spawns a new one.
        sigma_ini: initial per-dimension variances of new components.
        v_min, sp_min: pruning rule, remove when ``age > v_min and sp < sp_min``.
        pruning_enabled: pruning is off by default.
        q_dims: indices whose means move at the decoupled rate ``p(j|x) * q_alpha``.
        q_alpha: decoupled learning rate; 0 disables it.
    """

    beta: float
    sigma_ini: np.ndarray
    v_min: float = 5.0
    sp_min: float = 3.0
    pruning_enabled: bool = False
    q_dims: tuple[int, ...] = ()
    q_alpha: float = 0.0

    def __post_init__(self) -> None:
        self.sigma_ini = np.asarray(self.sigma_ini, dtype=float).reshape(-1)
        self.q_dims = tuple(int(i) for i in self.q_dims)
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if np.any(~np.isfinite(self.sigma_ini)) or np.any(self.sigma_ini <= 0):
            raise ValueError("sigma_ini must be strictly positive")
        if any(i < 0 or i >= self.sigma_ini.size for i in self.q_dims):
            raise ValueError(f"q_dims {self.q_dims} out of range for dimension {self.sigma_ini.size}")
        if self.q_alpha < 0:
            raise ValueError("q_alpha must be >= 0")

    @classmethod
    def from_ranges(cls, ranges: Sequence[float], fraction: float = 0.3, **kwargs) -> "MixtureConfig":
        """Initial std of each dimension as ``fraction`` of its range."""
        ranges = np.asarray(ranges, dtype=float)
        return cls(sigma_ini=(fraction * ranges) ** 2, **kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma_ini"] = [float(s) for s in self.sigma_ini]
        d["q_dims"] = list(self.q_dims)
        return d


def mahalanobis_sq(comp: GaussianComponent, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != comp.mean.shape:
        raise ValueError(f"vector shape {x.shape} does not match component {comp.mean.shape}")
    e = x - comp.mean
    return float(e @ comp.precision @ e)


def likelihood(comp: GaussianComponent, x: np.ndarray) -> float:
    d2 = mahalanobis_sq(comp, x)
    dim = comp.mean.size
    value = math.exp(-0.5 * d2) / math.sqrt((2.0 * math.pi) ** dim * comp.cov_det)
    if not math.isfinite(value):
        raise NumericalFailure(f"non-finite likelihood (cov_det={comp.cov_det})")
    return value


def normalize_posteriors(log_weights: np.ndarray, distances: np.ndarray | None = None) -> np.ndarray:
    """Softmax of ``log(p(x|j) p(j))``.

    When every term underflows, all mass goes to the component with the
    smallest distance (or the first one if no distances are given).
    """
    log_weights = np.asarray(log_weights, dtype=float)
    top = np.max(log_weights)
    if not np.isfinite(top):
        out = np.zeros_like(log_weights)
        out[0 if distances is None else int(np.argmin(distances))] = 1.0
        return out
    w = np.exp(log_weights - top)
    return w / w.sum()


@dataclass
class _Masked:
    # Per-component quantities for one partially observed vector.
    known: np.ndarray
    unknown: np.ndarray
    d2: np.ndarray
    log_lik: np.ndarray
    cond: np.ndarray  # (K, n_unknown) conditional means


class Mixture:
    """Ordered collection of Gaussian components plus their hyperparameters."""

    def __init__(self, dim: int, config: MixtureConfig):
        if config.sigma_ini.size != dim:
            raise ValueError(f"sigma_ini has {config.sigma_ini.size} entries, expected {dim}")
        self.dim = int(dim)
        self.config = config
        self.means = np.empty((0, dim))
        self.precisions = np.empty((0, dim, dim))
        self.cov_dets = np.empty(0)
        self.sps = np.empty(0)
        self.ages = np.empty(0, dtype=np.int64)
        self.priors = np.empty(0)
        self.resets = 0

    # -- introspection -------------------------------------------------------

    def __len__(self) -> int:
        return self.means.shape[0]

    @property
    def components(self) -> list[GaussianComponent]:
        return [self.component(j) for j in range(len(self))]

    def component(self, j: int) -> GaussianComponent:
        return GaussianComponent(
            mean=self.means[j].copy(),
            precision=self.precisions[j].copy(),
            cov_det=float(self.cov_dets[j]),
            sp=float(self.sps[j]),
            age=int(self.ages[j]),
            prior=float(self.priors[j]),
        )

    def threshold(self, n_known: int) -> float:
        return chi2_threshold(n_known, self.config.beta)

    def copy(self) -> "Mixture":
        other = Mixture(self.dim, MixtureConfig(**{**self.config.to_dict()}))
        for name in ("means", "precisions", "cov_dets", "sps", "ages", "priors"):
            setattr(other, name, getattr(self, name).copy())
        other.resets = self.resets
        return other

    # -- densities -----------------------------------------------------------

    def _full_mask(self) -> np.ndarray:
        return np.ones(self.dim, dtype=bool)

    def _check(self, x: np.ndarray, known: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise ValueError(f"vector has {x.size} entries, expected {self.dim}")
        known = self._full_mask() if known is None else np.asarray(known, dtype=bool).reshape(-1)
        if known.size != self.dim:
            raise ValueError(f"mask has {known.size} entries, expected {self.dim}")
        if not known.any():
            raise ValueError("at least one dimension must be known")
        return x, known

    def _masked(self, x: np.ndarray, known: np.ndarray) -> _Masked:
        ki = np.flatnonzero(known)
        ti = np.flatnonzero(~known)
        diff = x[ki] - self.means[:, ki]
        log_det = np.log(self.cov_dets)
        if ti.size == 0:
            prec_i = self.precisions
            cond = np.empty((len(self), 0))
        else:
            lam = self.precisions
            lam_ii = lam[:, ki[:, None], ki]
            lam_ti = lam[:, ti[:, None], ki]
            lam_tt = lam[:, ti[:, None], ti]
            try:
                lam_tt_inv = invert_symmetric(lam_tt)
                log_det = log_det + cholesky_logdet(lam_tt)
            except NotPositiveDefinite as exc:
                raise NumericalFailure(f"unknown-block precision not positive definite: {exc}") from None
            # Marginal precision of the known block (Schur complement).
            gain = lam_tt_inv @ lam_ti
            prec_i = lam_ii - np.swapaxes(lam_ti, -1, -2) @ gain
            cond = self.means[:, ti] - np.einsum("kti,ki->kt", gain, diff)
        d2 = np.einsum("ki,kij,kj->k", diff, prec_i, diff)
        d2 = np.maximum(d2, 0.0)
        log_lik = -0.5 * (ki.size * _LOG_2PI + log_det + d2)
        return _Masked(ki, ti, d2, log_lik, cond)

    def mahalanobis_sq(self, x: np.ndarray, known: np.ndarray | None = None) -> np.ndarray:
        """Squared distances of ``x`` to every component over its known entries."""
        x, known = self._check(x, known)
        if not len(self):
            return np.empty(0)
        return self._masked(x, known).d2

    def posteriors(self, x: np.ndarray, known: np.ndarray | None = None) -> np.ndarray:
        x, known = self._check(x, known)
        if not len(self):
            raise EmptyModel("posteriors of an empty mixture")
        m = self._masked(x, known)
        return normalize_posteriors(m.log_lik + np.log(self.priors), m.d2)

    # -- inference -----------------------------------------------------------

    def infer(self, x: np.ndarray, known: np.ndarray) -> np.ndarray:
        """Posterior-weighted conditional mean of the unknown entries of ``x``."""
        x, known = self._check(x, known)
        if not len(self):
            raise EmptyModel("inference on an empty mixture")
        if known.all():
            return np.empty(0)
        m = self._masked(x, known)
        post = normalize_posteriors(m.log_lik + np.log(self.priors), m.d2)
        return post @ m.cond

    def impute(self, x: np.ndarray, known: np.ndarray | None = None) -> np.ndarray:
        """Return a full copy of ``x`` with unknown entries filled by ``infer``."""
        x, known = self._check(x, known)
        if not len(self):
            raise EmptyModel("imputation on an empty mixture")
        out = x.copy()
        if not known.all():
            out[~known] = self.infer(x, known)
        return out

    # -- learning ------------------------------------------------------------

    def learn(self, x: np.ndarray, known: np.ndarray | None = None) -> bool:
        """Present one (possibly partial) sample. Returns True if a component was created."""
        x, known = self._check(x, known)
        if not len(self):
            self.create(np.where(known, x, 0.0))
            created = True
        else:
            m = self._masked(x, known)
            if np.any(m.d2 < self.threshold(m.known.size)):
                post = normalize_posteriors(m.log_lik + np.log(self.priors), m.d2)
                filled = np.broadcast_to(x, self.means.shape).copy()
                filled[:, m.unknown] = m.cond
                self.update_components(filled, post)
                created = False
            else:
                full = x.copy()
                if m.unknown.size:
                    post = normalize_posteriors(m.log_lik + np.log(self.priors), m.d2)
                    full[m.unknown] = post @ m.cond
                self.create(full)
                created = True
        if self.config.pruning_enabled:
            self.prune()
        return created

    def update_components(self, x: np.ndarray, posteriors: np.ndarray) -> None:
        """Move every component towards ``x`` in proportion to its posterior.

        ``x`` is either one full vector or one row per component (the
        per-component imputation of a partial sample). The precision and the
        covariance determinant follow the recurrence
        ``C <- (1 - w) C + w e e^T - dmu dmu^T`` with ``dmu = w e``, via
        Sherman-Morrison and the matrix determinant lemma.
        """
        post = np.asarray(posteriors, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), self.means.shape)
        cfg = self.config

        self.ages += 1
        self.sps += post
        e = x - self.means
        w = post / self.sps

        step = w[:, None] * e
        if cfg.q_alpha > 0.0 and cfg.q_dims:
            q = list(cfg.q_dims)
            step[:, q] = (post * cfg.q_alpha)[:, None] * e[:, q]
        self.means = self.means + step

        lam_e = np.einsum("kij,kj->ki", self.precisions, e)
        quad = np.einsum("ki,ki->k", e, lam_e)
        coef = w / (1.0 + w * quad)
        outer = lam_e[:, :, None] * lam_e[:, None, :]
        lam = (self.precisions - coef[:, None, None] * outer) / (1.0 - w)[:, None, None]
        self.precisions = symmetrize(lam)
        self.cov_dets = self.cov_dets * (1.0 - w) ** self.dim * (1.0 + w * quad)

        self._guard()
        self._update_priors()

    def _guard(self) -> None:
        bad = (
            ~np.isfinite(self.cov_dets)
            | (self.cov_dets <= DET_FLOOR)
            | ~np.all(np.isfinite(self.precisions), axis=(1, 2))
        )
        if bad.any():
            idx = np.flatnonzero(bad)
            log.warning("resetting precision of components %s", idx.tolist())
            self.precisions[idx] = np.diag(1.0 / self.config.sigma_ini)
            self.cov_dets[idx] = float(np.prod(self.config.sigma_ini))
            self.resets += idx.size

    def _update_priors(self) -> None:
        self.priors = self.sps / self.sps.sum() if len(self) else np.empty(0)

    def create(self, x: np.ndarray) -> None:
        """Append a component centred on the full vector ``x``."""
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        sigma = self.config.sigma_ini
        self.means = np.vstack([self.means, x])
        self.precisions = np.concatenate([self.precisions, np.diag(1.0 / sigma)[None]], axis=0)
        self.cov_dets = np.append(self.cov_dets, float(np.prod(sigma)))
        self.sps = np.append(self.sps, 1.0)
        self.ages = np.append(self.ages, 1)
        self._update_priors()

    def prune(self) -> int:
        """Remove components with ``age > v_min`` and ``sp < sp_min``; returns count removed."""
        cfg = self.config
        if not cfg.pruning_enabled or not len(self):
            return 0
        keep = ~((self.ages > cfg.v_min) & (self.sps < cfg.sp_min))
        removed = int((~keep).sum())
        if removed:
            for name in ("means", "precisions", "cov_dets", "sps", "ages"):
                setattr(self, name, getattr(self, name)[keep])
            self._update_priors()
        return removed

    # -- persistence -----------------------------------------------------------

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        """Write the mixture as versioned text, one record per component."""
        iu = np.triu_indices(self.dim)
        lines = [
            f"qigmn-mixture {FORMAT_VERSION}",
            f"dim {self.dim}",
            "config " + json.dumps(self.config.to_dict(), sort_keys=True),
            "meta " + json.dumps(meta or {}, sort_keys=True),
            f"components {len(self)}",
        ]
        for j in range(len(self)):
            fields = {
                "mean": " ".join(repr(float(v)) for v in self.means[j]),
                "precision": " ".join(repr(float(v)) for v in self.precisions[j][iu]),
                "cov_det": repr(float(self.cov_dets[j])),
                "sp": repr(float(self.sps[j])),
                "age": str(int(self.ages[j])),
                "prior": repr(float(self.priors[j])),
            }
            lines.append("component " + " | ".join(f"{k}={v}" for k, v in fields.items()))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> tuple["Mixture", dict]:
        """Read a file written by :meth:`save`; returns ``(mixture, meta)``."""
        lines = Path(path).read_text().splitlines()
        head = dict(line.split(" ", 1) for line in lines[:5])
        if head.get("qigmn-mixture") != str(FORMAT_VERSION):
            raise ValueError(f"{path}: unsupported or missing format header")
        dim = int(head["dim"])
        mix = cls(dim, MixtureConfig(**json.loads(head["config"])))
        meta = json.loads(head["meta"])
        n = int(head["components"])
        records = [line for line in lines[5:] if line.startswith("component ")]
        if len(records) != n:
            raise ValueError(f"{path}: expected {n} components, found {len(records)}")
        iu = np.triu_indices(dim)
        means, precs, dets, sps, ages = [], [], [], [], []
        for rec in records:
            fields = dict(part.strip().split("=", 1) for part in rec[len("component "):].split("|"))
            means.append([float(v) for v in fields["mean"].split()])
            upper = np.zeros((dim, dim))
            upper[iu] = [float(v) for v in fields["precision"].split()]
            precs.append(upper + np.triu(upper, 1).T)
            dets.append(float(fields["cov_det"]))
            sps.append(float(fields["sp"]))
            ages.append(int(fields["age"]))
        if n:
            mix.means = np.asarray(means)
            mix.precisions = np.asarray(precs)
            mix.cov_dets = np.asarray(dets)
            mix.sps = np.asarray(sps)
            mix.ages = np.asarray(ages, dtype=np.int64)
            mix._update_priors()
        return mix, meta


def masked(values: Sequence[float | None]) -> tuple[np.ndarray, np.ndarray]:
    """Turn a sequence with ``None`` (or NaN) holes into ``(values, known)``."""
    arr = np.array([np.nan if v is None else float(v) for v in values])
    known = ~np.isnan(arr)
    return np.where(known, arr, 0.0), known


__all__ = [
    "EmptyModel",
    "NumericalFailure",
    "GaussianComponent",
    "MixtureConfig",
    "Mixture",
    "mahalanobis_sq",
    "likelihood",
    "normalize_posteriors",
    "masked",
]
