"""Channel containers and the direct + cascaded equivalent channel."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = ["IrsPhases", "ChannelSet", "assemble_equivalent_channel",
           "cascaded_terms", "frozen"]


def frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class IrsPhases:
    """Diagonal of the IRS reflection matrix."""

    nu: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nu", frozen(np.ravel(self.nu)))

    def __len__(self):
        return self.nu.size

    @property
    def is_unit_modulus(self) -> bool:
        return bool(np.all(np.abs(np.abs(self.nu) - 1.0) <= 1e-12))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "IrsPhases":
        return cls(np.exp(2j * np.pi * rng.uniform(0.0, 1.0, n)))


@dataclass(frozen=True)
class ChannelSet:
    """True frequency-domain channels of one realization.

    Layout is subcarrier-major:

    * ``H_B``  -- (L, K, Nr, Nt) direct BS-user channels
    * ``H_BI`` -- (L, N, Nt) BS-IRS channel
    * ``H_I``  -- (L, K, Nr, N) IRS-user channels
    """

    H_B: np.ndarray = field(repr=False)
    H_BI: np.ndarray = field(repr=False)
    H_I: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("H_B", "H_BI", "H_I"):
            arr = frozen(getattr(self, name))
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)
        L, K, Nr, Nt = self.H_B.shape
        N = self.H_BI.shape[1]
        if self.H_BI.shape != (L, N, Nt) or self.H_I.shape != (L, K, Nr, N):
            raise ConfigError("inconsistent channel dimensions: "
                              f"H_B {self.H_B.shape}, H_BI {self.H_BI.shape}, "
                              f"H_I {self.H_I.shape}")

    @property
    def dims(self):
        """(L, K, Nr, Nt, N)."""
        L, K, Nr, Nt = self.H_B.shape
        return L, K, Nr, Nt, self.H_BI.shape[1]

    def cascaded(self) -> np.ndarray:
        """Per-element rank-one products h_I,k,n h_BI,n^T, (L, K, N, Nr, Nt)."""
        return cascaded_terms(self.H_I, self.H_BI)

    def equivalent(self, nu) -> np.ndarray:
        """True H_B + H_I diag(nu) H_BI for every (l, k)."""
        nu = np.asarray(getattr(nu, "nu", nu))
        return self.H_B + np.einsum("lkrn,n,lnt->lkrt", self.H_I, nu,
                                    self.H_BI)

    def without_irs(self) -> "ChannelSet":
        L, K, Nr, Nt, _ = self.dims
        return ChannelSet(self.H_B, np.zeros((L, 0, Nt)),
                          np.zeros((L, K, Nr, 0)))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.H_B, self.H_BI, self.H_I):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def cascaded_terms(H_I: np.ndarray, H_BI: np.ndarray) -> np.ndarray:
    return np.einsum("lkrn,lnt->lknrt", H_I, H_BI)


def assemble_equivalent_channel(direct, cascaded, nu) -> np.ndarray:
    """Return ``direct + sum_n nu[n] * cascaded[n]``.

    ``cascaded`` holds the N per-element matrices along its first axis
    (a list of N matrices, or an array of shape (N, Nr, Nt)).
    """
    direct = np.asarray(direct)
    nu = np.ravel(getattr(nu, "nu", nu))
    terms = np.asarray(cascaded, dtype=complex)
    if terms.size == 0 and nu.size == 0:
        return direct.astype(complex)
    if terms.ndim != 3 or terms.shape[0] != nu.size:
        raise ConfigError(f"expected {nu.size} cascaded terms, "
                          f"got array of shape {terms.shape}")
    if terms.shape[1:] != direct.shape:
        raise ConfigError(f"cascaded term shape {terms.shape[1:]} does not "
                          f"match direct channel {direct.shape}")
    return direct + np.tensordot(nu, terms, axes=(0, 0))
