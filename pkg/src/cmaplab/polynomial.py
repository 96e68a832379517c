"""Low-degree polynomials in 1 or 2 variables, expanded about a base point."""

from dataclasses import dataclass
from itertools import product

import numpy as np


def exponents(dims, degree):
    """Multi-indices of total degree <= degree, ordered by degree then lexicographically."""
    out = [e for e in product(range(degree + 1), repeat=dims) if sum(e) <= degree]
    return sorted(out, key=lambda e: (sum(e), tuple(-k for k in e)))


@dataclass
class Polynomial:
    coeffs: np.ndarray
    exps: list
    center: np.ndarray

    @classmethod
    def from_dict(cls, terms, center=(0.0, 0.0)):
        """Build from {multi-index: coefficient}."""
        exps = sorted(terms, key=lambda e: (sum(e), tuple(-k for k in e)))
        return cls(np.array([terms[e] for e in exps], float), exps, np.asarray(center, float))

    @property
    def dims(self):
        return len(self.exps[0])

    @property
    def degree(self):
        return max(sum(e) for e in self.exps)

    def as_dict(self):
        return {e: float(c) for e, c in zip(self.exps, self.coeffs)}

    def _shifted(self, x):
        x = np.asarray(x, float)
        if self.dims == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return x - self.center.reshape(self.dims)

    def __call__(self, x):
        d = self._shifted(x)
        out = np.zeros(d.shape[:-1])
        for e, c in zip(self.exps, self.coeffs):
            term = np.full(d.shape[:-1], c)
            for k, p in enumerate(e):
                if p:
                    term = term * d[..., k] ** p
            out = out + term
        return out

    def gradient(self, x):
        d = self._shifted(x)
        out = np.zeros(d.shape)
        for e, c in zip(self.exps, self.coeffs):
            for j, pj in enumerate(e):
                if pj == 0:
                    continue
                term = np.full(d.shape[:-1], c * pj)
                for k, p in enumerate(e):
                    q = p - 1 if k == j else p
                    if q:
                        term = term * d[..., k] ** q
                out[..., j] += term
        return out

    def laplacian_constant(self):
        """Laplacian of the quadratic part (exact for degree <= 2)."""
        total = 0.0
        for e, c in zip(self.exps, self.coeffs):
            if sum(e) == 2 and max(e) == 2:
                total += 2 * c
        return total
