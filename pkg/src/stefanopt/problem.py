"""Problem data bundle: the given functions and scalars of one experiment."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConstraintViolationError


@dataclass(frozen=True)
class ProblemData:
    """Given data of the moving-boundary problem.

    a, p, gamma, chi are functions of (x, t) on D = [0, ell] x [0, T];
    phi is the initial temperature on [0, s0]; mu and w are the boundary and
    final-time temperature measurements (functions of t and x respectively).
    """

    a: object
    p: object
    gamma: object
    chi: object
    phi: object
    mu: object
    w: object
    s0: float
    T: float
    ell: float
    delta: float
    R: float
    beta0: float = 1.0
    beta1: float = 1.0
    beta2: float = 1.0

    def __post_init__(self):
        if not (self.delta > 0):
            raise ConstraintViolationError(f"delta must be positive, got {self.delta}")
        if not (self.delta <= self.s0 <= self.ell):
            raise ConstraintViolationError(
                f"need delta <= s0 <= ell, got delta={self.delta}, s0={self.s0}, ell={self.ell}")
        if not (self.T > 0):
            raise ConstraintViolationError(f"final time must be positive, got {self.T}")
        for name in ("beta0", "beta1", "beta2"):
            if getattr(self, name) < 0:
                raise ConstraintViolationError(f"{name} must be nonnegative")

    @property
    def betas(self) -> tuple[float, float, float]:
        return (self.beta0, self.beta1, self.beta2)
