"""Single-chart differential geometry for control-affine problems.

Vector fields and scalar functions are wrapped in small evaluator objects that
carry optional analytic derivatives; missing derivatives fall back to central
finite differences.  Hamiltonians are restricted to the affine family

    H(p, x) = <p, h(x)> + c * psi(x)

which is closed under everything the verifier needs (lifts, Poisson brackets,
Hamiltonian vector fields and their linearizations).  Points in the cotangent
bundle are stored as ``z = (x, p)``: state first, costate second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, UnsupportedHamiltonianForm

EPS = np.finfo(float).eps
_FD_FIRST = EPS ** (1.0 / 3.0)


def fd_steps(x: np.ndarray, rel: float = _FD_FIRST) -> np.ndarray:
    """Per-coordinate central-difference steps ``rel * max(1, |x_i|)``."""
    return rel * np.maximum(1.0, np.abs(x))


def _as_point(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise EvaluationError(f"expected a 1-d point, got shape {x.shape}")
    return x


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"{what} returned non-finite values: {value}")
    return value


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                rel: float = _FD_FIRST) -> np.ndarray:
    """Central-difference Jacobian; column k is d fun / d x_k."""
    x = _as_point(x)
    h = fd_steps(x, rel)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h[k]
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h[k]))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class VectorField:
    """A vector field on the chart, with optional analytic derivatives.

    ``second_derivative(x)[i, j, k]`` is d^2 f_i / dx_j dx_k.
    """

    value: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    second_derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        x = _as_point(x)
        return _check_finite(np.asarray(self.value(x), dtype=float), self.name or "vector field")

    def jac(self, x) -> np.ndarray:
        x = _as_point(x)
        if self.jacobian is not None:
            return _check_finite(np.asarray(self.jacobian(x), dtype=float), "jacobian")
        return fd_jacobian(self, x)

    def hess(self, x) -> np.ndarray:
        x = _as_point(x)
        if self.second_derivative is not None:
            return np.asarray(self.second_derivative(x), dtype=float)
        # differentiate the Jacobian; symmetrize over the last two axes
        d = fd_jacobian(self.jac, x)
        return 0.5 * (d + np.swapaxes(d, 1, 2))

    def consistency_error(self, x, rel_tol: float = 1e-5) -> float:
        """Mixed-tolerance gap between ``jac`` and a central difference of ``value``.

        Returns max |J - J_fd| / (rel_tol * (1 + |J_fd|)); values below 1 pass.
        """
        x = _as_point(x)
        fd = fd_jacobian(self, x)
        return float(np.max(np.abs(self.jac(x) - fd) / (rel_tol * (1.0 + np.abs(fd)))))


@dataclass(frozen=True)
class ScalarField:
    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def __call__(self, x) -> float:
        x = _as_point(x)
        v = float(self.value(x))
        if not np.isfinite(v):
            raise EvaluationError(f"{self.name or 'scalar field'} is not finite at {x}")
        return v

    def grad(self, x) -> np.ndarray:
        x = _as_point(x)
        if self.gradient is not None:
            return _check_finite(np.asarray(self.gradient(x), dtype=float), "gradient")
        return fd_jacobian(lambda y: np.atleast_1d(self(y)), x)[0]

    def hess(self, x) -> np.ndarray:
        x = _as_point(x)
        if self.hessian is not None:
            return np.asarray(self.hessian(x), dtype=float)
        d = fd_jacobian(self.grad, x)
        return 0.5 * (d + d.T)

    def consistency_error(self, x, rel_tol: float = 1e-5) -> float:
        x = _as_point(x)
        fd = fd_jacobian(lambda y: np.atleast_1d(self(y)), x)[0]
        return float(np.max(np.abs(self.grad(x) - fd) / (rel_tol * (1.0 + np.abs(fd)))))


def combine(f0: VectorField, f1: VectorField, u: float, name: str = "") -> VectorField:
    """The field f0 + u f1, keeping analytic derivatives when both sides have them."""
    jac = hess = None
    if f0.jacobian is not None and f1.jacobian is not None:
        def jac(x):
            return np.asarray(f0.jacobian(x)) + u * np.asarray(f1.jacobian(x))
    if f0.second_derivative is not None and f1.second_derivative is not None:
        def hess(x):
            return np.asarray(f0.second_derivative(x)) + u * np.asarray(f1.second_derivative(x))
    return VectorField(lambda x: np.asarray(f0.value(x)) + u * np.asarray(f1.value(x)),
                       jac, hess, name=name or f"f0{u:+g}*f1")


def constant_field(c, name: str = "") -> VectorField:
    c = np.asarray(c, dtype=float)
    n = c.size
    return VectorField(lambda x: c.copy(), lambda x: np.zeros((n, n)),
                       lambda x: np.zeros((n, n, n)), name=name)


def linear_field(A, b=None, name: str = "") -> VectorField:
    """x -> A x + b."""
    A = np.asarray(A, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    n = A.shape[0]
    return VectorField(lambda x: A @ x + b, lambda x: A.copy(),
                       lambda x: np.zeros((n, n, n)), name=name)


@dataclass(frozen=True)
class ProblemDefinition:
    """minimize int |u psi(x)| dt subject to x' = f0(x) + u f1(x), |u| <= 1."""

    n: int
    f0: VectorField
    f1: VectorField
    psi: ScalarField
    name: str = "problem"
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("problem dimension must be >= 1")

    def arc_field(self, u: float) -> VectorField:
        return combine(self.f0, self.f1, u, name=f"f0{u:+g}*f1")


# -- Lie calculus -------------------------------------------------------------

def lie_derivative(f: VectorField, phi: ScalarField, x) -> float:
    """L_f phi(x) = <d phi(x), f(x)>."""
    x = _as_point(x)
    return float(phi.grad(x) @ f(x))


def lie_bracket(f: VectorField, g: VectorField, x) -> np.ndarray:
    """[f, g](x) = Dg(x) f(x) - Df(x) g(x)."""
    x = _as_point(x)
    return g.jac(x) @ f(x) - f.jac(x) @ g(x)


def hamiltonian_lift(f: VectorField, ell, x) -> float:
    """F(ell) = <ell, f(x)>."""
    return float(np.asarray(ell, dtype=float) @ f(x))


@dataclass(frozen=True)
class AffineHamiltonian:
    """H(p, x) = <p, h(x)> + c psi(x)."""

    h: VectorField
    c: float
    psi: ScalarField
    tag: str = ""

    def __call__(self, x, p) -> float:
        x = _as_point(x)
        return float(np.asarray(p) @ self.h(x) + self.c * self.psi(x))

    def value_z(self, z) -> float:
        n = len(z) // 2
        return self(z[:n], z[n:])

    def dx(self, x, p) -> np.ndarray:
        """Partial derivative in the state: p Dh(x) + c dpsi(x)."""
        return np.asarray(p) @ self.h.jac(x) + self.c * self.psi.grad(x)

    def dz(self, z) -> np.ndarray:
        """Full differential (d/dx, d/dp) at z = (x, p)."""
        n = len(z) // 2
        x, p = z[:n], z[n:]
        return np.concatenate([self.dx(x, p), self.h(x)])

    def vector_field(self, z) -> np.ndarray:
        """Hamiltonian vector field: x' = dH/dp, p' = -dH/dx."""
        n = len(z) // 2
        x, p = z[:n], z[n:]
        return np.concatenate([self.h(x), -self.dx(x, p)])

    def rhs(self, t, z):
        return self.vector_field(z)

    def vector_field_jacobian(self, z) -> np.ndarray:
        n = len(z) // 2
        x, p = z[:n], z[n:]
        Dh = self.h.jac(x)
        second = np.einsum("i,ijk->jk", p, self.h.hess(x)) + self.c * self.psi.hess(x)
        return np.block([[Dh, np.zeros((n, n))], [-second, -Dh.T]])


def poisson_bracket(F, G, ell, x) -> float:
    """{F, G}(ell, x) for affine Hamiltonians.

    {F, G} = <ell, [h_F, h_G](x)> + c_G L_{h_F} psi(x) - c_F L_{h_G} psi(x),
    which is the derivative of G along the Hamiltonian flow of F.
    """
    if not (isinstance(F, AffineHamiltonian) and isinstance(G, AffineHamiltonian)):
        raise UnsupportedHamiltonianForm("Poisson brackets are only defined for AffineHamiltonian")
    x = _as_point(x)
    ell = np.asarray(ell, dtype=float)
    value = ell @ lie_bracket(F.h, G.h, x)
    if G.c:
        value += G.c * lie_derivative(F.h, G.psi, x)
    if F.c:
        value -= F.c * lie_derivative(G.h, F.psi, x)
    return float(value)


def symplectic_pairing(v, G: AffineHamiltonian, z) -> float:
    """sigma(v, G_vec(z)) = dG(z) v."""
    return float(G.dz(np.asarray(z, dtype=float)) @ np.asarray(v, dtype=float))


# -- problem registry ---------------------------------------------------------

_REGISTRY: dict[str, Callable] = {}


def register_problem(name: str, factory: Callable) -> None:
    """Register ``factory(**parameters) -> ProblemDefinition`` under ``name``."""
    _REGISTRY[name] = factory


def get_problem_factory(name: str) -> Callable:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered_problems() -> list[str]:
    return sorted(_REGISTRY)


_ORACLES: dict[str, Callable] = {}


def register_schedule_oracle(name: str, oracle: Callable) -> None:
    """Register ``oracle(parameters: dict, T: float) -> ReferenceSchedule`` for problem ``name``."""
    _ORACLES[name] = oracle


def get_schedule_oracle(name: str) -> Callable:
    try:
        return _ORACLES[name]
    except KeyError:
        raise KeyError(f"problem {name!r} has no closed-form schedule") from None
