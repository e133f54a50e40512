"""Catalog of embedded matrix manifolds and their metric operations.

Points are plain float64 matrices living in an ambient Euclidean
space:

    kind           ambient shape    constraint
    circle         (2, 1)           unit column
    sphere:n       (n+1, 1)         unit column (S^n)
    stiefel:p:n    (n, p)           X^T X = I_p
    so:n           (n, n)           X^T X = I_n and det X = +1
    o:n            (n, n)           X^T X = I_n
    torus:k        (2k, 1)          every consecutive 2-row block unit

The Riemannian metric is everywhere the one inherited from the
Frobenius inner product of the ambient space (no per-kind scaling).
Under that convention the distance formulas and injectivity radii are

    kind        geodesic distance                        inj. radius
    circle      |wrapped angle difference|               pi
    sphere:n    arccos(x^T y)                            pi
    so:n, o:n   ||logm(X^T Y)||_F = sqrt(2 sum th_i^2)   pi*sqrt(2)
    torus:k     sqrt(sum_j wrap(dth_j)^2)                pi
    stiefel     exp/log available only for p in {1, n}   as sphere/o:n

with th_i the rotation-plane angles of X^T Y.  Circle, Sphere(n) and
Stiefel(1, n+1) are the same objects here and share one code path, so
sphere:2 and stiefel:1:3 give bit-identical numerics.

exp/log on Stiefel(p, n) with 1 < p < n have no closed form in this
metric and raise CapabilityError; the projection, retraction and
chordal operations work for every kind.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    CapabilityError,
    ConfigError,
    FeasibilityError,
    InjectivityError,
    KindMismatchError,
    ShapeError,
)

FEASIBILITY_TOL = 1e-9
# Angles this close to pi are numerically indistinguishable from the
# cut locus (arccos resolves ~1e-8 near -1), so log_map refuses them.
_PI_EDGE = 1e-8

_FAMILIES = ("circle", "sphere", "stiefel", "so", "o", "torus")


@dataclass(frozen=True)
class ManifoldKind:
    """Variant tag for the manifold catalog.

    Use the named constructors (``ManifoldKind.sphere(2)``, ...) or
    ``ManifoldKind.parse("stiefel:2:4")`` rather than the raw
    constructor.
    """

    family: str
    params: tuple[int, ...] = ()

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigError(f"unknown manifold family {self.family!r}")
        object.__setattr__(self, "params", tuple(int(q) for q in self.params))

    # -- constructors -------------------------------------------------

    @classmethod
    def circle(cls) -> "ManifoldKind":
        return cls("circle")

    @classmethod
    def sphere(cls, n: int) -> "ManifoldKind":
        if n < 1:
            raise ConfigError("sphere dimension must be >= 1")
        return cls("sphere", (n,))

    @classmethod
    def stiefel(cls, p: int, n: int) -> "ManifoldKind":
        if not 1 <= p <= n:
            raise ConfigError(f"stiefel requires 1 <= p <= n, got p={p}, n={n}")
        return cls("stiefel", (p, n))

    @classmethod
    def special_orthogonal(cls, n: int) -> "ManifoldKind":
        if n < 2:
            raise ConfigError("so:n requires n >= 2")
        return cls("so", (n,))

    @classmethod
    def orthogonal(cls, n: int) -> "ManifoldKind":
        if n < 2:
            raise ConfigError("o:n requires n >= 2")
        return cls("o", (n,))

    @classmethod
    def flat_torus(cls, k: int) -> "ManifoldKind":
        if k < 1:
            raise ConfigError("torus:k requires k >= 1")
        return cls("torus", (k,))

    @classmethod
    def parse(cls, text: str) -> "ManifoldKind":
        """Parse a manifold spec string, e.g. ``"stiefel:2:4"``.

        Grammar: ``circle | sphere:n | stiefel:p:n | so:n | o:n | torus:k``.
        """
        parts = text.strip().lower().split(":")
        name, args = parts[0], parts[1:]
        try:
            nums = [int(a) for a in args]
        except ValueError:
            raise ConfigError(f"non-integer parameter in manifold spec {text!r}") from None
        table = {
            "circle": (0, cls.circle),
            "sphere": (1, cls.sphere),
            "stiefel": (2, cls.stiefel),
            "so": (1, cls.special_orthogonal),
            "o": (1, cls.orthogonal),
            "torus": (1, cls.flat_torus),
        }
        if name not in table:
            raise ConfigError(f"unknown manifold {text!r}")
        arity, ctor = table[name]
        if len(nums) != arity:
            raise ConfigError(f"manifold {name!r} takes {arity} parameter(s), got {len(nums)}")
        return ctor(*nums)

    # -- derived properties -------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        """Ambient matrix shape (rows, cols) of a point."""
        f = self.family
        if f == "circle":
            return (2, 1)
        if f == "sphere":
            return (self.params[0] + 1, 1)
        if f == "stiefel":
            p, n = self.params
            return (n, p)
        if f in ("so", "o"):
            n = self.params[0]
            return (n, n)
        return (2 * self.params[0], 1)  # torus

    @property
    def dim(self) -> int:
        """Dimension of the manifold itself."""
        f = self.family
        if f == "circle":
            return 1
        if f == "sphere":
            return self.params[0]
        if f == "stiefel":
            p, n = self.params
            return n * p - p * (p + 1) // 2
        if f in ("so", "o"):
            n = self.params[0]
            return n * (n - 1) // 2
        return self.params[0]  # torus

    @property
    def frobenius_norm(self) -> float:
        """Common Frobenius norm of every point of this kind."""
        if self.family == "torus":
            return float(np.sqrt(self.params[0]))
        return float(np.sqrt(self.shape[1]))

    @property
    def spec_string(self) -> str:
        if self.params:
            return self.family + ":" + ":".join(str(q) for q in self.params)
        return self.family

    def __str__(self) -> str:
        return self.spec_string


def _shape_check(kind: ManifoldKind, m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != kind.shape:
        raise ShapeError(f"{what} for {kind} must have shape {kind.shape}, got {m.shape}")
    return m


def feasibility_residual(kind: ManifoldKind, m: np.ndarray) -> float:
    """Frobenius norm of the constraint violation of ``m``.

    ||X^T X - I||_F for the orthonormal-column kinds,
    sqrt(sum_j (|x_j|^2 - 1)^2) over the 2-blocks for the flat torus.
    The determinant-sign condition of so:n is checked separately in
    ManifoldPoint, not folded into this residual.
    """
    m = _shape_check(kind, m, "point")
    if kind.family == "torus":
        blocks = m.reshape(-1, 2)
        return float(np.linalg.norm(np.sum(blocks * blocks, axis=1) - 1.0))
    g = m.T @ m
    return float(np.linalg.norm(g - np.eye(kind.shape[1])))


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """A manifold kind together with a concrete matrix value.

    Validates shape and feasibility (tolerance 1e-9) on construction;
    the stored matrix is an immutable copy.
    """

    kind: ManifoldKind
    value: np.ndarray

    def __post_init__(self):
        v = _shape_check(self.kind, self.value, "point").copy()
        res = feasibility_residual(self.kind, v)
        if not np.isfinite(res) or res > FEASIBILITY_TOL:
            raise FeasibilityError(
                f"matrix violates {self.kind} constraint: residual {res:.3e} > {FEASIBILITY_TOL}"
            )
        if self.kind.family == "so" and np.linalg.det(v) < 0.0:
            raise FeasibilityError("so:n point must have determinant +1")
        v.setflags(write=False)
        object.__setattr__(self, "value", v)

    def __repr__(self) -> str:
        return f"ManifoldPoint({self.kind}, {np.array2string(self.value, precision=4)})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A matrix in the tangent space at ``point`` (checked at 1e-8)."""

    point: ManifoldPoint
    value: np.ndarray

    def __post_init__(self):
        v = _shape_check(self.point.kind, self.value, "tangent").copy()
        w = _project_arr(self.point.kind, self.point.value, v)
        drift = np.linalg.norm(v - w)
        if drift > 1e-8 * max(1.0, np.linalg.norm(v)):
            raise FeasibilityError(
                f"matrix is not tangent at the base point (off by {drift:.3e})"
            )
        v.setflags(write=False)
        object.__setattr__(self, "value", v)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.value))


# ----------------------------------------------------------------------
# array-level core (used by the flow/integrator modules on hot paths)
# ----------------------------------------------------------------------


def _project_arr(kind: ManifoldKind, x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Orthogonal projection of ambient ``a`` onto the tangent at ``x``.

    Orthonormal-column kinds use the universal formula
    X skew(X^T A) + (I - X X^T) A; the torus projects block-wise.
    """
    if kind.family == "torus":
        blocks = x.reshape(-1, 2)
        ab = a.reshape(-1, 2)
        dots = np.sum(blocks * ab, axis=1, keepdims=True)
        return (ab - dots * blocks).reshape(x.shape)
    b = x.T @ a
    return x @ ((b - b.T) / 2.0) + (a - x @ (x.T @ a))


def _wrap_angle(d):
    """Wrap to (-pi, pi], mapping the antipode to +pi."""
    return np.pi - np.mod(np.pi - d, 2.0 * np.pi)


def _torus_angles(x: np.ndarray) -> np.ndarray:
    blocks = x.reshape(-1, 2)
    return np.arctan2(blocks[:, 1], blocks[:, 0])


def _torus_point(angles: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(angles), np.sin(angles)], axis=1).reshape(-1, 1)


def _torus_log_angles(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-factor wrapped angles from x to y, via atan2 of (cross, dot)."""
    bx = x.reshape(-1, 2)
    by = y.reshape(-1, 2)
    dot = np.sum(bx * by, axis=1)
    cross = bx[:, 0] * by[:, 1] - bx[:, 1] * by[:, 0]
    return np.arctan2(cross, dot)


def _group_log_angles(m: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complex Schur data of an (near-)orthogonal matrix.

    Returns (angles of the unitary eigenvalues, diagonal phases, Q).
    The Schur vectors are always unitary, which keeps the principal-log
    reconstruction stable even with repeated rotation angles (plain
    eigenvectors of a normal matrix need not be orthogonal there).
    """
    t, q = scipy.linalg.schur(m, output="complex")
    d = np.diagonal(t)
    ang = np.angle(d)
    return np.abs(ang), ang, q


def _group_principal_log(m: np.ndarray) -> np.ndarray:
    """Principal matrix log of an orthogonal matrix, skew-symmetrized.

    Raises InjectivityError when a rotation-plane angle reaches pi
    (the log is no longer single-valued there).
    """
    absang, ang, q = _group_log_angles(m)
    if absang.size and absang.max() >= np.pi - _PI_EDGE:
        raise InjectivityError(
            "matrix log undefined: rotation angle at or beyond pi"
        )
    mlog = (q * (1j * ang)) @ q.conj().T
    mlog = mlog.real
    return (mlog - mlog.T) / 2.0


def _exp_arr(kind: ManifoldKind, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    fam = kind.family
    if fam == "torus":
        bx = x.reshape(-1, 2)
        bv = v.reshape(-1, 2)
        # tangent at a unit 2-vector is s * J x; recover the signed speed
        s = bx[:, 0] * bv[:, 1] - bx[:, 1] * bv[:, 0]
        c, sn = np.cos(s), np.sin(s)
        out = np.empty_like(bx)
        out[:, 0] = c * bx[:, 0] - sn * bx[:, 1]
        out[:, 1] = sn * bx[:, 0] + c * bx[:, 1]
        return out.reshape(x.shape)
    rows, cols = kind.shape
    if cols == 1:
        theta = np.linalg.norm(v)
        if theta == 0.0:
            return x.copy()
        return x * np.cos(theta) + (v / theta) * np.sin(theta)
    if cols == rows:
        om = x.T @ v
        om = (om - om.T) / 2.0
        return x @ scipy.linalg.expm(om)
    raise CapabilityError(f"exp_map unsupported on {kind} (needs p in {{1, n}})")


def _log_arr(kind: ManifoldKind, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if np.array_equal(x, y):
        return np.zeros_like(x)
    fam = kind.family
    if fam == "torus":
        delta = _torus_log_angles(x, y)
        if np.max(np.abs(delta)) >= np.pi - _PI_EDGE:
            raise InjectivityError("log_map undefined: a torus factor is antipodal")
        bx = x.reshape(-1, 2)
        out = np.empty_like(bx)
        out[:, 0] = -delta * bx[:, 1]
        out[:, 1] = delta * bx[:, 0]
        return out.reshape(x.shape)
    rows, cols = kind.shape
    if cols == 1:
        c = float(x[:, 0] @ y[:, 0])
        w = y - c * x
        nw = np.linalg.norm(w)
        # atan2 keeps the angle accurate near theta = 0, where
        # arccos(x . y) loses half the significant digits
        theta = float(np.arctan2(nw, c))
        if theta >= np.pi - _PI_EDGE:
            raise InjectivityError("log_map undefined: antipodal points")
        if nw == 0.0:
            return np.zeros_like(x)
        return w * (theta / nw)
    if cols == rows:
        rel = x.T @ y
        if np.linalg.det(rel) < 0.0:
            raise InjectivityError(
                "log_map undefined: points lie in opposite O(n) components"
            )
        return x @ _group_principal_log(rel)
    raise CapabilityError(f"log_map unsupported on {kind} (needs p in {{1, n}})")


def _geodesic_arr(kind: ManifoldKind, x: np.ndarray, y: np.ndarray) -> float:
    if np.array_equal(x, y):
        return 0.0
    fam = kind.family
    if fam == "torus":
        return float(np.linalg.norm(_torus_log_angles(x, y)))
    rows, cols = kind.shape
    if cols == 1:
        c = float(x[:, 0] @ y[:, 0])
        s = float(np.linalg.norm(y - c * x))
        return float(np.arctan2(s, c))
    if cols == rows:
        rel = x.T @ y
        if np.linalg.det(rel) < 0.0:
            raise InjectivityError(
                "no geodesic between opposite O(n) components"
            )
        absang, _, _ = _group_log_angles(rel)
        return float(np.linalg.norm(absang))
    raise CapabilityError(f"geodesic distance unsupported on {kind} (needs p in {{1, n}})")


def _polar_factor(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m, full_matrices=False)
    return u @ vt


def _retract_arr(kind: ManifoldKind, m: np.ndarray) -> np.ndarray:
    """Polar-factor retraction of an ambient matrix onto the manifold.

    Near-orthonormal inputs are refined with three Newton-Schulz
    sweeps (quadratic convergence; machine precision from any
    post-integration drift); anything farther away falls back to the
    SVD polar factor.  The torus renormalizes each 2-block.
    """
    if kind.family == "torus":
        blocks = m.reshape(-1, 2)
        norms = np.linalg.norm(blocks, axis=1, keepdims=True)
        if np.any(norms < 1e-12) or not np.all(np.isfinite(norms)):
            raise FeasibilityError("cannot retract: degenerate torus factor")
        return (blocks / norms).reshape(m.shape)
    p = kind.shape[1]
    eye = np.eye(p)
    g = m.T @ m
    if not np.all(np.isfinite(g)):
        raise FeasibilityError("cannot retract: non-finite entries")
    if np.linalg.norm(g - eye) > 0.3:
        return _polar_factor(m)
    y = m
    for _ in range(3):
        y = y @ (1.5 * eye - 0.5 * (y.T @ y))
    return y


def _exp_retract_arr(kind: ManifoldKind, x: np.ndarray, dm: np.ndarray) -> np.ndarray:
    """Exp-based retraction: exponential of the tangential part of dm."""
    return _exp_arr(kind, x, _project_arr(kind, x, dm))


# ----------------------------------------------------------------------
# public, point-level API
# ----------------------------------------------------------------------


def _same_kind(a: ManifoldPoint, b: ManifoldPoint, op: str) -> None:
    if a.kind != b.kind:
        raise KindMismatchError(f"{op} needs matching kinds, got {a.kind} and {b.kind}")


def project(point: ManifoldPoint, ambient: np.ndarray) -> TangentVector:
    """Project an ambient matrix onto the tangent space at ``point``."""
    a = _shape_check(point.kind, ambient, "ambient matrix")
    return TangentVector(point, _project_arr(point.kind, point.value, a))


def exp_map(point: ManifoldPoint, tangent: TangentVector) -> ManifoldPoint:
    """Riemannian exponential; follows the geodesic with velocity ``tangent``."""
    if tangent.point.kind != point.kind:
        raise KindMismatchError("tangent vector belongs to a different kind")
    return ManifoldPoint(point.kind, _exp_arr(point.kind, point.value, tangent.value))


def log_map(base: ManifoldPoint, target: ManifoldPoint) -> TangentVector:
    """Inverse of exp_map; the initial velocity of the minimal geodesic.

    Raises InjectivityError at or beyond the domain boundary
    (antipodal points, a rotation-plane angle of pi, opposite O(n)
    components) and CapabilityError on Stiefel kinds with 1 < p < n.
    """
    _same_kind(base, target, "log_map")
    return TangentVector(base, _log_arr(base.kind, base.value, target.value))


def geodesic_distance(a: ManifoldPoint, b: ManifoldPoint) -> float:
    """Intrinsic distance in the embedded (Frobenius) metric."""
    _same_kind(a, b, "geodesic_distance")
    return _geodesic_arr(a.kind, a.value, b.value)


def chordal_distance(a: ManifoldPoint, b: ManifoldPoint) -> float:
    """Ambient Frobenius distance ||A - B||_F."""
    _same_kind(a, b, "chordal_distance")
    return float(np.linalg.norm(a.value - b.value))


def injectivity_radius(kind: ManifoldKind | ManifoldPoint) -> float:
    """Largest radius on which exp is a diffeomorphism (constant per kind)."""
    if isinstance(kind, ManifoldPoint):
        kind = kind.kind
    fam = kind.family
    if fam in ("circle", "sphere", "torus"):
        return float(np.pi)
    if fam in ("so", "o"):
        return float(np.pi * np.sqrt(2.0))
    p, n = kind.params
    if p == 1:
        return float(np.pi)
    if p == n:
        return float(np.pi * np.sqrt(2.0))
    raise CapabilityError(f"no geodesic calculus on {kind} (needs p in {{1, n}})")


def sample_uniform(kind: ManifoldKind, rng: np.random.Generator) -> ManifoldPoint:
    """Draw a point from the uniform (Haar/round) distribution.

    Orthonormal-column kinds: polar factor of an i.i.d. Gaussian
    matrix (orthogonal invariance of the Gaussian makes the factor
    Haar-distributed).  For so:n a draw with determinant -1 is mapped
    into SO(n) by flipping the sign of the last column; right-
    multiplication by a fixed reflection preserves the Haar measure,
    so the result is uniform on SO(n).  Torus: independent uniform
    angles per factor.
    """
    if kind.family == "torus":
        k = kind.params[0]
        return ManifoldPoint(kind, _torus_point(rng.uniform(0.0, 2.0 * np.pi, size=k)))
    g = rng.standard_normal(kind.shape)
    s = _polar_factor(g)
    if kind.family == "so" and np.linalg.det(s) < 0.0:
        s = s.copy()
        s[:, -1] = -s[:, -1]
    return ManifoldPoint(kind, s)


def random_tangent(
    point: ManifoldPoint, rng: np.random.Generator, norm: float | None = None
) -> TangentVector:
    """Project a Gaussian ambient matrix to the tangent space.

    With ``norm`` given, the result is rescaled to that Frobenius
    norm (redrawing in the measure-zero event of a zero projection).
    """
    for _ in range(16):
        v = _project_arr(point.kind, point.value, rng.standard_normal(point.kind.shape))
        nv = np.linalg.norm(v)
        if norm is None:
            return TangentVector(point, v)
        if nv > 1e-12:
            return TangentVector(point, v * (norm / nv))
    raise FeasibilityError("could not draw a nonzero tangent direction")


def retract(kind: ManifoldKind, matrix: np.ndarray, method: str = "polar") -> np.ndarray:
    """Map an ambient matrix back onto the manifold (array level).

    ``polar`` takes the polar factor (block normalization on the
    torus); ``exp`` interprets ``matrix`` as base + increment is not
    meaningful here, so only ``polar`` is accepted.
    """
    if method != "polar":
        raise ConfigError(f"unknown retraction {method!r}")
    m = _shape_check(kind, matrix, "matrix")
    return _retract_arr(kind, m)


def tangent_basis(point: ManifoldPoint) -> list[np.ndarray]:
    """Orthonormal basis of the tangent space at ``point``.

    Built by projecting the ambient coordinate basis and running
    Gram-Schmidt; returns exactly ``kind.dim`` matrices.
    """
    kind = point.kind
    x = point.value
    basis: list[np.ndarray] = []
    rows, cols = kind.shape
    for idx in range(rows * cols):
        e = np.zeros((rows, cols))
        e.flat[idx] = 1.0
        v = _project_arr(kind, x, e)
        for b in basis:
            v = v - float(np.sum(v * b)) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            basis.append(v / nv)
    if len(basis) != kind.dim:
        raise FeasibilityError(
            f"tangent basis has {len(basis)} directions, expected {kind.dim}"
        )
    return basis
