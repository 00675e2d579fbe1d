"""Catalog of the two potentials and their prox calculus.

``phi`` is convex, lsc and proper (possibly nonsmooth, possibly taking the
value +inf); it enters the flow only through its proximal mapping.  ``psi``
is convex with a globally Lipschitz gradient; it enters explicitly.

Every catalog entry has a closed-form prox (for ``phi``) or gradient (for
``psi``) so that the constants used by the certificates (``known_infimum``,
``lipschitz_grad``) are computed rather than trusted.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, InconsistentBoundError

__all__ = [
    "PotentialPhi", "ZeroPhi", "QuadraticPhi", "L1Phi", "BoxPhi", "ElasticNetPhi",
    "PotentialPsi", "ZeroPsi", "QuadraticForm", "LeastSquares", "LogisticSum",
    "PotentialPair", "prox_phi", "yosida_grad_phi", "inclusion_residual",
    "grad_psi", "default_residual_tol", "parse_phi", "parse_psi",
    "read_dense_matrix", "PHI_CATALOG", "PSI_CATALOG",
]


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _broadcast(value, dim, name):
    a = np.asarray(value, dtype=float)
    if a.ndim == 0:
        return _frozen(np.full(dim, float(a)))
    a = a.reshape(-1)
    if a.shape != (dim,):
        raise ArgumentError(f"{name} has length {a.size}, expected {dim}")
    return _frozen(a)


def _point(x, dim, name="point"):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape != (dim,):
        raise ArgumentError(f"{name} has shape {x.shape}, expected ({dim},)")
    return x


def _check_mu(mu):
    if not np.isfinite(mu) or mu <= 0:
        raise ArgumentError(f"prox index mu must be positive, got {mu!r}")


# -- phi ---------------------------------------------------------------------

class PotentialPhi:
    """Base class for the nonsmooth potential.

    Subclasses implement ``value`` and ``_prox``; argument checking is done
    by the module-level :func:`prox_phi`.
    """

    kind = "abstract"
    known_infimum = 0.0

    def __init__(self, dim):
        if int(dim) != dim or dim < 1:
            raise ArgumentError(f"dimension must be a positive integer, got {dim!r}")
        self.dim = int(dim)

    def value(self, x):
        raise NotImplementedError

    def _prox(self, mu, y):
        raise NotImplementedError

    @property
    def descriptor(self):
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor!r}, dim={self.dim})"


class ZeroPhi(PotentialPhi):
    kind = "zero"

    def value(self, x):
        return 0.0

    def _prox(self, mu, y):
        return y.copy()


class QuadraticPhi(PotentialPhi):
    """phi(x) = alpha/2 ||x||^2 with alpha >= 0."""

    kind = "quadratic"

    def __init__(self, dim, alpha=1.0):
        super().__init__(dim)
        if alpha < 0:
            raise ArgumentError("quadratic: alpha must be nonnegative")
        self.alpha = float(alpha)

    def value(self, x):
        return 0.5 * self.alpha * float(x @ x)

    def _prox(self, mu, y):
        return y / (1.0 + mu * self.alpha)

    @property
    def descriptor(self):
        return f"quadratic:alpha={self.alpha:g}"


class L1Phi(PotentialPhi):
    """phi(x) = sum_i w_i |x_i| with weights w_i >= 0."""

    kind = "l1"

    def __init__(self, dim, w=1.0):
        super().__init__(dim)
        self.w = _broadcast(w, self.dim, "l1 weight")
        if np.any(self.w < 0):
            raise ArgumentError("l1: weights must be nonnegative")

    def value(self, x):
        return float(np.sum(self.w * np.abs(x)))

    def _prox(self, mu, y):
        return np.sign(y) * np.maximum(np.abs(y) - mu * self.w, 0.0)

    @property
    def descriptor(self):
        return f"l1:w={_fmt_vec(self.w)}"


class BoxPhi(PotentialPhi):
    """Indicator of the box lo <= x <= hi."""

    kind = "box"

    def __init__(self, dim, lo=0.0, hi=1.0):
        super().__init__(dim)
        self.lo = _broadcast(lo, self.dim, "box lo")
        self.hi = _broadcast(hi, self.dim, "box hi")
        if np.any(self.lo > self.hi):
            raise ArgumentError("box: empty (lo > hi)")

    def value(self, x):
        if np.all(x >= self.lo) and np.all(x <= self.hi):
            return 0.0
        return np.inf

    def _prox(self, mu, y):
        return np.clip(y, self.lo, self.hi)

    @property
    def descriptor(self):
        return f"box:lo={_fmt_vec(self.lo)},hi={_fmt_vec(self.hi)}"


class ElasticNetPhi(PotentialPhi):
    """phi(x) = sum_i w_i |x_i| + alpha/2 ||x||^2."""

    kind = "elastic-net"

    def __init__(self, dim, w=1.0, alpha=1.0):
        super().__init__(dim)
        self.w = _broadcast(w, self.dim, "elastic-net weight")
        if np.any(self.w < 0) or alpha < 0:
            raise ArgumentError("elastic-net: w and alpha must be nonnegative")
        self.alpha = float(alpha)

    def value(self, x):
        return float(np.sum(self.w * np.abs(x))) + 0.5 * self.alpha * float(x @ x)

    def _prox(self, mu, y):
        soft = np.sign(y) * np.maximum(np.abs(y) - mu * self.w, 0.0)
        return soft / (1.0 + mu * self.alpha)

    @property
    def descriptor(self):
        return f"elastic-net:w={_fmt_vec(self.w)},alpha={self.alpha:g}"


def prox_phi(phi, mu, y):
    """Proximal point ``argmin_u phi(u) + ||u - y||^2 / (2 mu)``."""
    _check_mu(mu)
    return phi._prox(float(mu), _point(y, phi.dim))


def yosida_grad_phi(phi, mu, y):
    """Gradient of the Moreau envelope of index ``mu``: ``(y - prox(y)) / mu``."""
    _check_mu(mu)
    y = _point(y, phi.dim)
    return (y - phi._prox(float(mu), y)) / mu


def inclusion_residual(phi, mu, x, v):
    """Distance ``||x - prox_{mu phi}(x + mu v)||``; zero iff ``v`` is in ``∂phi(x)``."""
    _check_mu(mu)
    x = _point(x, phi.dim, "x")
    v = _point(v, phi.dim, "v")
    return float(np.linalg.norm(x - phi._prox(float(mu), x + mu * v)))


def default_residual_tol(x):
    return 1e-8 * (1.0 + float(np.linalg.norm(x)))


# -- psi ---------------------------------------------------------------------

class PotentialPsi:
    """Base class for the smooth potential."""

    kind = "abstract"

    def __init__(self, dim):
        if int(dim) != dim or dim < 1:
            raise ArgumentError(f"dimension must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.lipschitz_grad = 0.0
        self.known_infimum = 0.0

    def value(self, x):
        raise NotImplementedError

    def _grad(self, x):
        raise NotImplementedError

    @property
    def descriptor(self):
        return self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor!r}, dim={self.dim})"


class ZeroPsi(PotentialPsi):
    kind = "zero"

    def value(self, x):
        return 0.0

    def _grad(self, x):
        return np.zeros_like(x)


class QuadraticForm(PotentialPsi):
    """psi(x) = 1/2 <x, Q x> - <b, x> + offset with Q symmetric PSD."""

    kind = "quadform"

    def __init__(self, dim, Q=1.0, b=0.0, offset=0.0):
        super().__init__(dim)
        Q = np.asarray(Q, dtype=float)
        if Q.ndim == 0:
            Q = float(Q) * np.eye(self.dim)
        elif Q.ndim == 1:
            Q = np.diag(_broadcast(Q, self.dim, "Q diagonal"))
        if Q.shape != (self.dim, self.dim):
            raise ArgumentError(f"Q has shape {Q.shape}, expected ({self.dim}, {self.dim})")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * (1 + np.abs(Q).max())):
            raise ArgumentError("Q must be symmetric")
        eig = np.linalg.eigvalsh(Q)
        if eig[0] < -1e-12 * max(1.0, eig[-1]):
            raise ArgumentError("Q must be positive semidefinite (psi convex)")
        self.Q = _frozen(Q)
        self.b = _broadcast(b, self.dim, "b")
        self.offset = float(offset)
        self.lipschitz_grad = float(max(eig[-1], 0.0))
        # min over x of the quadratic; -inf when b is outside range(Q)
        xs, *_ = np.linalg.lstsq(Q, self.b, rcond=None)
        if np.linalg.norm(Q @ xs - self.b) > 1e-10 * (1 + np.linalg.norm(self.b)):
            self.known_infimum = -np.inf
        else:
            self.known_infimum = self.offset - 0.5 * float(self.b @ xs)

    @classmethod
    def centered(cls, dim, alpha=1.0, center=0.0):
        """alpha/2 ||x - center||^2."""
        c = _broadcast(center, dim, "center")
        return cls(dim, Q=alpha, b=alpha * c, offset=0.5 * alpha * float(c @ c))

    def value(self, x):
        return 0.5 * float(x @ self.Q @ x) - float(self.b @ x) + self.offset

    def _grad(self, x):
        return self.Q @ x - self.b

    @property
    def descriptor(self):
        return f"quadform:Q={_fmt_mat(self.Q)},b={_fmt_vec(self.b)},offset={self.offset:g}"


class LeastSquares(PotentialPsi):
    """psi(x) = 1/2 ||A x - b||^2."""

    kind = "lsq"

    def __init__(self, A, b):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1])
        self.A = _frozen(A)
        self.b = _broadcast(b, A.shape[0], "b")
        self.lipschitz_grad = float(np.linalg.norm(A, 2) ** 2)
        xs, *_ = np.linalg.lstsq(A, self.b, rcond=None)
        r = A @ xs - self.b
        self.known_infimum = 0.5 * float(r @ r)

    def value(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def _grad(self, x):
        return self.A.T @ (self.A @ x - self.b)

    @property
    def descriptor(self):
        return f"lsq:A={_fmt_mat(self.A)},b={_fmt_vec(self.b)}"


class LogisticSum(PotentialPsi):
    """psi(x) = sum_i log(1 + exp(-y_i <a_i, x>)) with labels y_i in {-1, +1}."""

    kind = "logistic"

    def __init__(self, A, y):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        super().__init__(A.shape[1])
        self.A = _frozen(A)
        self.y = _broadcast(y, A.shape[0], "labels")
        if not np.all(np.isin(self.y, (-1.0, 1.0))):
            raise ArgumentError("logistic: labels must be -1 or +1")
        self.lipschitz_grad = 0.25 * float(np.linalg.norm(A, 2) ** 2)
        self.known_infimum = 0.0

    def value(self, x):
        return float(np.sum(np.logaddexp(0.0, -self.y * (self.A @ x))))

    def _grad(self, x):
        m = self.y * (self.A @ x)
        return -self.A.T @ (self.y * expit(-m))

    @property
    def descriptor(self):
        return f"logistic:A={_fmt_mat(self.A)},y={_fmt_vec(self.y)}"


def grad_psi(psi, x):
    return psi._grad(_point(x, psi.dim, "x"))


# -- pair --------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialPair:
    """The two potentials plus a certified lower bound on inf(phi + psi).

    When ``inf_sum_lower_bound`` is omitted it defaults to
    ``phi.known_infimum + psi.known_infimum``, which is always a valid lower
    bound; an explicit value is required when that sum is -inf.
    """

    phi: PotentialPhi
    psi: PotentialPsi
    inf_sum_lower_bound: float | None = None

    def __post_init__(self):
        if self.phi.dim != self.psi.dim:
            raise ArgumentError(
                f"phi has dimension {self.phi.dim} but psi has dimension {self.psi.dim}")
        if self.inf_sum_lower_bound is None:
            bound = self.phi.known_infimum + self.psi.known_infimum
            if not np.isfinite(bound):
                raise ArgumentError(
                    "inf(phi + psi) has no catalog lower bound; pass inf_sum_lower_bound")
            object.__setattr__(self, "inf_sum_lower_bound", float(bound))
        elif not np.isfinite(self.inf_sum_lower_bound):
            raise ArgumentError("inf_sum_lower_bound must be finite")

    @property
    def dim(self):
        return self.phi.dim

    def objective(self, x):
        x = _point(x, self.dim, "x")
        return self.phi.value(x) + self.psi.value(x)

    def energy_gap(self, x):
        """``(phi + psi)(x) - inf``, raising if the certified bound is violated."""
        f = self.objective(x)
        gap = f - self.inf_sum_lower_bound
        if gap < -1e-12 * (1.0 + abs(f)):
            raise InconsistentBoundError(
                f"(phi+psi)(x) = {f!r} is below the certified lower bound "
                f"{self.inf_sum_lower_bound!r}")
        return max(gap, 0.0)

    def check_lower_bound(self, points):
        """Raise :class:`InconsistentBoundError` if any sample beats the bound."""
        for x in np.atleast_2d(points):
            self.energy_gap(x)


# -- descriptors -------------------------------------------------------------

def _fmt_vec(a):
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size and np.all(a == a[0]):
        return f"{a[0]:g}"
    return ";".join(f"{v:.17g}" for v in a)


def _fmt_mat(a):
    a = np.asarray(a, dtype=float)
    if a.shape[0] == a.shape[1] and np.array_equal(a, a[0, 0] * np.eye(a.shape[0])):
        return f"{a[0, 0]:g}"
    return "<" + ";".join(f"{v:.17g}" for v in a.reshape(-1)) + ">"


def read_dense_matrix(path):
    """Read the dense text format: first line ``rows cols``, then row-major values."""
    text = Path(path).read_text().split()
    if len(text) < 2:
        raise ArgumentError(f"{path}: missing 'rows cols' header")
    try:
        rows, cols = int(text[0]), int(text[1])
        vals = [float(t) for t in text[2:]]
    except ValueError as exc:
        raise ArgumentError(f"{path}: {exc}") from None
    if len(vals) != rows * cols:
        raise ArgumentError(f"{path}: header says {rows}x{cols} but found {len(vals)} values")
    return np.array(vals).reshape(rows, cols)


def _parse_value(raw, base_dir):
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    if ";" in raw:
        try:
            return np.array([float(t) for t in raw.split(";")])
        except ValueError:
            raise ArgumentError(f"cannot parse vector {raw!r}") from None
    path = Path(raw)
    if base_dir is not None and not path.is_absolute():
        path = Path(base_dir) / path
    if not path.exists():
        raise ArgumentError(f"{raw!r} is neither a number, a ';'-list nor an existing file")
    return read_dense_matrix(path)


def _split_descriptor(desc, base_dir):
    name, _, rest = desc.strip().partition(":")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, raw = item.partition("=")
            if not eq:
                raise ArgumentError(f"descriptor {desc!r}: expected key=value, got {item!r}")
            params[key.strip()] = _parse_value(raw, base_dir)
    return name.strip(), params


PHI_CATALOG = {
    "zero": ("phi = 0", lambda dim, **p: ZeroPhi(dim)),
    "quadratic": ("phi = alpha/2 ||x||^2  [alpha=1]", lambda dim, **p: QuadraticPhi(dim, **p)),
    "l1": ("phi = sum w_i |x_i|  [w=1]", lambda dim, **p: L1Phi(dim, **p)),
    "box": ("indicator of lo <= x <= hi  [lo=0, hi=1]", lambda dim, **p: BoxPhi(dim, **p)),
    "elastic-net": ("phi = sum w_i |x_i| + alpha/2 ||x||^2  [w=1, alpha=1]",
                    lambda dim, **p: ElasticNetPhi(dim, **p)),
}

PSI_CATALOG = {
    "zero": ("psi = 0", lambda dim, **p: ZeroPsi(dim)),
    "quadratic": ("psi = alpha/2 ||x - center||^2  [alpha=1, center=0]",
                  lambda dim, **p: QuadraticForm.centered(dim, **p)),
    "quadform": ("psi = 1/2 <x,Qx> - <b,x> + offset  [Q=1, b=0, offset=0]",
                 lambda dim, **p: QuadraticForm(dim, **p)),
    "lsq": ("psi = 1/2 ||Ax - b||^2  (A=<file>, b=<file or list>)",
            lambda dim, **p: LeastSquares(**p)),
    "logistic": ("psi = sum log(1 + exp(-y_i <a_i,x>))  (A=<file>, y=<labels>)",
                 lambda dim, **p: LogisticSum(**p)),
}


def _build(catalog, what, desc, dim, base_dir):
    name, params = _split_descriptor(desc, base_dir)
    if name not in catalog:
        near = difflib.get_close_matches(name, list(catalog), n=1, cutoff=0.0)
        hint = f"; did you mean {near[0]!r}?" if near else ""
        raise ArgumentError(f"unknown {what} potential {name!r}{hint}")
    try:
        pot = catalog[name][1](dim, **params)
    except TypeError as exc:
        raise ArgumentError(f"{what} {name!r}: {exc}") from None
    if pot.dim != dim:
        raise ArgumentError(f"{what} {name!r} has dimension {pot.dim}, expected {dim}")
    return pot


def parse_phi(desc, dim, base_dir=None):
    """Build a ``phi`` from a descriptor such as ``"l1:w=1"`` or ``"box:lo=0,hi=1"``."""
    return _build(PHI_CATALOG, "phi", desc, dim, base_dir)


def parse_psi(desc, dim, base_dir=None):
    """Build a ``psi`` from a descriptor such as ``"quadratic:alpha=1,center=2"``."""
    return _build(PSI_CATALOG, "psi", desc, dim, base_dir)
