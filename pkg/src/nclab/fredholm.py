"""Discretized Fredholm determinants and pfaffians; the multi-time characteristic function.

The characteristic function E[exp(i sum_mu theta_mu sum_j f_mu(X_j(t_mu)))]
is evaluated two ways: by direct quadrature of the joint density (small
systems only) and as the Fredholm pfaffian of J + A chi, discretized by
Gauss-Legendre nodes on the test-function supports.  With
d_a = sqrt(w_a chi_a) the discretized operator is the skew matrix
J + diag(d) A diag(d), whose pfaffian does not depend on the sign chosen
for each d_a (flipping one point's sign conjugates by a +-1 diagonal of
determinant 1), so the complex pfaffian is evaluated directly.

At the final time the I-tilde entry contains sgn(y - x), whose jump on the
diagonal limits node sampling to O(n^-2) accuracy.  On a slice observed at
T that part is discretized as an operator instead: w_j sgn(x_j - x_i) is
replaced by w_j - 2 L_ij with L the spectral integration matrix, which is
exact on polynomial interpolants and keeps the matrix exactly skew.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .kernels import CorrelationKernel
from .quadrature import QuadratureSpec, gauss_legendre, integration_matrix
from .skewlin import pfaffian, skew_matrix, symplectic_j
from .stochastic import TimePartition, expectation_bruteforce

__all__ = [
    "BumpFunction",
    "TestFunctionSpec",
    "DiscretizedKernel",
    "discretize",
    "fredholm_det",
    "fredholm_pf",
    "fredholm_pf_homotopy",
    "characteristic_direct",
    "characteristic_pf",
]

DEFAULT_NODES = 40
ORACLE_QUAD = QuadratureSpec(panel_width=5.0, window=7.0)


@dataclass(frozen=True)
class BumpFunction:
    """Compactly supported test function height * (1 - ((x - center) / width)^2)^3."""

    center: float
    width: float
    height: float = 1.0

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError("bump width must be positive")

    @property
    def support(self):
        return (self.center - self.width, self.center + self.width)

    def __call__(self, x):
        u = (np.asarray(x, dtype=float) - self.center) / self.width
        return np.where(np.abs(u) < 1.0, self.height * (1.0 - u * u) ** 3, 0.0)


@dataclass(frozen=True)
class TestFunctionSpec:
    """Per-slice test functions (None for an unobserved slice) and angles theta."""

    __test__ = False  # not a pytest class

    functions: tuple
    theta: tuple

    def __post_init__(self):
        fs, th = tuple(self.functions), tuple(float(t) for t in self.theta)
        if len(fs) != len(th):
            raise ValueError("need one angle per test function")
        for f in fs:
            if f is not None and not hasattr(f, "support"):
                raise ValueError("test functions must expose a compact support (lo, hi)")
        object.__setattr__(self, "functions", fs)
        object.__setattr__(self, "theta", th)

    def active(self, mu):
        return self.functions[mu] is not None and self.theta[mu] != 0.0

    def chi(self, mu, x):
        """chi_mu(x) = exp(i theta_mu f_mu(x)) - 1."""
        x = np.asarray(x, dtype=float)
        if not self.active(mu):
            return np.zeros(x.shape, dtype=complex)
        return np.expm1(1j * self.theta[mu] * self.functions[mu](x))

    def with_theta(self, theta):
        return TestFunctionSpec(self.functions, tuple(theta))

    def check_partition(self, partition: TimePartition):
        if len(self.functions) != len(partition):
            raise ValueError(
                f"test functions given for {len(self.functions)} slices, partition has {len(partition)}"
            )


@dataclass(frozen=True)
class DiscretizedKernel:
    """Skew matrix K with weights and chi folded in, ordered (slice, node, component).

    The operator is J + K, with J the 2x2 symplectic unit repeated per node.
    """

    matrix: np.ndarray
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nodes: np.ndarray = field(default_factory=lambda: np.zeros(0))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] % 2:
            raise ValueError(f"kernel matrix must be square of even size, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("kernel matrix has non-finite entries")
        if np.any(np.asarray(self.weights) <= 0):
            raise ValueError("quadrature weights must be positive")
        object.__setattr__(self, "matrix", m.astype(complex))

    @property
    def size(self):
        return self.matrix.shape[0]


def discretize(spec: TestFunctionSpec, kernel: CorrelationKernel, nodes=DEFAULT_NODES):
    """Nystrom discretization of A chi on Gauss-Legendre nodes over each active support."""
    spec.check_partition(kernel.partition)
    times, xs, ws, chis, sgn_blocks = [], [], [], [], []
    offset = 0
    for mu, t in enumerate(kernel.partition):
        if not spec.active(mu):
            continue
        lo, hi = spec.functions[mu].support
        x, w = gauss_legendre(nodes, lo, hi)
        times.append(np.full(nodes, t))
        xs.append(x)
        ws.append(w)
        chis.append(spec.chi(mu, x))
        if t == kernel.horizon:
            lmat = integration_matrix(nodes, lo, hi)
            jump = np.sign(x[None, :] - x[:, None])
            sgn_blocks.append((offset, (w[None, :] - 2.0 * lmat) / w[None, :] - jump))
        offset += nodes
    if not xs:
        return DiscretizedKernel(np.zeros((0, 0)))
    times, xs, ws, chis = (np.concatenate(v) for v in (times, xs, ws, chis))
    d, s, i = kernel.blocks(times, xs)
    for start, correction in sgn_blocks:
        block = slice(start, start + correction.shape[0])
        i[block, block] += correction
    m = xs.size
    a = np.empty((2 * m, 2 * m))
    a[0::2, 0::2] = d
    a[0::2, 1::2] = s.T
    a[1::2, 0::2] = -s
    a[1::2, 1::2] = -i
    scale = np.repeat(np.sqrt(ws * chis), 2)
    return DiscretizedKernel(scale[:, None] * a * scale[None, :], times, xs, ws)


def fredholm_det(disc: DiscretizedKernel):
    """det(I + J^-1 K) for the discretized operator."""
    n = disc.size
    if n == 0:
        return 1.0 + 0.0j
    jinv = -symplectic_j(n)
    return complex(np.linalg.det(np.eye(n) + jinv @ disc.matrix))


def fredholm_pf(disc: DiscretizedKernel, tol=1e-10):
    """Pf(J + K): the branch with Pf(J) = 1, computed by complex skew elimination."""
    n = disc.size
    if n == 0:
        return 1.0 + 0.0j
    return complex(pfaffian(skew_matrix(symplectic_j(n) + disc.matrix, tol=tol), check=False))


def fredholm_pf_homotopy(disc: DiscretizedKernel, steps=32, max_steps=1 << 14):
    """sqrt(det(I + s J^-1 K)) continued from s = 0 to 1 along a phase-unwrapped path.

    Independent of the pfaffian elimination; the step count doubles until
    consecutive phase increments stay below pi / 4.
    """
    n = disc.size
    if n == 0:
        return 1.0 + 0.0j
    m = -symplectic_j(n) @ disc.matrix
    eig = np.linalg.eigvals(m)
    while True:
        s = np.linspace(0.0, 1.0, steps + 1)
        # det(I + sM) = prod(1 + s lambda); unwrap the phase of each factor
        factors = 1.0 + s[:, None] * eig[None, :]
        phase = np.unwrap(np.angle(factors), axis=0)
        jumps = np.abs(np.diff(phase, axis=0)).max(initial=0.0)
        if jumps < np.pi / 4 or steps >= max_steps:
            break
        steps *= 2
    log_abs = np.sum(np.log(np.abs(factors[-1])))
    return complex(np.exp(0.5 * (log_abs + 1j * phase[-1].sum())))


def characteristic_pf(spec: TestFunctionSpec, kernel: CorrelationKernel, nodes=DEFAULT_NODES):
    """Characteristic function as the discretized Fredholm pfaffian of J + A chi."""
    return fredholm_pf(discretize(spec, kernel, nodes))


def characteristic_direct(spec: TestFunctionSpec, partition: TimePartition, n=2, quad=None):
    """Characteristic function Z[chi] / Z[0] by quadrature of the joint density.

    Desk-scale oracle for N = 2 with at most two observation times.
    """
    spec.check_partition(partition)
    if n != 2 or len(partition) > 2:
        raise DimensionError("direct characteristic function is limited to N = 2 and M <= 1")
    quad = quad or ORACLE_QUAD

    def observable(configs):
        phase = 0.0
        for mu, c in enumerate(configs):
            if spec.active(mu):
                phase = phase + spec.theta[mu] * spec.functions[mu](c).sum(axis=-1)
        return np.exp(1j * phase)

    breaks = [spec.functions[mu].support if spec.active(mu) else () for mu in range(len(partition))]
    z_chi = expectation_bruteforce(partition, n, observable, quad, breaks)
    z_0 = expectation_bruteforce(partition, n, None, quad, breaks)
    return complex(z_chi / z_0)
