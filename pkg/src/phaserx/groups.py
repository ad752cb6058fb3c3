"""Cyclic subgroups of the circle group and their actions on resource grids.

Sign convention used throughout the package: shifting an array by ``m`` along
an axis means ``out[i] = in[(i - m) mod n]``.  Under lifting, multiplying the
input by ``z_m`` is the shift by ``-m`` of the group axis, i.e. slice ``k`` of
the rotated lift equals slice ``(k + m) mod n`` of the original lift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CyclicGroup:
    """The ``n``-th roots of unity ``z_k = exp(2*pi*i*k/n)``."""

    n: int
    roots: np.ndarray

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, k: int) -> complex:
        return complex(self.roots[k % self.n])

    def compose(self, j: int, k: int) -> int:
        """Index of ``z_j * z_k``."""
        return (j + k) % self.n

    def inverse(self, k: int) -> int:
        return (-k) % self.n


def roots_of_unity(n: int) -> CyclicGroup:
    if n < 1:
        raise ValueError(f"group order must be >= 1, got {n}")
    k = np.arange(n)
    # exact values on the axes keep z_0 == 1 and e.g. C_4 == [1, i, -1, -i] bit-exact
    angle = 2.0 * np.pi * k / n
    roots = np.cos(angle) + 1j * np.sin(angle)
    quarter = (4 * k) % n == 0
    q = (4 * k[quarter]) // n
    roots[quarter] = np.array([1, 1j, -1, -1j])[q % 4]
    roots.setflags(write=False)
    return CyclicGroup(n, roots)


def rotate_grid(x: np.ndarray, z: complex, tol: float = 1e-9) -> np.ndarray:
    """Multiply every sample of ``x`` by the unit complex number ``z``."""
    if abs(abs(z) - 1.0) > tol:
        raise ValueError(f"rotation must have unit magnitude, |z| = {abs(z)}")
    return np.asarray(x) * z


def lift(x: np.ndarray, group: CyclicGroup) -> np.ndarray:
    """Stack ``z_k * x`` for every group element along a new leading axis."""
    x = np.asarray(x)
    return group.roots.reshape((group.n,) + (1,) * x.ndim) * x


def cyclic_shift(arr: np.ndarray, axis: int, m: int) -> np.ndarray:
    """``out[i] = arr[(i - m) mod n]`` along ``axis``."""
    return np.roll(arr, m, axis=axis)


def circulant_from_kernel(psi, n: int) -> np.ndarray:
    """Matrix with ``A[i, j] = psi[(i - j) mod n]`` (first column is ``psi``)."""
    psi = np.asarray(psi)
    if psi.ndim != 1 or psi.shape[0] != n:
        raise ValueError(f"kernel length {psi.shape} does not match n={n}")
    i = np.arange(n)
    return psi[(i[:, None] - i[None, :]) % n]


def circular_conv(s: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Direct evaluation of ``sum_j psi[j] * s[(i - j) mod n]`` along axis 0.

    ``psi`` may be shorter than ``s`` (a partial kernel, zero-extended).
    """
    n = s.shape[0]
    out = np.zeros(s.shape, dtype=np.result_type(s, psi))
    for i in range(n):
        for j in range(len(psi)):
            out[i] += psi[j] * s[(i - j) % n]
    return out


@dataclass
class TheoremReport:
    n: int
    trials: int
    max_deviation: float
    passed: bool
    details: dict


def verify_theorem1_forward(n: int, trials: int, rng: np.random.Generator,
                            kernel_size: int | None = None, tol: float = 1e-12) -> TheoremReport:
    """Circular convolution commutes with every cyclic shift.

    Each trial draws a random signal, kernel (zero-extended when
    ``kernel_size < n``) and shift, then compares ``shift(conv(s))`` with
    ``conv(shift(s))``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = n if kernel_size is None else kernel_size
    worst = 0.0
    for _ in range(trials):
        s = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        psi = np.zeros(n, dtype=complex)
        psi[:k] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        m = int(rng.integers(0, n))
        lhs = cyclic_shift(circular_conv(s, psi), 0, m)
        rhs = circular_conv(cyclic_shift(s, 0, m), psi)
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return TheoremReport(n, trials, worst, worst <= tol, {"kernel_size": k, "tol": tol})


def shift_matrix(n: int) -> np.ndarray:
    """Permutation matrix ``P`` with ``(P s)[i] = s[(i - 1) mod n]``."""
    return circulant_from_kernel(np.eye(n)[1 % n] if n > 1 else np.ones(1), n)


def commutant_projection(a: np.ndarray) -> np.ndarray:
    """Average ``P^k A P^-k`` over the cyclic group."""
    n = a.shape[0]
    p = shift_matrix(n)
    acc = np.zeros_like(a, dtype=np.result_type(a, float))
    pk = np.eye(n)
    for _ in range(n):
        acc += pk @ a @ pk.T
        pk = p @ pk
    return acc / n


def circulant_defect(a: np.ndarray) -> float:
    """Largest spread of entries along each wrapped diagonal ``(i - j) mod n``."""
    n = a.shape[0]
    i = np.arange(n)
    worst = 0.0
    for d in range(n):
        diag = a[(i + d) % n, i]
        worst = max(worst, float(np.abs(diag - diag[0]).max()))
    return worst


def verify_theorem1_converse(n: int, trials: int, rng: np.random.Generator,
                             tol: float = 1e-10) -> TheoremReport:
    """Any shift-commuting matrix is circulant, checked through projection.

    For random ``A`` the group average ``A_bar`` must commute with ``P`` and be
    circulant; the raw random ``A`` must fail the commutation test.
    """
    if n < 2:
        raise ValueError("converse check needs n >= 2")
    p = shift_matrix(n)
    worst_comm = worst_circ = 0.0
    raw_fails = True
    for _ in range(trials):
        a = rng.standard_normal((n, n))
        a_bar = commutant_projection(a)
        worst_comm = max(worst_comm, float(np.abs(p @ a_bar - a_bar @ p).max()))
        worst_circ = max(worst_circ, circulant_defect(a_bar))
        if np.abs(p @ a - a @ p).max() <= tol:
            raw_fails = False
    worst = max(worst_comm, worst_circ)
    passed = worst <= tol and raw_fails
    return TheoremReport(n, trials, worst, passed, {
        "commutation": worst_comm, "circulant": worst_circ,
        "random_matrix_fails_commutation": raw_fails, "tol": tol,
    })
