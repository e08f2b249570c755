"""Controlled dynamics, the objective, and chronological iterated-integral forms.

The propagator solves i dU/dt = (H0 + f(t) V) U with U(0) = I.  Because f is
piecewise constant, each segment is advanced by one exact Hermitian
exponential, so propagation carries no time-discretization error beyond
roundoff.

The chronological forms of order n are

    A^n_l(f) = int_{T >= t_1 >= ... >= t_n >= 0} f(t_1)...f(t_n)
               <l| V_{t_1} ... V_{t_n} |N> dt_n ... dt_1,

with V_t = e^{i t H0} V e^{-i t H0} and A^0_l = delta_{lN}.  They are the
interaction-picture Taylor data of the propagator:

    e^{i T H0} U_T = sum_n (-i)^n A^n(T).

Three independent evaluation routes are provided for the distinguished form
A^{N-1} at l = 1:

  * dyson_forms        -- RK4 integration of dA^n/dt = f(t) V_t A^{n-1};
  * kernel_form_A1N    -- a 1-D reduction of the (N-1)-dimensional kernel
                          integral with kernel ~ e^{i omega max(t_1..t_{N-1})},
                          using that the integrand is symmetric:
                          int_{[0,T]^m} e^{i w max} prod f
                              = m int_0^T e^{i w s} f(s) F(s)^{m-1} ds,
                          F(s) = int_0^s f;
  * kernel_bruteforce_A1N -- direct enumeration of every cell of the
                          m-dimensional grid with the phase factor integrated
                          exactly inside each cell.

The reduction identity is not taken on faith: the test suite checks the three
routes against each other and against a plain midpoint tensor quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .controls import PiecewiseControl, integral
from .errors import (
    DomainError,
    GridMismatch,
    NonConvergence,
    NotUnitary,
    TooExpensive,
)
from .model import ProblemInstance, SystemSpec, energies, h0_matrix, v_matrix, v_power_element
from .numerics import expm_mih, unitarity_defect


def propagate(sys: SystemSpec, f: PiecewiseControl) -> np.ndarray:
    """Final-time propagator U_T for the control f.

    One exact Hermitian exponential per segment (eigendecompositions are
    batched over segments); exact for piecewise-constant f.
    """
    if f.horizon != sys.horizon:
        raise GridMismatch(
            f"control horizon {f.horizon!r} does not match system horizon {sys.horizon!r}"
        )
    h0 = h0_matrix(sys)
    v = v_matrix(sys)
    dt = f.dt
    stack = h0[None, :, :] + f.as_array()[:, None, None] * v[None, :, :]
    w, q = np.linalg.eigh(stack)
    steps = np.matmul(q * np.exp(-1j * dt * w)[:, None, :], q.conj().swapaxes(1, 2))
    u = np.eye(sys.levels, dtype=np.complex128)
    for k in range(f.segments):
        u = steps[k] @ u
    return u


def objective(u: np.ndarray, inst: ProblemInstance, unitarity_tol: float = 1e-8) -> float:
    """Mayer objective Tr(O U rho0 U^dagger) = sum_l lambda_l |<l|U|level>|^2.

    Uses the normalized observable (last eigenvalue 0), so the zero control
    scores exactly 0 when starting from level N.
    """
    defect = unitarity_defect(u)
    if defect > unitarity_tol:
        raise NotUnitary(f"unitarity defect {defect:.3e} exceeds {unitarity_tol:.3e}")
    col = np.abs(u[:, inst.initial_level - 1]) ** 2
    lam = np.asarray(inst.observable.eigenvalues)
    return float(np.dot(lam, col))


@dataclass(frozen=True)
class DysonForms:
    """Final-time chronological forms A^n_l for 0 <= n <= n_max, 1 <= l <= N.

    table[n, l-1] = A^n_l(T).  Row 0 is the Kronecker row (0, ..., 0, 1).
    """

    n_max: int
    levels: int
    table: np.ndarray
    segments: int
    substeps: int
    horizon: float
    converged: bool
    last_rel_change: float

    def value(self, n: int, l: int) -> complex:
        """A^n_l with 1-based level index l."""
        if not 0 <= n <= self.n_max:
            raise DomainError(f"order {n} outside 0..{self.n_max}")
        if not 1 <= l <= self.levels:
            raise DomainError(f"level {l} outside 1..{self.levels}")
        return complex(self.table[n, l - 1])


def _dyson_matrices(sys: SystemSpec, f: PiecewiseControl, n_max: int, substeps: int) -> np.ndarray:
    """Integrate dA^n/dt = f(t) V_t A^{n-1}, A^n(0) = 0, with classical RK4.

    Returns the stack (A^1(T), ..., A^{n_max}(T)).  `substeps` RK4 steps per
    control segment; the only discretization error is phase resolution of
    V_t inside segments.
    """
    n = sys.levels
    v = v_matrix(sys)
    e = energies(sys)
    ident = np.eye(n, dtype=np.complex128)

    a = np.zeros((n_max, n, n), dtype=np.complex128)
    stack = np.empty((n_max, n, n), dtype=np.complex128)

    def rhs(t: float, fj: float, cur: np.ndarray) -> np.ndarray:
        ph = np.exp(1j * t * e)
        vt = ph[:, None] * v * ph.conj()[None, :]
        stack[0] = ident
        stack[1:] = cur[:-1]
        return fj * np.matmul(vt, stack)

    dt = f.dt
    h = dt / substeps
    for j, fj in enumerate(f.values):
        t0 = j * dt
        for s in range(substeps):
            t = t0 + s * h
            k1 = rhs(t, fj, a)
            k2 = rhs(t + 0.5 * h, fj, a + (0.5 * h) * k1)
            k3 = rhs(t + 0.5 * h, fj, a + (0.5 * h) * k2)
            k4 = rhs(t + h, fj, a + h * k3)
            a = a + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return a


def _forms_from_matrices(sys, f, n_max, substeps, mats, converged, rel_change) -> DysonForms:
    n = sys.levels
    table = np.zeros((n_max + 1, n), dtype=np.complex128)
    table[0, n - 1] = 1.0
    table[1:] = mats[:, :, n - 1]
    table.setflags(write=False)
    return DysonForms(
        n_max=n_max,
        levels=n,
        table=table,
        segments=f.segments,
        substeps=substeps,
        horizon=f.horizon,
        converged=converged,
        last_rel_change=rel_change,
    )


def dyson_forms(
    sys: SystemSpec,
    f: PiecewiseControl,
    n_max: int,
    substeps: int = 8,
    verify: bool = False,
    rtol: float = 1e-9,
    max_substeps: int = 1024,
) -> DysonForms:
    """Chronological forms of order 1..n_max at the final time.

    With verify=True (certificate mode) the substep count is doubled until
    the whole table changes by less than rtol relative to its magnitude;
    NonConvergence is raised if max_substeps is exhausted.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    if substeps < 1:
        raise DomainError(f"substeps must be >= 1, got {substeps}")
    if f.horizon != sys.horizon:
        raise GridMismatch(
            f"control horizon {f.horizon!r} does not match system horizon {sys.horizon!r}"
        )
    if not verify:
        mats = _dyson_matrices(sys, f, n_max, substeps)
        return _forms_from_matrices(sys, f, n_max, substeps, mats, False, float("nan"))

    cur = _dyson_matrices(sys, f, n_max, substeps)
    s = substeps
    while 2 * s <= max_substeps:
        nxt = _dyson_matrices(sys, f, n_max, 2 * s)
        scale = max(1.0, float(np.max(np.abs(nxt))))
        rel = float(np.max(np.abs(nxt - cur))) / scale
        if rel < rtol:
            return _forms_from_matrices(sys, f, n_max, 2 * s, nxt, True, rel)
        cur = nxt
        s *= 2
    raise NonConvergence(
        f"substep doubling did not reach rtol={rtol:g} within {max_substeps} substeps/segment"
    )


def closed_form_AlN(sys: SystemSpec, f: PiecewiseControl, l: int, n: int) -> float:
    """A^n_l for l > 1 and n <= N-1: <l|V^n|N> / n! * (int f)^n.

    For these orders no path from level N to level l can touch level 1, so
    the interaction-picture phases drop out and the form collapses to a pure
    power of the control integral; in particular it vanishes on mean-zero
    controls.
    """
    nlev = sys.levels
    if l <= 1 or l > nlev:
        raise DomainError(f"closed form requires 1 < l <= {nlev}, got l={l}")
    if n < 0 or n > nlev - 1:
        raise DomainError(f"closed form requires 0 <= n <= {nlev - 1}, got n={n}")
    return v_power_element(sys, l, n) / math.factorial(n) * integral(f) ** n


def _phase_poly_integrals(omega: float, h: float, kmax: int) -> np.ndarray:
    """I_k = int_0^h u^k e^{i omega u} du for k = 0..kmax.

    Series in (i omega) for small |omega h| (avoids cancellation), upward
    recurrence otherwise.
    """
    out = np.empty(kmax + 1, dtype=np.complex128)
    z = 1j * omega
    if abs(omega * h) <= 2.0:
        for k in range(kmax + 1):
            term = h ** (k + 1) / (k + 1)
            total = term
            j = 1
            while True:
                term = term * z * h * (k + j) / (j * (k + j + 1))
                total += term
                if abs(term) <= 1e-18 * max(abs(total), h ** (k + 1)):
                    break
                j += 1
            out[k] = total
    else:
        eph = np.exp(z * h)
        out[0] = (eph - 1.0) / z
        for k in range(1, kmax + 1):
            out[k] = (h**k * eph - k * out[k - 1]) / z
    return out


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def kernel_form_A1N(sys: SystemSpec, f: PiecewiseControl) -> complex:
    """A^{N-1}_1 via the 1-D reduction of the max-kernel integral.

    A = v_1...v_{N-1} / (N-2)! * int_0^T e^{i omega s} f(s) F(s)^{N-2} ds
    with F(s) = int_0^s f.  Per segment the integrand is e^{i omega s} times
    a polynomial, integrated by Gauss-Legendre quadrature.
    """
    m = sys.levels - 1
    omega = sys.omega
    vals = f.as_array()
    dt = f.dt
    nodes = max(12, m + 2 + int(math.ceil(1.5 * abs(omega) * dt)))
    x, w = _gauss_legendre(nodes)

    starts = np.arange(f.segments) * dt
    f_at_start = np.concatenate([[0.0], np.cumsum(vals)]) * dt  # F at segment starts
    u = 0.5 * dt * (x + 1.0)
    s = starts[:, None] + u[None, :]
    big_f = f_at_start[:-1, None] + vals[:, None] * u[None, :]
    integrand = np.exp(1j * omega * s) * vals[:, None] * big_f ** (m - 1)
    val = 0.5 * dt * complex(np.sum(integrand * w[None, :]))
    vprod = float(np.prod(sys.couplings))
    return vprod * val / math.factorial(m - 1)


# Guard for the brute-force path: enumeration visits segments^(levels-1) cells.
_BRUTEFORCE_MAX_LEVELS = 5
_BRUTEFORCE_MAX_SEGMENTS = 64
_CHUNK = 1 << 16


def kernel_bruteforce_A1N(sys: SystemSpec, f: PiecewiseControl) -> complex:
    """A^{N-1}_1 by direct enumeration of the (N-1)-dimensional grid.

    Every cell of the tensor grid is visited; f is constant on each cell and
    the phase e^{i omega max(t)} is integrated exactly inside the cell (for a
    cell whose top segment is shared by r coordinates,
    int_{[l,l+h]^r} e^{i w max} = r e^{i w l} int_0^h u^{r-1} e^{i w u} du).
    Serves as the oracle for kernel_form_A1N and dyson_forms.
    """
    nlev = sys.levels
    m = nlev - 1
    mseg = f.segments
    if nlev > _BRUTEFORCE_MAX_LEVELS or mseg > _BRUTEFORCE_MAX_SEGMENTS:
        raise TooExpensive(
            f"brute force needs levels <= {_BRUTEFORCE_MAX_LEVELS} and "
            f"segments <= {_BRUTEFORCE_MAX_SEGMENTS}, got {nlev} and {mseg}"
        )
    omega = sys.omega
    dt = f.dt
    vals = f.as_array()
    ints = _phase_poly_integrals(omega, dt, m - 1)
    seg_phase = np.exp(1j * omega * np.arange(mseg) * dt)
    rvals = np.arange(1, m + 1, dtype=np.float64)

    total = 0j
    n_cells = mseg**m
    for lo in range(0, n_cells, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, n_cells), dtype=np.int64)
        digits = np.empty((m, idx.size), dtype=np.int64)
        rem = idx
        for ax in range(m):
            digits[ax] = rem % mseg
            rem = rem // mseg
        top = digits.max(axis=0)
        is_top = digits == top[None, :]
        r = is_top.sum(axis=0)
        lower = np.where(is_top, 1.0, vals[digits] * dt).prod(axis=0)
        contrib = lower * vals[top] ** r * rvals[r - 1] * seg_phase[top] * ints[r - 1]
        total += complex(contrib.sum())
    vprod = float(np.prod(sys.couplings))
    return vprod * total / math.factorial(m)


def _kernel_midpoint_A1N(sys: SystemSpec, f: PiecewiseControl, subdiv: int = 1) -> complex:
    """Plain tensor-product midpoint quadrature of the max-kernel integral.

    O(h^2) accurate only; used in tests as the no-tricks cross-check of the
    exact-cell brute force.  Cost (segments*subdiv)^(N-1).
    """
    nlev = sys.levels
    m = nlev - 1
    pts = f.segments * subdiv
    if nlev > _BRUTEFORCE_MAX_LEVELS or pts**m > 1 << 24:
        raise TooExpensive(f"midpoint grid of {pts}^{m} points is too large")
    omega = sys.omega
    hh = f.horizon / pts
    mids = (np.arange(pts) + 0.5) * hh
    fmid = f.as_array()[np.arange(pts) // subdiv]

    total = 0j
    n_cells = pts**m
    for lo in range(0, n_cells, _CHUNK):
        idx = np.arange(lo, min(lo + _CHUNK, n_cells), dtype=np.int64)
        tmax = np.full(idx.size, -np.inf)
        fprod = np.ones(idx.size)
        rem = idx
        for _ in range(m):
            d = rem % pts
            rem = rem // pts
            tmax = np.maximum(tmax, mids[d])
            fprod *= fmid[d]
        total += complex(np.sum(fprod * np.exp(1j * omega * tmax)))
    vprod = float(np.prod(sys.couplings))
    return vprod * total * hh**m / math.factorial(m)


def dyson_resum_defect(sys: SystemSpec, f: PiecewiseControl, n_max: int, substeps: int = 8) -> float:
    """Frobenius distance between the resummed forms and the true propagator.

    Compares sum_{n<=n_max} (-i)^n A^n(T) with e^{i T H0} U_T.  Bounded by
    the series remainder (||V||_2 int|f|)^{n_max+1}/(n_max+1)! plus
    quadrature error, so it vanishes rapidly for small controls.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    mats = _dyson_matrices(sys, f, n_max, substeps)
    n = sys.levels
    resum = np.eye(n, dtype=np.complex128)
    for k in range(1, n_max + 1):
        resum = resum + (-1j) ** k * mats[k - 1]
    u_int = expm_mih(h0_matrix(sys), -sys.horizon) @ propagate(sys, f)
    return float(np.linalg.norm(resum - u_int, "fro"))
