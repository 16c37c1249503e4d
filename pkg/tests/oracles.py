"""Independent reference computations used to check the library.

Nothing here imports the package under test.
"""
import numpy as np
import sympy as sp
from scipy.linalg import expm, null_space
from scipy.optimize import minimize_scalar


def linear_flow(a, x0, t):
    """Exact solution of ``x' = A x``."""
    return expm(np.asarray(a) * t) @ np.asarray(x0)


def hopf_closed_form(x0, t, omega=2 * np.pi, rho=1.0, radius=1.0, tau=1.0):
    """Exact Hopf trajectory: the radius obeys a logistic law, the angle turns clockwise."""
    x0 = np.asarray(x0, dtype=float)
    r0 = np.hypot(*x0)
    th0 = np.arctan2(x0[1], x0[0])
    decay = np.exp(-2.0 * rho * radius**2 * np.asarray(t) / tau)
    r = radius / np.sqrt(1.0 + (radius**2 / r0**2 - 1.0) * decay)
    th = th0 - omega * np.asarray(t) / tau
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def measure_by_limit(a, ord_, h=1e-7):
    """Matrix measure from its one-sided derivative definition."""
    n = a.shape[0]
    return (np.linalg.norm(np.eye(n) + h * a, ord_) - 1.0) / h


def hopf_symmetric_jacobian_max():
    """Symbolic ``sup lambda_max(A_s)`` of the Hopf field over the plane.

    Returns ``(sup_expr, rho, r)``; the supremum is taken over the radius
    ``s = |x|`` of the larger eigenvalue of the symmetric Jacobian.
    """
    x1, x2, w, rho, r = sp.symbols("x1 x2 omega rho r", real=True)
    rad = rho * (r**2 - x1**2 - x2**2)
    f = sp.Matrix([w * x2 + rad * x1, -w * x1 + rad * x2])
    a = f.jacobian([x1, x2])
    a_s = sp.simplify((a + a.T) / 2)
    eigs = [sp.simplify(e) for e in a_s.eigenvals()]
    s = sp.symbols("s", nonnegative=True)
    polar = [sp.simplify(e.subs({x1: s, x2: 0})) for e in eigs]
    top = sp.Max(*polar)
    # both eigenvalues are decreasing in s, so the supremum sits at s = 0
    for e in polar:
        assert sp.simplify(sp.diff(e, s).subs({rho: 1, r: 1, s: sp.Rational(1, 2)})) <= 0
    return sp.simplify(top.subs(s, 0)), rho, r


def complete_graph_lambda(n_nodes, k):
    """``lambda_{N+1}`` of the block Laplacian of a complete graph with ``K = k I``."""
    return n_nodes * k


def sync_threshold(n_nodes, rho=1.0, radius=1.0):
    sup, rho_s, r_s = hopf_symmetric_jacobian_max()
    value = float(sup.subs({rho_s: rho, r_s: radius}))
    return value / complete_graph_lambda(n_nodes, 1.0)


def projected_brute_force(s, m, fx, n_dirs=10_000, seed=0):
    """Max of ``d^T S d / d^T M d`` over random ``d`` with ``f^T M d = 0``."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n_dirs, s.shape[0]))
    v = m @ fx
    d = d - np.outer(d @ v, v) / (v @ v)
    num = np.einsum("ki,ij,kj->k", d, s, d)
    den = np.einsum("ki,ij,kj->k", d, m, d)
    return float(np.max(num / den))


def distance_to_circle(points, radius):
    return np.abs(np.linalg.norm(points, axis=-1) - radius)


def projected_plane_max(s, m, fx, n_angles=200_001):
    """Same maximum for 3-D states by a dense angle sweep over the constraint plane.

    The plane ``{d : f^T M d = 0}`` is spanned by an orthonormal null-space
    basis from scipy, independent of the library's Householder construction.
    """
    basis = null_space((m @ fx)[None, :])
    if basis.shape[1] != 2:
        raise ValueError("plane sweep needs a 3-D state")
    th = np.linspace(0.0, np.pi, n_angles)
    d = np.outer(np.cos(th), basis[:, 0]) + np.outer(np.sin(th), basis[:, 1])
    num = np.einsum("ki,ij,kj->k", d, s, d)
    den = np.einsum("ki,ij,kj->k", d, m, d)
    q = num / den
    k = int(np.argmax(q))
    # refine the best bracket with a bounded scalar search
    lo, hi = th[max(k - 1, 0)], th[min(k + 1, n_angles - 1)]

    def neg(a):
        v = np.cos(a) * basis[:, 0] + np.sin(a) * basis[:, 1]
        return -(v @ s @ v) / (v @ m @ v)

    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(max(q[k], -res.fun))
