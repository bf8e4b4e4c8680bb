"""Panel Gauss-Legendre integration helpers shared by the numerical modules."""
import numpy as np

from .errors import QuadratureFailure

GL_ORDER = 16
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GL_ORDER)
_CHUNK = 400_000


def gauss_panels(f, edges, order=GL_ORDER):
    """Integrate a vectorised ``f`` over consecutive panels given by ``edges``."""
    edges = np.asarray(edges, dtype=float)
    if edges.size < 2:
        return 0.0
    if order == GL_ORDER:
        x0, w0 = _NODES, _WEIGHTS
    else:
        x0, w0 = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1], edges[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    total = 0.0
    per = max(1, _CHUNK // order)
    for lo in range(0, a.size, per):
        m, h = mid[lo:lo + per], half[lo:lo + per]
        x = m[:, None] + h[:, None] * x0[None, :]
        vals = f(x)
        total = total + np.sum(vals * (h[:, None] * w0[None, :]))
    return total


def graded_edges(a, b, levels=30):
    """Geometric panel edges accumulating at ``a``."""
    w = b - a
    pts = a + w * 2.0 ** -np.arange(levels, -1, -1, dtype=float)
    return np.concatenate([[a], pts])


def oscillatory_edges(a, b, freq, breaks=(), max_width=None, min_panels=1, grade=True):
    """Panel edges on [a, b] resolving oscillation of angular frequency ``freq``.

    Panels are at most half a period wide, never narrower than (b - a) / 2**20,
    and the first panel is split geometrically towards ``a`` to absorb
    algebraic behaviour at the endpoint.
    """
    length = b - a
    if length <= 0:
        return np.array([a, b])
    width = length / min_panels
    if abs(freq) * width > np.pi:
        width = np.pi / abs(freq)
    if max_width is not None:
        width = min(width, max_width)
    width = max(width, length / 2.0 ** 20)
    n = int(np.ceil(length / width))
    edges = np.linspace(a, b, n + 1)
    if grade:
        edges = np.concatenate([graded_edges(a, edges[1]), edges[2:]])
    br = np.asarray([x for x in breaks if a < x < b], dtype=float)
    if br.size:
        edges = np.union1d(edges, br)
    return edges


def refine(edges):
    mid = 0.5 * (edges[:-1] + edges[1:])
    out = np.empty(edges.size + mid.size)
    out[0::2] = edges
    out[1::2] = mid
    return out


def adaptive_panels(f, edges, rtol=1e-8, atol=0.0, max_refine=3):
    """Integrate with a halving check; raise QuadratureFailure if it never settles."""
    coarse = gauss_panels(f, edges)
    for _ in range(max_refine + 1):
        edges = refine(edges)
        fine = gauss_panels(f, edges)
        err = abs(fine - coarse)
        if err <= max(rtol * abs(fine), atol):
            return fine, err
        coarse = fine
    raise QuadratureFailure(
        f"panel quadrature did not reach rtol={rtol:g} (last change {err:.3e})")


def integrate_oscillatory(f, a, b, freq, breaks=(), rtol=1e-8, atol=0.0, max_width=None):
    """Integrate ``f`` on [a, b] where ``f`` oscillates at most like exp(i freq x)."""
    edges = oscillatory_edges(a, b, freq, breaks=breaks, max_width=max_width)
    return adaptive_panels(f, edges, rtol=rtol, atol=atol)
