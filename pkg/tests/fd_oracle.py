"""Independent finite-difference oracle for derivative tests."""

import sys

EPS = sys.float_info.epsilon


def fd5(f, x, h, rel=1e-9, noise_rel=1e-8, halvings=40):
    """Five-point central derivative of ``f`` at ``x`` with an adaptive step.

    The step is halved until two successive estimates agree to ``rel``.  It
    is never halved into the range where round-off in ``f`` (about
    ``1.5 eps max|f| / h``) would exceed ``noise_rel``; if agreement is not
    reached by then, the estimate that changed least from its predecessor is
    returned.
    """
    def stencil(h):
        v = [f(x - 2 * h), f(x - h), f(x + h), f(x + 2 * h)]
        # differences first so a constant f cancels exactly
        d = (8 * (v[2] - v[1]) - (v[3] - v[0])) / (12 * h)
        return d, max(abs(a) for a in v)

    prev, fmax = stencil(h)
    best, best_gap = prev, float("inf")
    for _ in range(halvings):
        if 1.5 * EPS * fmax / (h / 2) > noise_rel * max(1.0, abs(prev)):
            break
        h /= 2
        d, fmax = stencil(h)
        gap = abs(d - prev)
        if gap <= rel * max(1.0, abs(d)):
            return d
        if gap < best_gap:
            best, best_gap = d, gap
        prev = d
    return best
