"""Central finite-difference verification of ``Network.backward``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Network


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_index: int
    checked: np.ndarray  # flat parameter indices compared
    kinks: np.ndarray  # indices skipped because +-eps flips a ReLU
    unresolved: np.ndarray  # indices whose gradient is below the quotient's resolution
    rel_errors: np.ndarray
    analytic: np.ndarray
    numeric: np.ndarray

    def passed(self, tol=1e-4):
        return self.max_rel_error < tol


def relative_error(a, b):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def sample_indices(net: Network, per_tensor, rng):
    """Up to ``per_tensor`` random flat indices from every weight and bias
    tensor, so each layer is represented even when the net is large."""
    out = []
    for (w0, w1, _), (b0, b1, _) in net.slices:
        for lo, hi in ((w0, w1), (b0, b1)):
            n = hi - lo
            k = min(per_tensor, n)
            out.append(lo + rng.choice(n, size=k, replace=False))
    return np.sort(np.concatenate(out))


def finite_difference_check(
    net: Network, x, loss_fn, eps=1e-5, aux=None, indices=None, analytic=None, resolution=0.0
):
    """Compare analytic gradients with ``(L(p+eps) - L(p-eps)) / (2 eps)``.

    ``loss_fn(out) -> (loss, dloss/dout)``. Everything runs on a float64 copy
    of ``net``. ``indices`` restricts the comparison to some coordinates (all
    by default). ``analytic`` overrides the backprop gradient, which is how a
    deliberately corrupted gradient is fed in.

    Coordinates where the perturbation flips a ReLU are not scored, nor are
    coordinates where both gradients are below ``resolution`` (round-off in a
    float64 forward pass is ~1e-11 absolute at eps=1e-5). Both are reported.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    net64 = net.copy(dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    aux = None if aux is None else np.asarray(aux, dtype=np.float64)

    def masks(caches):
        return [c["mask"] for c in caches if "mask" in c]

    def loss_at(p):
        net64.params[...] = p
        out, _, caches = net64.forward(x, aux)
        return loss_fn(out)[0], masks(caches)

    base = net64.params.copy()
    out, _, cache = net64.forward(x, aux)
    base_masks = masks(cache)
    if analytic is None:
        analytic = net64.backward(cache, loss_fn(out)[1])
    analytic = np.asarray(analytic, dtype=np.float64)
    if indices is None:
        indices = np.arange(net64.size)
    indices = np.asarray(indices)

    numeric = np.empty(len(indices))
    smooth = np.ones(len(indices), dtype=bool)
    p = base.copy()
    for k, idx in enumerate(indices):
        p[idx] = base[idx] + eps
        lp, mp = loss_at(p)
        p[idx] = base[idx] - eps
        lm, mm = loss_at(p)
        p[idx] = base[idx]
        numeric[k] = (lp - lm) / (2.0 * eps)
        # a ReLU switching inside [p-eps, p+eps] makes the difference quotient meaningless
        smooth[k] = all(np.array_equal(a, b) and np.array_equal(a, c) for a, b, c in zip(base_masks, mp, mm))
    net64.params[...] = base

    kinks = indices[~smooth]
    indices, numeric = indices[smooth], numeric[smooth]
    a = analytic[indices]
    mag = np.maximum(np.abs(a), np.abs(numeric))
    tiny = (mag > 0) & (mag < resolution)
    unresolved = indices[tiny]
    indices, numeric, a = indices[~tiny], numeric[~tiny], a[~tiny]
    errs = relative_error(a, numeric)
    worst = int(np.argmax(errs)) if len(errs) else 0
    max_err = float(errs[worst]) if len(errs) else 0.0
    worst_index = int(indices[worst]) if len(errs) else -1
    return GradCheckResult(max_err, worst_index, indices, kinks, unresolved, errs, a, numeric)
