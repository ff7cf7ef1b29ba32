"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np

from semcomsim.tensor import Tensor


def numeric_grad(f, arrays, weight, h=1e-5):
    """Central differences of ``sum(f(*arrays) * weight)`` w.r.t. each array."""
    grads = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            orig = a[idx]
            a[idx] = orig + h
            fp = float(np.sum(f(*arrays) * weight))
            a[idx] = orig - h
            fm = float(np.sum(f(*arrays) * weight))
            a[idx] = orig
            g[idx] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def analytic_grad(op, arrays, weight):
    ts = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = op(*ts)
    loss = (out * Tensor(weight)).sum()
    loss.backward()
    return [t.grad if t.grad is not None else np.zeros_like(t.data) for t in ts]


def max_rel_err(a, b, floor=1e-7):
    """Largest elementwise relative error; entries where both sides are below
    ``floor`` in magnitude are skipped (an exact zero derivative has no scale)."""
    a, b = np.asarray(a), np.asarray(b)
    scale = np.maximum(np.abs(a), np.abs(b))
    keep = scale > floor
    if not keep.any():
        return 0.0
    return float((np.abs(a - b)[keep] / scale[keep]).max())


def gf2_rank(m):
    m = (np.asarray(m) % 2).astype(np.uint8).copy()
    rank, rows, cols = 0, m.shape[0], m.shape[1]
    for c in range(cols):
        piv = [r for r in range(rank, rows) if m[r, c]]
        if not piv:
            continue
        m[[rank, piv[0]]] = m[[piv[0], rank]]
        for r in range(rows):
            if r != rank and m[r, c]:
                m[r] ^= m[rank]
        rank += 1
    return rank


def all_codewords(H):
    n = H.shape[1]
    return np.array([c for c in itertools.product([0, 1], repeat=n) if not (H @ np.array(c) % 2).any()])


def ssim_bruteforce(x, y, peak, win=8):
    c1, c2 = (0.01 * peak) ** 2, (0.03 * peak) ** 2
    vals = []
    for i in range(x.shape[0] - win + 1):
        for j in range(x.shape[1] - win + 1):
            a = x[i:i + win, j:j + win].ravel()
            b = y[i:i + win, j:j + win].ravel()
            ma, mb = a.mean(), b.mean()
            va, vb = ((a - ma) ** 2).mean(), ((b - mb) ** 2).mean()
            cov = ((a - ma) * (b - mb)).mean()
            vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def _away_from_zero(rng, shape, margin=0.05):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-12) * margin, x)


def gradient_cases():
    """(name, op, input factory) for every differentiable tensor operation."""
    from semcomsim import tensor as T

    def conv_case(stride, padding, bias):
        def make(rng):
            arrs = [rng.standard_normal((2, 3, 5, 5)), rng.standard_normal((4, 3, 3, 3))]
            if bias:
                arrs.append(rng.standard_normal(4))
            return arrs

        def op(x, w, *b):
            return T.conv2d(x, w, b[0] if b else None, stride=stride, padding=padding)

        return op, make

    cases = [
        ("add", T.add, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("add_scalar", lambda a, b: T.add(a, b), lambda r: [r.standard_normal((3, 4)), r.standard_normal(())]),
        ("sub", T.sub, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("mul", T.mul, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("mul_scalar", T.mul, lambda r: [r.standard_normal((2, 3)), r.standard_normal(())]),
        ("matmul", T.matmul, lambda r: [r.standard_normal((3, 4)), r.standard_normal((4, 2))]),
        ("linear", T.linear, lambda r: [r.standard_normal((3, 4)), r.standard_normal((4, 5)), r.standard_normal(5)]),
        ("relu", T.relu, lambda r: [_away_from_zero(r, (3, 5))]),
        ("silu", T.silu, lambda r: [r.standard_normal((3, 5)) * 2]),
        ("tanh", T.tanh, lambda r: [r.standard_normal((3, 5))]),
        ("reshape", lambda x: T.reshape(x, (6, 2)), lambda r: [r.standard_normal((3, 4))]),
        ("transpose", lambda x: T.transpose(x, (2, 0, 1)), lambda r: [r.standard_normal((2, 3, 4))]),
        ("concat", lambda a, b: T.concat([a, b], axis=1),
         lambda r: [r.standard_normal((2, 3, 2)), r.standard_normal((2, 1, 2))]),
        ("sum", T.sum_all, lambda r: [r.standard_normal((3, 4))]),
        ("mean", T.mean_all, lambda r: [r.standard_normal((3, 4))]),
        ("mse", T.mse, lambda r: [r.standard_normal((3, 4)), r.standard_normal((3, 4))]),
        ("conv2d", *conv_case(1, 1, True)),
        ("conv2d_stride2", *conv_case(2, 1, True)),
        ("conv2d_nopad_nobias", *conv_case(1, 0, False)),
        ("group_norm", lambda x, g, b: T.group_norm(x, 2, g, b),
         lambda r: [r.standard_normal((2, 4, 3, 3)), r.standard_normal(4), r.standard_normal(4)]),
        ("group_norm_plain", lambda x: T.group_norm(x, 1), lambda r: [r.standard_normal((2, 3, 2, 2))]),
        ("channel_affine", T.channel_affine,
         lambda r: [r.standard_normal((2, 3, 2, 2)), r.standard_normal((2, 3)), r.standard_normal((2, 3))]),
        ("avg_pool2d", lambda x: T.avg_pool2d(x, 2), lambda r: [r.standard_normal((2, 2, 4, 4))]),
        ("nearest_upsample2d", lambda x: T.nearest_upsample2d(x, 2), lambda r: [r.standard_normal((2, 2, 2, 3))]),
        ("gather_rows", lambda t: T.gather_rows(t, np.array([2, 0, 2, 1])), lambda r: [r.standard_normal((3, 4))]),
    ]
    return cases


def gradcheck_op(op, make, rng, h=1e-5):
    arrays = make(rng)
    out = op(*[Tensor(a) for a in arrays])
    weight = rng.standard_normal(out.shape)

    def f(*arrs):
        return op(*[Tensor(a) for a in arrs]).data

    num = numeric_grad(f, [a.copy() for a in arrays], weight, h)
    ana = analytic_grad(op, arrays, weight)
    return max(max_rel_err(a, n) for a, n in zip(ana, num))
