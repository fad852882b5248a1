"""Central finite-difference certification of the autodiff backward rules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad

DEFAULT_H = 1e-5
DEFAULT_TOL = 1e-5
MAX_COORDS = 200


@dataclass(frozen=True)
class GradReport:
    op_name: str
    max_rel_error: float
    max_abs_error: float
    passed: bool
    h: float
    detail: str = ""

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.op_name},{self.max_rel_error:.3e},{status}"


def grad_check(op: Callable[..., ad.Node], inputs: list[np.ndarray], h: float = DEFAULT_H,
               tol: float = DEFAULT_TOL, seed: int = 0, name: str | None = None,
               max_coords: int = MAX_COORDS) -> GradReport:
    """Compare backward() against central differences of ``sum(op(*inputs) * R)``.

    ``R`` is a fixed random projection so every output element contributes.
    Up to ``max_coords`` coordinates of each input are perturbed.
    """
    name = name or getattr(op, "__name__", "op")
    if not 1e-6 <= h <= 1e-4:
        raise ValueError(f"perturbation h={h} outside [1e-6, 1e-4]")
    rng = np.random.default_rng(seed)
    inputs = [np.array(x, dtype=np.float64) for x in inputs]

    out_shape = op(*inputs).value.shape
    proj = rng.standard_normal(out_shape)

    def scalar(*xs):
        return float(np.sum(op(*xs).value * proj))

    leaves = [ad.param(x) for x in inputs]
    out = op(*leaves)
    ad.backward(ad.sum_(ad.mul(out, ad.const(proj))) if out_shape else out * float(proj))

    max_rel = max_abs = 0.0
    worst = ""
    for idx, (x, leaf) in enumerate(zip(inputs, leaves)):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)
        flat_n = x.size
        coords = rng.choice(flat_n, size=min(flat_n, max_coords), replace=False)
        for flat in np.sort(coords):
            pos = tuple(int(i) for i in np.unravel_index(flat, x.shape))
            xp, xm = x.copy(), x.copy()
            xp[pos] += h
            xm[pos] -= h
            args_p = inputs[:idx] + [xp] + inputs[idx + 1:]
            args_m = inputs[:idx] + [xm] + inputs[idx + 1:]
            numeric = (scalar(*args_p) - scalar(*args_m)) / (2 * h)
            a = float(analytic[pos])
            if not (np.isfinite(a) and np.isfinite(numeric)):
                return GradReport(name, float("inf"), float("inf"), False, h,
                                  f"non-finite gradient at input {idx} {pos}: analytic={a} numeric={numeric}")
            abs_err = abs(a - numeric)
            rel = abs_err / max(abs(a), abs(numeric), 1e-8)
            max_abs = max(max_abs, abs_err)
            if rel > max_rel:
                max_rel = rel
                worst = f"input {idx} at {pos}: analytic={a:.6e} numeric={numeric:.6e}"
    return GradReport(name, max_rel, max_abs, max_rel < tol, h, worst)


def _cases() -> dict[str, Callable[[np.random.Generator], tuple[Callable, list]]]:
    def rn(rng, *shape):
        return rng.standard_normal(shape)

    return {
        "add": lambda r: (ad.add, [rn(r, 3, 4), rn(r, 3, 4)]),
        "sub": lambda r: (ad.sub, [rn(r, 3, 4), rn(r, 3, 4)]),
        "mul": lambda r: (ad.mul, [rn(r, 3, 4), rn(r, 3, 4)]),
        "mul_scalar": lambda r: (lambda x: ad.mul_scalar(x, s=1.7), [rn(r, 3, 4)]),
        "leaky_relu": lambda r: (lambda x: ad.leaky_relu(x, slope=0.2), [rn(r, 2, 3, 4)]),
        "tanh": lambda r: (ad.tanh, [rn(r, 2, 3, 4)]),
        "reshape": lambda r: (lambda x: ad.reshape(x, shape=(6, 4)), [rn(r, 2, 3, 4)]),
        "sum": lambda r: (ad.sum_, [rn(r, 3, 5)]),
        "mean": lambda r: (ad.mean, [rn(r, 3, 5)]),
        "sum_sq": lambda r: (ad.sum_sq, [rn(r, 3, 5)]),
        "l1_loss": lambda r: (ad.l1_loss, [rn(r, 2, 3, 4), rn(r, 2, 3, 4)]),
        "mse_const": lambda r: (lambda x: ad.mse_const(x, target=1.0), [rn(r, 2, 3, 4)]),
        "matmul": lambda r: (ad.matmul, [rn(r, 3, 4), rn(r, 4, 5)]),
        "linear": lambda r: (ad.linear, [rn(r, 2, 5), rn(r, 3, 5), rn(r, 3)]),
        "psi_weights": lambda r: (lambda z, w, b: ad.psi_weights(z, w, b, shape=(2, 3, 3, 3)),
                                  [rn(r, 4), rn(r, 54, 4), rn(r, 54)]),
        "unfold": lambda r: (lambda x: ad.unfold(x, kh=3, kw=3), [rn(r, 1, 2, 5, 5)]),
        "standardize_local": lambda r: (lambda x: ad.standardize_local(x, kh=3, kw=3, eps=1e-5),
                                        [rn(r, 1, 2, 5, 5)]),
        "standardize_instance": lambda r: (lambda x: ad.standardize_instance(x, eps=1e-5),
                                           [rn(r, 2, 3, 4, 4)]),
        "inject_adain": lambda r: (lambda c, s: ad.inject_adain(c, s, eps=1e-5),
                                   [rn(r, 1, 3, 4, 4), rn(r, 1, 3, 4, 4)]),
        "adaptive_conv": lambda r: (ad.adaptive_conv,
                                    [rn(r, 1, 4, 4, 2, 3, 3), rn(r, 3, 2, 3, 3), rn(r, 3)]),
        "conv2d": lambda r: (ad.conv2d, [rn(r, 2, 2, 5, 5), rn(r, 3, 2, 3, 3), rn(r, 3)]),
        "concat_channels": lambda r: (ad.concat_channels, [rn(r, 1, 2, 3, 3), rn(r, 1, 3, 3, 3)]),
        "avg_pool2": lambda r: (ad.avg_pool2, [rn(r, 1, 2, 4, 4)]),
        "upsample2": lambda r: (ad.upsample2, [rn(r, 1, 2, 3, 3)]),
        "global_avg_pool": lambda r: (ad.global_avg_pool, [rn(r, 2, 3, 4, 4)]),
    }


GRADCHECK_CASES = _cases()


def run_gradcheck(ops: list[str] | None = None, h: float = DEFAULT_H, tol: float = DEFAULT_TOL,
                  seed: int = 0) -> list[GradReport]:
    names = sorted(GRADCHECK_CASES) if not ops else ops
    reports = []
    for name in names:
        if name not in GRADCHECK_CASES:
            raise KeyError(f"no gradcheck case for op {name!r}")
        rng = np.random.default_rng([seed, sorted(GRADCHECK_CASES).index(name)])
        fn, inputs = GRADCHECK_CASES[name](rng)
        reports.append(grad_check(fn, inputs, h=h, tol=tol, seed=seed, name=name))
    return reports
