"""Finite-difference gradient checks for every differentiable kernel.

Each check builds a random small instance, reduces the op's output to a
scalar, and compares the backward pass against central differences.
Inputs are sampled away from the non-smooth points of relu, maxpool and
the distance kernel so the finite-difference quotient stays meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, GruParams, grad_check
from .rng import Xoshiro256, derive_seed

TOLERANCE = 1e-4


def _away_from_zero(rng: Xoshiro256, shape, margin: float = 0.05) -> np.ndarray:
    """Uniform values with |x| >= margin, keeping kinks out of FD reach."""
    x = rng.uniform_array(shape, -1.0, 1.0)
    return np.where(x >= 0, x + margin, x - margin)


def _check_add(seed):
    rng = Xoshiro256(seed)
    a, b = rng.uniform_array((3, 4), -1, 1), rng.uniform_array((3, 4), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.add(v[0], v[1]), v[1])), [a, b], TOLERANCE)


def _check_sub_scale(seed):
    rng = Xoshiro256(seed)
    a, b = rng.uniform_array((2, 5), -1, 1), rng.uniform_array((2, 5), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.scale(ad.sub(v[0], v[1]), 1.7)), [a, b], TOLERANCE)


def _check_mul_scalar(seed):
    rng = Xoshiro256(seed)
    a = rng.uniform_array((4,), -1, 1)
    s = np.asarray(rng.uniform(0.5, 2.0))
    return grad_check(lambda v: ad.sum_all(ad.mul_scalar(v[0], v[1])), [a, s], TOLERANCE)


def _check_relu(seed):
    rng = Xoshiro256(seed)
    a = _away_from_zero(rng, (3, 3))
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.relu(v[0]), v[0])), [a], TOLERANCE)


def _check_sigmoid_tanh(seed):
    rng = Xoshiro256(seed)
    a = rng.uniform_array((6,), -2, 2)
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.sigmoid(v[0]), ad.tanh(v[0]))),
                      [a], TOLERANCE)


def _check_log(seed):
    rng = Xoshiro256(seed)
    a = rng.uniform_array((5,), 0.5, 2.0)
    return grad_check(lambda v: ad.sum_all(ad.log(v[0])), [a], TOLERANCE)


def _check_matmul(seed):
    rng = Xoshiro256(seed)
    a, b = rng.uniform_array((3, 4), -1, 1), rng.uniform_array((4, 2), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.matmul(v[0], v[1])), [a, b], TOLERANCE)


def _check_matvec(seed):
    rng = Xoshiro256(seed)
    w, x = rng.uniform_array((3, 4), -1, 1), rng.uniform_array((4,), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.tanh(ad.matvec(v[0], v[1]))), [w, x], TOLERANCE)


def _check_add_rowvec(seed):
    rng = Xoshiro256(seed)
    a, b = rng.uniform_array((3, 4), -1, 1), rng.uniform_array((4,), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.sigmoid(ad.add_rowvec(v[0], v[1]))),
                      [a, b], TOLERANCE)


def _check_shape_ops(seed):
    rng = Xoshiro256(seed)
    a = rng.uniform_array((2, 3, 4), -1, 1)

    def f(v):
        x = ad.permute(ad.reshape(v[0], (2, 3, 2, 2)), (1, 0, 3, 2))
        return ad.sum_all(ad.mul(x, x))

    return grad_check(f, [a], TOLERANCE)


def _check_stack_index_pick(seed):
    rng = Xoshiro256(seed)
    a, b = rng.uniform_array((4,), -1, 1), rng.uniform_array((4,), -1, 1)

    def f(v):
        s = ad.stack0([v[0], v[1], v[0]])
        row = ad.index0(s, 2)
        return ad.pick(ad.tanh(row), 1)

    return grad_check(f, [a, b], TOLERANCE)


def _check_softmax(seed):
    rng = Xoshiro256(seed)
    logits = rng.uniform_array((5,), -2, 2)
    w = rng.uniform_array((5,), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.softmax(v[0]), v[1])),
                      [logits, w], TOLERANCE)


def _check_logpick_softmax(seed):
    # the exact composition REINFORCE differentiates
    rng = Xoshiro256(seed)
    logits = rng.uniform_array((4,), -2, 2)
    return grad_check(lambda v: ad.log(ad.pick(ad.softmax(v[0]), 2)), [logits], TOLERANCE)


def _check_neg_euclid(seed):
    rng = Xoshiro256(seed)
    m = rng.uniform_array((4, 3), -1, 1)
    h = rng.uniform_array((3,), 2.0, 3.0)  # far from every row
    w = rng.uniform_array((4,), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.rowwise_neg_euclid(v[0], v[1]), v[2])),
                      [m, h, w], TOLERANCE)


def _check_conv(seed):
    rng = Xoshiro256(seed)
    x = rng.uniform_array((1, 4, 4), -1, 1)
    k = rng.uniform_array((2, 1, 3, 3), -1, 1)
    b = rng.uniform_array((2,), -1, 1)
    return grad_check(lambda v: ad.sum_all(ad.tanh(ad.conv2d_3x3(v[0], v[1], v[2]))),
                      [x, k, b], TOLERANCE)


def _check_maxpool(seed):
    rng = Xoshiro256(seed)
    # spread values so window maxima are unique and stay put under FD steps
    x = rng.uniform_array((2, 4, 4), -1, 1) + np.arange(32).reshape(2, 4, 4) * 0.01
    return grad_check(lambda v: ad.sum_all(ad.mul(ad.maxpool2(v[0]), ad.maxpool2(v[0]))),
                      [x], TOLERANCE)


def _check_batchnorm_train(seed):
    rng = Xoshiro256(seed)
    x = rng.uniform_array((4, 3), -1, 1)
    gamma = rng.uniform_array((3,), 0.5, 1.5)
    beta = rng.uniform_array((3,), -0.5, 0.5)

    def f(v):
        state = BatchNormState.fresh(3)
        return ad.sum_all(ad.tanh(ad.batchnorm(v[0], v[1], v[2], state, train=True)))

    return grad_check(f, [x, gamma, beta], TOLERANCE)


def _check_batchnorm_eval(seed):
    rng = Xoshiro256(seed)
    x = rng.uniform_array((4, 3), -1, 1)
    gamma = rng.uniform_array((3,), 0.5, 1.5)
    beta = rng.uniform_array((3,), -0.5, 0.5)
    mean = rng.uniform_array((3,), -0.2, 0.2)
    var = rng.uniform_array((3,), 0.5, 1.5)

    def f(v):
        state = BatchNormState(mean=mean.copy(), var=var.copy())
        return ad.sum_all(ad.batchnorm(v[0], v[1], v[2], state, train=False))

    return grad_check(f, [x, gamma, beta], TOLERANCE)


def _check_gru(seed):
    rng = Xoshiro256(seed)
    d_in, d_h, steps = 2, 3, 3
    xs = rng.uniform_array((steps, d_in), -1, 1)
    h0 = rng.uniform_array((d_h,), -0.5, 0.5)
    mats = [rng.uniform_array((d_in, d_h), -0.7, 0.7) for _ in range(3)]
    umats = [rng.uniform_array((d_h, d_h), -0.7, 0.7) for _ in range(3)]
    biases = [rng.uniform_array((d_h,), -0.3, 0.3) for _ in range(3)]

    def f(v):
        xs_n, h = v[0], v[1]
        p = GruParams(wz=v[2], uz=v[3], bz=v[4], wr=v[5], ur=v[6], br=v[7],
                      wh=v[8], uh=v[9], bh=v[10])
        for t in range(steps):
            h = ad.gru_cell(ad.index0(xs_n, t), h, p)
        return ad.sum_all(h)

    points = [xs, h0, mats[0], umats[0], biases[0], mats[1], umats[1], biases[1],
              mats[2], umats[2], biases[2]]
    return grad_check(f, points, TOLERANCE)


CHECKS = {
    "add_mul": _check_add,
    "sub_scale": _check_sub_scale,
    "mul_scalar": _check_mul_scalar,
    "relu": _check_relu,
    "sigmoid_tanh": _check_sigmoid_tanh,
    "log": _check_log,
    "matmul": _check_matmul,
    "matvec": _check_matvec,
    "add_rowvec": _check_add_rowvec,
    "reshape_permute": _check_shape_ops,
    "stack_index_pick": _check_stack_index_pick,
    "softmax": _check_softmax,
    "log_pick_softmax": _check_logpick_softmax,
    "rowwise_neg_euclid": _check_neg_euclid,
    "conv2d_3x3": _check_conv,
    "maxpool2": _check_maxpool,
    "batchnorm_train": _check_batchnorm_train,
    "batchnorm_eval": _check_batchnorm_eval,
    "gru_cell": _check_gru,
}


@dataclass
class SuiteResult:
    op: str
    max_rel_err: float
    passed: bool


def run_suite(seeds: int = 100, master_seed: int = 2024) -> list[SuiteResult]:
    """Run every check over `seeds` random instances; one row per op."""
    results = []
    for name, check in CHECKS.items():
        worst = 0.0
        ok = True
        for i in range(seeds):
            report = check(derive_seed(master_seed, name, i))
            worst = max(worst, report.max_rel_err)
            ok = ok and report.passed
        results.append(SuiteResult(op=name, max_rel_err=worst, passed=ok))
    return results
