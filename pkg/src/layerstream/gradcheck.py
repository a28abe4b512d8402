"""Central finite-difference checks of the analytic gradients.

Three suites over random small networks and batches:

* ``log_prob``: d log pi(a|s) / d params for the policy head
* ``value_loss``: d 0.5*mean((V - R)^2) / d params
* ``surrogate``: d (clipped surrogate loss + entropy bonus) / d params

The error measure is ``|g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|)``
in the Euclidean norm over the whole parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import NetSpec, Network, masked_softmax
from .ppo import log_prob_and_grad, policy_loss_and_grad, value_loss_and_grad
from .rng import XorShift64Star

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    suite: str
    seed: int
    rel_error: float
    num_params: int

    @property
    def passed(self) -> bool:
        return self.rel_error < TOLERANCE


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.empty_like(params)
    p = params.copy()
    for k in range(p.size):
        orig = p[k]
        p[k] = orig + h
        fp = f(p)
        p[k] = orig - h
        fm = f(p)
        p[k] = orig
        g[k] = (fp - fm) / (2.0 * h)
    return g


def _random_case(seed: int, head: str):
    rng = XorShift64Star(seed)
    n_in = 3 + rng.below(6)
    hidden = tuple(3 + rng.below(8) for _ in range(1 + rng.below(2)))
    out = 2 if head == "policy" else 1
    net = Network.init(NetSpec((n_in, *hidden, out), head), rng.next_u64(), output_scale=1.0)
    # biases start at zero; randomise them too so every parameter is exercised
    net.params += np.array([rng.uniform(-0.5, 0.5) for _ in range(net.params.size)])
    batch = 4 + rng.below(12)
    X = np.array([[rng.normal() for _ in range(n_in)] for _ in range(batch)])
    return rng, net, X


def check_log_prob(seed: int, perturb: float = 0.0) -> CheckResult:
    rng, net, X = _random_case(seed, "policy")
    x, a = X[0], rng.below(2)

    def f(p):
        probs = masked_softmax(Network(net.spec, p).forward_batch(x)[0])
        return float(np.log(probs[0, a]))

    _, g = log_prob_and_grad(net, x, a)
    g = g + perturb * np.abs(g).max()
    return CheckResult("log_prob", seed, rel_error(g, numeric_grad(f, net.params)), net.params.size)


def check_value_loss(seed: int, perturb: float = 0.0) -> CheckResult:
    rng, net, X = _random_case(seed, "value")
    returns = np.array([rng.normal() for _ in range(X.shape[0])])
    _, g = value_loss_and_grad(net, X, returns)
    g = g + perturb * np.abs(g).max()
    num = numeric_grad(lambda p: value_loss_and_grad(net, X, returns, params=p)[0], net.params)
    return CheckResult("value_loss", seed, rel_error(g, num), net.params.size)


def check_surrogate(seed: int, clip_eps: float = 0.2, entropy_coef: float = 0.01,
                    perturb: float = 0.0) -> CheckResult:
    rng, net, X = _random_case(seed, "policy")
    B = X.shape[0]
    actions = np.array([rng.below(2) for _ in range(B)])
    masks = np.ones((B, 2), dtype=bool)
    # a few rows with only the BL action available
    for k in range(B):
        if rng.random() < 0.2:
            masks[k, 1] = False
            actions[k] = 0
    probs = masked_softmax(net.forward_batch(X)[0], masks)
    logp = np.log(probs[np.arange(B), actions])
    # old log-probs spread ratios on both sides of the clip range, away from the kinks
    old = np.empty(B)
    for k in range(B):
        while True:
            r = np.exp(rng.uniform(-0.6, 0.6))
            if min(abs(r - (1 - clip_eps)), abs(r - (1 + clip_eps)), abs(r - 1.0)) > 0.02:
                break
        old[k] = logp[k] - np.log(r)
    adv = np.array([rng.normal() for _ in range(B)])

    def f(p):
        return policy_loss_and_grad(net, X, actions, masks, old, adv, clip_eps, entropy_coef, params=p)[0]

    _, g, _ = policy_loss_and_grad(net, X, actions, masks, old, adv, clip_eps, entropy_coef)
    g = g + perturb * np.abs(g).max()
    return CheckResult("surrogate", seed, rel_error(g, numeric_grad(f, net.params)), net.params.size)


SUITES = {"log_prob": check_log_prob, "value_loss": check_value_loss, "surrogate": check_surrogate}


def run_all(seed: int = 0, count: int = 20, perturb: float = 0.0) -> list[CheckResult]:
    results = []
    for name, fn in SUITES.items():
        for k in range(count):
            results.append(fn(seed * 1000 + k, perturb=perturb))
    return results
