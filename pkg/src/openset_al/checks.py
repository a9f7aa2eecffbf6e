"""Fast self-check suite: closed-form identities, special-function
recurrences, and gradient spot checks on a tiny network.

Each check returns (name, passed, detail) so the CLI can print one line
per property.  The whole suite runs in a few seconds.  Checks call the
library through module attributes (``evidential.data_uncertainty`` and
friends), so fault-injection tests can monkeypatch a single operation and
watch the right property fail.
"""

from __future__ import annotations

import numpy as np

from . import evidential, model

__all__ = ["run_checks", "CHECK_NAMES"]

CHECK_NAMES = (
    "decomposition_identity",
    "digamma_recurrence",
    "log_gamma_recurrence",
    "jsd_properties",
    "kl_to_uniform",
    "gradient_spot_check",
)


def _random_alphas(rng, count, classes):
    out = []
    for _ in range(count):
        c = rng.choice(classes)
        out.append(np.exp(rng.uniform(-6, 6, size=c)))
    return out


def _check_decomposition(rng):
    worst = 0.0
    for alpha in _random_alphas(rng, 200, [2, 3, 10]):
        total = evidential.data_uncertainty(alpha) + evidential.distribution_uncertainty(
            alpha
        )
        target = evidential.entropy(evidential.expected_probs(alpha))
        worst = max(worst, abs(total - target))
    return worst < 1e-9, f"max |u_data + u_dist - H| = {worst:.3e}"


def _check_digamma(rng):
    x = np.logspace(-2, 4, 400)
    err = np.max(np.abs(evidential.digamma(x + 1) - (evidential.digamma(x) + 1 / x)))
    return err < 1e-10, f"max recurrence error = {err:.3e}"


def _check_log_gamma(rng):
    x = np.logspace(-2, 4, 400)
    err = np.max(
        np.abs(evidential.log_gamma(x + 1) - (evidential.log_gamma(x) + np.log(x)))
    )
    return err < 1e-10, f"max recurrence error = {err:.3e}"


def _check_jsd(rng):
    ok = True
    worst = 0.0
    for _ in range(50):
        c = rng.choice([2, 3, 5])
        p = rng.dirichlet(np.ones(c))
        q = rng.dirichlet(np.ones(c))
        d = evidential.jsd(p, q)
        ok &= abs(d - evidential.jsd(q, p)) < 1e-12
        ok &= -1e-12 <= d <= 1 + 1e-12
        worst = max(worst, abs(evidential.jsd(p, p)))
    edge = abs(evidential.jsd([1.0, 0.0], [0.0, 1.0]) - 1.0)
    ok &= worst < 1e-12 and edge < 1e-12
    return bool(ok), f"self-jsd max = {worst:.1e}, disjoint gap = {edge:.1e}"


def _check_kl(rng):
    ok = abs(evidential.kl_dirichlet_to_uniform(np.ones(5))) < 1e-12
    vals = [
        evidential.kl_dirichlet_to_uniform(a) for a in _random_alphas(rng, 50, [2, 4])
    ]
    ok &= all(v >= -1e-10 for v in vals)
    return bool(ok), f"min KL = {min(vals):.3e}"


def _check_gradients(rng):
    m = model.init_model(4, 3, hidden_widths=(6,), seed=int(rng.integers(1 << 31)))
    x = rng.normal(size=(3, 4))
    y = rng.integers(0, 3, size=3)
    _, grads = model.edl_loss(m, x, y)
    params = m.flat_params()
    h = 1e-5
    worst = 0.0
    # spot-check a handful of coordinates per array
    for arr, g in zip(params, grads):
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for idx in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            orig = flat[idx]
            flat[idx] = orig + h
            fp, _ = model.edl_loss(m, x, y)
            flat[idx] = orig - h
            fm, _ = model.edl_loss(m, x, y)
            flat[idx] = orig
            num = (fp - fm) / (2 * h)
            denom = max(abs(num), abs(gflat[idx]), 1e-6)
            worst = max(worst, abs(num - gflat[idx]) / denom)
    return worst < 1e-4, f"max relative gradient error = {worst:.3e}"


def run_checks(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run every invariant check; returns (name, passed, detail) rows."""
    rng = np.random.default_rng(seed)
    checks = {
        "decomposition_identity": _check_decomposition,
        "digamma_recurrence": _check_digamma,
        "log_gamma_recurrence": _check_log_gamma,
        "jsd_properties": _check_jsd,
        "kl_to_uniform": _check_kl,
        "gradient_spot_check": _check_gradients,
    }
    results = []
    for name in CHECK_NAMES:
        try:
            passed, detail = checks[name](rng)
        except Exception as exc:  # a crash counts as a failure, not an abort
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, passed, detail))
    return results
