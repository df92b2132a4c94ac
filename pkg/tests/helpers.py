"""Shared samplers for the test suite."""

from cpmschwarz.theory import SchwarzConfig1D


def random_config(rng, equal=False):
    """A configuration with 0 < d1 + d2 < min(l1, l2) and c in [1e-2, 1e2]."""
    c = 10 ** rng.uniform(-2, 2)
    l1 = rng.uniform(0.1, 10.0)
    l2 = l1 if equal else rng.uniform(0.1, 10.0)
    total = rng.uniform(0.01, 0.99) * min(l1, l2)
    w = 0.5 if equal else rng.uniform(0.01, 0.99)
    return SchwarzConfig1D.from_lengths(c, l1, l2, w * total, (1 - w) * total)
