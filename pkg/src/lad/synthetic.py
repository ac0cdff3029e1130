"""Seeded synthetic data for benchmarks and injection experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lad.temporal import TimeSeriesPanel


def gaussian_matrix(n: int, d: int, seed: int = 0) -> np.ndarray:
    """Standard Gaussian ``(n, d)`` matrix."""
    return np.random.default_rng(seed).standard_normal((n, d))


@dataclass(frozen=True)
class InjectedPanel:
    panel: TimeSeriesPanel
    injected: np.ndarray
    onset: int


def injection_panel(
    n: int = 100,
    length: int = 60,
    d: int = 2,
    n_injected: int = 5,
    onset: int = 20,
    shift: float = 5.0,
    noise: float = 0.1,
    seed: int = 0,
) -> InjectedPanel:
    """Cumulative-count-like panel with a few series diverging from ``onset``.

    Every series follows a shared logistic growth curve per feature, scaled
    by multiplicative noise ``1 + noise * eps`` drawn afresh at each step, so
    the cross-sectional standard deviation at step ``t`` is ``noise`` times
    the curve.  Injected series are raised by ``shift`` of those standard
    deviations from ``onset`` on.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    mid = rng.uniform(0.3, 0.6, size=d) * length
    rate = rng.uniform(4.0, 8.0, size=d) / length
    level = rng.uniform(50.0, 500.0, size=d)
    curve = level / (1.0 + np.exp(-rate * (t[:, None] - mid)))
    values = curve[None, :, :] * (1.0 + noise * rng.standard_normal((n, length, d)))
    injected = np.sort(rng.choice(n, size=n_injected, replace=False))
    values[injected, onset:, :] += shift * noise * curve[None, onset:, :]
    ids = tuple(f"s{i:04d}" for i in range(n))
    return InjectedPanel(TimeSeriesPanel(values, ids), injected, onset)
