from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from lerl.errors import DomainError, NumericalError
from lerl.numeric.autodiff import GradTape, Tensor, tensors

ABS_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    flagged: list[tuple[str, tuple[int, ...], float, float]] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def relative_error(analytic: float, numeric: float, floor: float = ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def finite_diff_check(
    loss_fn: Callable[[dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    epsilon: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare tape gradients against central differences, entry by entry.

    ``loss_fn`` receives a dict of leaf tensors and must be deterministic.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise DomainError("epsilon must lie in (0, 1e-2]")
    base = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    leaves = tensors(base)
    with GradTape() as tape:
        loss = loss_fn(leaves)
    analytic = tape.gradient(loss, leaves)
    frozen = tensors(base)

    def probe(name, idx, delta):
        arr = base[name].copy()
        arr[idx] += delta
        trial = dict(frozen)
        trial[name] = Tensor(arr)
        try:
            val = loss_fn(trial).item()
        except NumericalError as exc:
            raise NumericalError(f"non-finite loss probing {name}{idx}") from exc
        if not math.isfinite(val):
            raise NumericalError(f"non-finite loss probing {name}{idx}")
        return val

    report = GradCheckReport(max_rel_error={}, tol=tol)
    for name, arr in base.items():
        worst = 0.0
        for idx in np.ndindex(arr.shape):
            num = (probe(name, idx, epsilon) - probe(name, idx, -epsilon)) / (2.0 * epsilon)
            ana = float(analytic[name][idx])
            err = relative_error(ana, num)
            worst = max(worst, err)
            if err > tol:
                report.flagged.append((name, idx, ana, num))
        report.max_rel_error[name] = worst
    return report
