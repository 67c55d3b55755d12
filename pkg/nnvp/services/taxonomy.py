from dataclasses import dataclass
from typing import FrozenSet, List, Optional

import numpy as np

from nnvp.core.exceptions import ConfigurationError, ProbabilityVectorError
from nnvp.schemas import TaxonomyKind, TaxonomyRule

# "above theta" means >= theta - THRESHOLD_TOL; absorbs rounding in differences like 0.7 - 0.2
THRESHOLD_TOL = 1e-12
SUM_TOL = 1e-6


@dataclass(frozen=True)
class CategoryKey:
    """
    Cell of a taxonomy partition.

    V1: argmax only; V2-V4: argmax and the above/below flag; V5: members only.
    """
    kind: TaxonomyKind
    argmax: Optional[int] = None
    above: Optional[bool] = None
    members: Optional[FrozenSet[int]] = None

    def coarsen(self) -> "CategoryKey":
        """Drop the threshold flag of a V2-V4 key, giving the V1 key it refines."""
        if self.kind in (TaxonomyKind.v1, TaxonomyKind.v5):
            return self
        return CategoryKey(kind=TaxonomyKind.v1, argmax=self.argmax)

    def __str__(self) -> str:
        name = self.kind.value.upper()
        if self.kind == TaxonomyKind.v1:
            return f"{name}:{self.argmax}"
        if self.kind == TaxonomyKind.v5:
            return f"{name}:{{{','.join(str(j) for j in sorted(self.members))}}}"
        return f"{name}:{self.argmax}:{'above' if self.above else 'below'}"


def max_categories(kind: TaxonomyKind, num_classes: int) -> int:
    if kind == TaxonomyKind.v1:
        return num_classes
    if kind == TaxonomyKind.v5:
        return 2 ** num_classes
    return 2 * num_classes


def _check_outputs(outputs: np.ndarray) -> np.ndarray:
    O = np.asarray(outputs, dtype=np.float64)
    if O.ndim != 2 or O.shape[1] < 2:
        raise ProbabilityVectorError(f"expected probability vectors of length >= 2, got shape {O.shape}")
    if not np.all(np.isfinite(O)):
        raise ProbabilityVectorError("probability vector has non-finite entries")
    if np.any(O < -THRESHOLD_TOL):
        raise ProbabilityVectorError("probability vector has negative entries")
    sums = O.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SUM_TOL):
        row = int(np.argmax(np.abs(sums - 1.0)))
        raise ProbabilityVectorError(f"probability vector sums to {sums[row]:.6f}, not 1")
    return O


def categorize(rule: TaxonomyRule, outputs: np.ndarray) -> List[CategoryKey]:
    """Category key of every row of an (n, c) matrix of network outputs."""
    O = _check_outputs(outputs)
    try:
        rule.check_classes(O.shape[1])
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc

    kind, theta = rule.kind, rule.theta
    if kind == TaxonomyKind.v5:
        above = O >= theta - THRESHOLD_TOL
        return [CategoryKey(kind=kind, members=frozenset(np.flatnonzero(row).tolist())) for row in above]

    # np.argmax takes the lowest index on ties
    winners = np.argmax(O, axis=1)
    if kind == TaxonomyKind.v1:
        return [CategoryKey(kind=kind, argmax=int(j)) for j in winners]

    ordered = np.sort(O, axis=1)
    first, second = ordered[:, -1], ordered[:, -2]
    if kind == TaxonomyKind.v2:
        score = first
    elif kind == TaxonomyKind.v3:
        score = second
    else:
        score = first - second
    flags = score >= theta - THRESHOLD_TOL
    return [CategoryKey(kind=kind, argmax=int(j), above=bool(f)) for j, f in zip(winners, flags)]


def category_of(rule: TaxonomyRule, outputs: np.ndarray) -> CategoryKey:
    """Category key of a single probability vector."""
    o = np.asarray(outputs, dtype=np.float64)
    if o.ndim != 1:
        raise ProbabilityVectorError(f"expected a single probability vector, got shape {o.shape}")
    return categorize(rule, o.reshape(1, -1))[0]
