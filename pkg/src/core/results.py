"""Result records shared by the tests, the benchmark harness and the CLI."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Mapping, Optional

import numpy as np
from numpy.typing import NDArray

from src.core.errors import NumericError


class Method(Enum):
    """Two-sample test methods."""
    DW = "dw"
    DW_Z = "dw-z"
    KNN = "knn"
    ENERGY = "energy"
    MMD = "mmd"


@dataclass
class TestResult:
    """Outcome of one two-sample test."""
    __test__ = False  # keep pytest from collecting this class

    method: Method
    statistic: float
    p_value: float
    replicates: int
    parameters: Dict[str, Any] = field(default_factory=dict)
    permuted_stats: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.statistic):
            raise NumericError(f"{self.method.value}: statistic is not finite")
        if not 0.0 < self.p_value <= 1.0:
            raise NumericError(f"{self.method.value}: p-value {self.p_value} outside (0, 1]")

    def to_dict(self) -> Dict[str, Any]:
        """Convert result to a flat dictionary."""
        data: Dict[str, Any] = {
            "method": self.method.value,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "B": self.replicates,
        }
        data.update(self.parameters)
        return data


def format_report(values: Mapping[str, Any]) -> str:
    """Flat key=value text block; floats keep full precision, None is NA."""
    lines = []
    for key, value in values.items():
        if isinstance(value, float):
            value = repr(value)
        elif value is None:
            value = "NA"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"
