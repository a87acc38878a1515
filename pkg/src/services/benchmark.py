"""Monte-Carlo benchmark: p-value ECDFs and rejection rates per method."""

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from src.core.config import Config
from src.core.errors import DataError
from src.core.results import Method
from src.services.baselines import run_baseline
from src.services.dataset import (
    ImageScenario,
    ImageTemplate,
    LabeledSample,
    default_radius,
    gen_gaussian_direction,
    gen_gaussian_location,
    gen_gaussian_null,
    gen_image_sample,
    gen_resample_null,
    write_csv,
)
from src.services.dwtest import DwConfig, run_dw_test, run_dw_z_test
from src.services.manifold import estimate_intrinsic_dimension

logger = logging.getLogger(__name__)

DIRECTION_SCALE = 1.25


class Scenario(Enum):
    """Data-generating designs."""
    GAUSSIAN_NULL = "gaussian-null"
    LOCATION = "location"
    DIRECTION = "direction"
    IMAGE_NULL = "image-null"
    IMAGE_LOCATION = "image-location"
    IMAGE_DIRECTION = "image-direction"
    RESAMPLE_NULL = "resample-null"

    @property
    def is_gaussian(self) -> bool:
        return self in (Scenario.GAUSSIAN_NULL, Scenario.LOCATION, Scenario.DIRECTION)

    @property
    def image_kind(self) -> Optional[ImageScenario]:
        return {
            Scenario.IMAGE_NULL: ImageScenario.NULL,
            Scenario.IMAGE_LOCATION: ImageScenario.LOCATION,
            Scenario.IMAGE_DIRECTION: ImageScenario.DIRECTION,
        }.get(self)


@dataclass
class ScenarioConfig:
    """One design and its parameters."""

    scenario: Scenario
    n1: int
    n0: int
    d: Optional[int] = None
    radius: Optional[float] = None
    scale: float = DIRECTION_SCALE
    template: Optional[ImageTemplate] = None
    pool: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        if self.scenario.is_gaussian and self.d is None:
            raise DataError(f"scenario '{self.scenario.value}' needs --d")
        if self.scenario is Scenario.RESAMPLE_NULL and self.pool is None:
            raise DataError("resample-null needs a pool (--input)")
        if self.scenario.image_kind is not None and self.template is None:
            self.template = ImageTemplate.default_digit()

    def generate(self, seed: int) -> LabeledSample:
        """Draw one labeled dataset."""
        s = self.scenario
        if s is Scenario.GAUSSIAN_NULL:
            return gen_gaussian_null(self.n1, self.n0, self.d, seed)
        if s is Scenario.LOCATION:
            radius = self.radius if self.radius is not None else default_radius(self.d)
            return gen_gaussian_location(self.n1, self.n0, self.d, radius, seed)
        if s is Scenario.DIRECTION:
            return gen_gaussian_direction(self.n1, self.n0, self.d, self.scale, seed)
        if s is Scenario.RESAMPLE_NULL:
            return gen_resample_null(self.pool, self.n1, self.n0, seed)
        return gen_image_sample(self.template, s.image_kind, self.n1, self.n0, seed)

    def describe(self) -> Dict[str, str]:
        info = {"scenario": self.scenario.value, "n1": str(self.n1), "n0": str(self.n0)}
        if self.d is not None:
            info["d"] = str(self.d)
        if self.scenario is Scenario.LOCATION:
            info["radius"] = str(self.radius if self.radius is not None else default_radius(self.d))
        if self.scenario is Scenario.DIRECTION:
            info["scale"] = str(self.scale)
        return info


@dataclass
class BenchmarkConfig:
    scenario: ScenarioConfig
    methods: Sequence[Method] = (Method.DW, Method.KNN, Method.ENERGY, Method.MMD)
    replicates: int = 100
    seed: int = Config.DEFAULT_SEED
    permutations: int = Config.DEFAULT_PERMUTATIONS
    eta: float = Config.DEFAULT_ETA
    alphas: Tuple[float, ...] = Config.DEFAULT_ALPHAS
    threads: int = 1
    jitter: bool = False


@dataclass
class BenchmarkReport:
    """p-values of every method across replicates."""

    scenario: Dict[str, str]
    p_values: Dict[Method, NDArray[np.float64]]
    alphas: Tuple[float, ...]
    dimensions: List[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        for method, values in self.p_values.items():
            if np.any((values <= 0) | (values > 1)):
                raise DataError(f"{method.value}: p-values outside (0, 1]")

    @property
    def replicates(self) -> int:
        return len(next(iter(self.p_values.values()))) if self.p_values else 0

    def rejection(self, method: Method, alpha: float) -> float:
        return float(np.mean(self.p_values[method] <= alpha))

    def ecdf_frame(self) -> pd.DataFrame:
        """Sorted p-values, one row per replicate and method."""
        frames = [
            pd.DataFrame({"method": method.value, "p_value": np.sort(values)})
            for method, values in self.p_values.items()
        ]
        return pd.concat(frames, ignore_index=True)

    def rejection_frame(self) -> pd.DataFrame:
        rows = [
            {"method": method.value, "alpha": alpha, "proportion": self.rejection(method, alpha)}
            for method in self.p_values
            for alpha in self.alphas
        ]
        return pd.DataFrame(rows, columns=["method", "alpha", "proportion"])

    def write(self, output_dir: Path, header: Dict[str, str]) -> Tuple[Path, Path]:
        """Write <scenario>_ecdf.csv and <scenario>_rejection.csv."""
        name = self.scenario["scenario"]
        output_dir = Path(output_dir)
        ecdf = write_csv(self.ecdf_frame(), output_dir / f"{name}_ecdf.csv", header)
        table = write_csv(self.rejection_frame(), output_dir / f"{name}_rejection.csv", header)
        return ecdf, table


def replicate_seeds(seed: int, replicates: int, methods: int) -> List[List[int]]:
    """Per replicate: one data seed followed by one seed per method."""
    seeds = []
    for child in np.random.SeedSequence(seed).spawn(replicates):
        streams = child.spawn(1 + methods)
        seeds.append([int(s.generate_state(1)[0]) for s in streams])
    return seeds


def _run_replicate(
    args: Tuple[BenchmarkConfig, List[int]]
) -> Tuple[Dict[Method, float], int]:
    """Generate one dataset and run every method on it."""
    config, seeds = args
    sample = config.scenario.generate(seeds[0])
    if config.scenario.scenario.is_gaussian:
        d = sample.dim
    elif config.scenario.d is not None:
        d = config.scenario.d
    else:
        d = estimate_intrinsic_dimension(sample.points)

    p_values: Dict[Method, float] = {}
    for method, seed in zip(config.methods, seeds[1:]):
        if method in (Method.DW, Method.DW_Z):
            dw_config = DwConfig(
                d=d, eta=config.eta, permutations=config.permutations,
                seed=seed, jitter=config.jitter, threads=1,
            )
            runner = run_dw_test if method is Method.DW else run_dw_z_test
            result = runner(sample, dw_config)
        else:
            result = run_baseline(method, sample, d, config.permutations, seed, threads=1)
        p_values[method] = result.p_value
    return p_values, d


def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Run R independent replicates; results are ordered by replicate index."""
    if config.replicates < 1:
        raise DataError("replicates must be at least 1")
    seeds = replicate_seeds(config.seed, config.replicates, len(config.methods))
    jobs = [(config, s) for s in seeds]

    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as executor:
            outcomes = list(executor.map(_run_replicate, jobs))
    else:
        outcomes = [_run_replicate(job) for job in jobs]

    p_values = {
        method: np.array([o[0][method] for o in outcomes]) for method in config.methods
    }
    report = BenchmarkReport(
        scenario=config.scenario.describe(),
        p_values=p_values,
        alphas=tuple(config.alphas),
        dimensions=[o[1] for o in outcomes],
    )
    for method in config.methods:
        logger.info(
            "%s %s: rejection %s",
            report.scenario["scenario"],
            method.value,
            ", ".join(f"{a:g}={report.rejection(method, a):.3f}" for a in report.alphas),
        )
    return report
