from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

Matrix = List[List[float]]
AlgorithmName = Literal["ckf", "a0", "a1", "a2"]


# Scenario file schemas
class ContinuousProcessSpec(BaseModel):
    """
    Continuous dynamics dx/dt = F x + G w, discretized with sampling period dt.
    dt defaults to the consensus step size; the bundled twenty-node scenario uses one value for both.
    """
    model_config = ConfigDict(extra="forbid")

    kind: Literal["continuous"] = "continuous"
    f: Matrix
    g: Matrix
    q_cov: Matrix
    dt: Optional[float] = Field(default=None, gt=0.0)


class DiscreteProcessSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["discrete"] = "discrete"
    a: Matrix
    b: Matrix
    q_cov: Matrix


ProcessSpec = Annotated[Union[ContinuousProcessSpec, DiscreteProcessSpec], Field(discriminator="kind")]


class SensorSpec(BaseModel):
    """Measurement matrix H and exactly one of the noise covariance R or its inverse."""
    model_config = ConfigDict(extra="forbid")

    h: Matrix
    r_cov: Optional[Matrix] = None
    r_inv: Optional[Matrix] = None

    @model_validator(mode="after")
    def _exactly_one_noise_matrix(self) -> "SensorSpec":
        if (self.r_cov is None) == (self.r_inv is None):
            raise ValueError("give exactly one of r_cov and r_inv")
        return self


class RandomGraphSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    edge_probability: float = Field(gt=0.0, le=1.0)
    seed: int = 0


class GraphSpec(BaseModel):
    """Either an explicit edge list (optionally weighted) or a seeded random connected graph."""
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    edges: Optional[List[Tuple[int, int]]] = None
    weights: Optional[List[float]] = None
    random: Optional[RandomGraphSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "GraphSpec":
        if self.edges is not None and self.random is not None:
            raise ValueError("give either edges or random, not both")
        if self.weights is not None and (self.edges is None or len(self.weights) != len(self.edges)):
            raise ValueError("weights need an edge list of the same length")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = "scenario"
    process: ProcessSpec
    sensors: List[SensorSpec] = Field(min_length=1)
    graph: GraphSpec
    step_size: Optional[float] = Field(default=None, gt=0.0)
    steps: int = Field(default=1000, ge=0)
    sigma_threshold: Optional[float] = Field(default=None, gt=0.0)
    rho: Optional[float] = Field(default=None, ge=0.0)
    algorithms: List[AlgorithmName] = Field(default_factory=lambda: ["ckf", "a0", "a1"], min_length=1)
    run_seed: int = 0
    g_oracle: bool = False
    initial_truth: Optional[List[float]] = None
    prior_scale: float = Field(default=10.0, gt=0.0)
    a0_tolerance: float = Field(default=1e-3, gt=0.0)
    observation_noise: float = Field(default=0.0, ge=0.0)
    bandpass_form: Literal["cascade", "verbatim"] = "cascade"
    symmetric_detectors: bool = True
    exact_detection: bool = True
    theorem_rho: float = Field(default=1e-9, ge=0.0)

    @property
    def exact_a1(self) -> bool:
        """A1 detects on exactly computed band-pass outputs, possible only while they carry no added noise."""
        return self.exact_detection and self.observation_noise == 0


# Summary document schemas
class TimingStats(BaseModel):
    """Time to reach S^c across nodes, in simulated seconds."""
    shortest: Optional[float] = None
    longest: Optional[float] = None
    average: Optional[float] = None
    unconverged: int = 0


class DetectionRecord(BaseModel):
    algorithm: Literal["a1", "a2"]
    node: int
    h: int
    l: int
    observation: int
    time_s: float
    phi: float


class TheoremCheck(BaseModel):
    checked_points: int
    violations: int
    max_excess: Optional[float] = None


class RunSummary(BaseModel):
    scenario: str
    n: int
    m: int
    steps: int
    step_size: float
    algorithms: List[AlgorithmName]
    config: dict
    timing: Dict[str, TimingStats]
    timing_ratio_a1_a0: Optional[float] = None
    assembled_relative_error: Dict[str, Optional[float]]
    bandpass_final_residual: Optional[float] = None
    done_at: Dict[str, List[Optional[int]]]
    detections: List[DetectionRecord]
    detector_failures: int
    messages: Dict[str, int]
    settling_time_s: Dict[str, Optional[float]]
    theorem_check: Optional[TheoremCheck] = None
    acceptance: Dict[str, Optional[bool]]
    metadata: Dict[str, str]
