"""
Scenario files: YAML parsing, validation into ScenarioConfig, defaults and serialization, plus the
construction of the numerical models a validated scenario describes.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pydantic
import yaml

from core.constants import (
    DEFAULT_OUTPUT_DIR,
    SCENARIO_DIR,
    SCENARIO_SUFFIXES,
    SIGMA_THRESHOLD_NOISELESS,
    SIGMA_THRESHOLD_NOISY,
    STEP_SIZE_SAFETY,
)
from core.errors import DkfError, GraphError, ScenarioParseError, ScenarioValidationError
from core.log import LOG
from core.schemas import ContinuousProcessSpec, GraphSpec, ScenarioConfig
from estimation.graph import (
    Graph,
    default_step_size,
    filter_step_bound,
    graph_from_edge_list,
    is_connected,
    max_step_size,
    random_connected_graph,
)
from estimation.sysmodel import ContinuousModel, ProcessModel, SensorModel, discretize


@dataclass(frozen=True)
class ResolvedScenario:
    """Numerical objects described by a validated scenario."""
    process: ProcessModel
    sensors: List[SensorModel]
    graph: Graph
    step_size: float
    initial_truth: np.ndarray


def default_output_dir() -> str:
    return os.getenv("DKF_OUTPUT_DIR", DEFAULT_OUTPUT_DIR)


def resolve_scenario_path(scenario: Union[str, os.PathLike]) -> Path:
    """
    A path to an existing file, or the name of a bundled scenario under data/scenarios.

    :raises ScenarioParseError: If neither exists.
    """
    path = Path(scenario)
    if path.is_file():
        return path
    for suffix in ("",) + SCENARIO_SUFFIXES:
        bundled = SCENARIO_DIR / f"{scenario}{suffix}"
        if bundled.is_file():
            return bundled
    raise ScenarioParseError("no such scenario file or bundled scenario", path=str(scenario))


def _load_raw(text: str, path: Optional[str] = None) -> Dict[str, Any]:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        problem = getattr(e, "problem", None) or str(e)
        raise ScenarioParseError(problem, path=path, line=line, original_error=e)
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario must be a mapping of keys to values", path=path)
    return raw


def _field_name(location) -> str:
    parts = []
    for item in location:
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(f".{item}" if parts else str(item))
    return "".join(parts)


def build_graph(spec: GraphSpec) -> Graph:
    try:
        if spec.random is not None:
            return random_connected_graph(spec.n, spec.random.edge_probability, spec.random.seed)
        return graph_from_edge_list(spec.n, spec.edges or [], spec.weights)
    except GraphError as e:
        raise ScenarioValidationError(e.message, field="graph", original_error=e)


def _matrix(values, field: str) -> np.ndarray:
    mat = np.asarray(values, dtype=float)
    if mat.ndim != 2 or mat.size == 0:
        raise ScenarioValidationError("expected a non-empty rectangular matrix (list of rows)", field=field)
    return mat


def _check_shape(mat: np.ndarray, shape, field: str) -> None:
    if mat.shape != tuple(shape):
        raise ScenarioValidationError(f"expected shape {tuple(shape)}, got {mat.shape}", field=field)


def build_process(cfg: ScenarioConfig, step_size: float) -> ProcessModel:
    spec = cfg.process
    if isinstance(spec, ContinuousProcessSpec):
        f = _matrix(spec.f, "process.f")
        g = _matrix(spec.g, "process.g")
        q = _matrix(spec.q_cov, "process.q_cov")
        _check_shape(f, (f.shape[0], f.shape[0]), "process.f")
        _check_shape(g, (f.shape[0], g.shape[1]), "process.g")
        _check_shape(q, (g.shape[1], g.shape[1]), "process.q_cov")
        pm = discretize(ContinuousModel(f=f, g=g, q_cov=q), spec.dt if spec.dt is not None else step_size)
    else:
        a = _matrix(spec.a, "process.a")
        b = _matrix(spec.b, "process.b")
        q = _matrix(spec.q_cov, "process.q_cov")
        _check_shape(a, (a.shape[0], a.shape[0]), "process.a")
        _check_shape(b, (a.shape[0], b.shape[1]), "process.b")
        _check_shape(q, (b.shape[1], b.shape[1]), "process.q_cov")
        pm = ProcessModel(a=a, b=b, q_cov=q)

    if not np.allclose(pm.q_cov, pm.q_cov.T) or np.min(np.linalg.eigvalsh(pm.q_cov)) < -1e-12:
        raise ScenarioValidationError("process noise covariance must be symmetric positive semidefinite",
                                      field="process.q_cov")
    return pm


def build_sensors(cfg: ScenarioConfig, m: int) -> List[SensorModel]:
    sensors = []
    for i, spec in enumerate(cfg.sensors):
        h = _matrix(spec.h, f"sensors[{i}].h")
        _check_shape(h, (h.shape[0], m), f"sensors[{i}].h")
        noise_field = "r_cov" if spec.r_cov is not None else "r_inv"
        noise = _matrix(getattr(spec, noise_field), f"sensors[{i}].{noise_field}")
        _check_shape(noise, (h.shape[0], h.shape[0]), f"sensors[{i}].{noise_field}")
        if not np.allclose(noise, noise.T):
            raise ScenarioValidationError("must be symmetric", field=f"sensors[{i}].{noise_field}")
        try:
            if spec.r_cov is not None:
                sensors.append(SensorModel.from_covariance(h, noise))
            else:
                sensors.append(SensorModel.from_inverse(h, noise))
        except DkfError as e:
            raise ScenarioValidationError("must be positive definite", field=f"sensors[{i}].{noise_field}",
                                          original_error=e)
    return sensors


def _check_step_size(graph: Graph, step_size: float) -> None:
    if not graph.edges:
        if step_size > 1.0:
            raise ScenarioValidationError(f"step size {step_size} exceeds 1 on a graph without edges",
                                          field="step_size", bound=1.0)
        return
    bound = max_step_size(graph)
    if step_size >= bound:
        raise ScenarioValidationError(f"step size {step_size} violates 0 < eps < 1/max degree = {bound}",
                                      field="step_size", bound=bound)
    stable = filter_step_bound(graph)
    if step_size >= stable:
        LOG.warning(f"Step size {step_size} is above the band-pass stability bound {stable:.6g}, "
                    f"the asymptotic filter may diverge")


def _apply_defaults(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.graph.n != len(cfg.sensors):
        raise ScenarioValidationError(f"graph has {cfg.graph.n} nodes but {len(cfg.sensors)} sensors are given",
                                      field="graph.n")
    graph = build_graph(cfg.graph)
    if not is_connected(graph):
        LOG.warning(f"Scenario {cfg.name}: the graph is disconnected, consensus values are per component")

    process = cfg.process
    step_size = cfg.step_size
    if step_size is None:
        if isinstance(process, ContinuousProcessSpec) and process.dt is not None:
            step_size = process.dt
        else:
            step_size = default_step_size(graph, STEP_SIZE_SAFETY)
    if isinstance(process, ContinuousProcessSpec) and process.dt is None:
        process = process.model_copy(update={"dt": step_size})
    _check_step_size(graph, step_size)

    pm = build_process(cfg.model_copy(update={"process": process}), step_size)
    build_sensors(cfg, pm.m)

    initial_truth = cfg.initial_truth if cfg.initial_truth is not None else [0.0] * pm.m
    if len(initial_truth) != pm.m:
        raise ScenarioValidationError(f"expected {pm.m} entries, got {len(initial_truth)}", field="initial_truth")

    sigma_threshold = cfg.sigma_threshold
    if sigma_threshold is None:
        sigma_threshold = SIGMA_THRESHOLD_NOISY if cfg.observation_noise > 0 else SIGMA_THRESHOLD_NOISELESS

    return cfg.model_copy(update={
        "process": process,
        "step_size": float(step_size),
        "sigma_threshold": float(sigma_threshold),
        "initial_truth": [float(v) for v in initial_truth],
        "algorithms": list(dict.fromkeys(cfg.algorithms)),
    })


def validate_config(raw: Dict[str, Any]) -> ScenarioConfig:
    """
    Validates a raw mapping and applies the defaults.

    :raises ScenarioValidationError: With the offending field and, for step sizes, the violated bound.
    """
    try:
        cfg = ScenarioConfig.model_validate(raw)
    except pydantic.ValidationError as e:
        first = e.errors()[0]
        raise ScenarioValidationError(first["msg"], field=_field_name(first["loc"]), original_error=e)
    return _apply_defaults(cfg)


def parse_config_text(text: str, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
                      ) -> ScenarioConfig:
    raw = _load_raw(text, path)
    raw.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return validate_config(raw)


def parse_config(path: Union[str, os.PathLike], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    """
    Reads and validates a scenario file.

    :param path: Path to a YAML scenario, or the name of a bundled one.
    :param overrides: Top level keys replacing the file's values before validation; None values are ignored.
    :return: The validated scenario with every default filled in.
    :raises ScenarioParseError: If the file is missing or is not well-formed YAML.
    :raises ScenarioValidationError: If the content violates the schema or a bound.
    """
    resolved = resolve_scenario_path(path)
    LOG.debug(f"Loading scenario from {resolved}")
    try:
        text = resolved.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError("cannot read scenario file", path=str(resolved), original_error=e)
    return parse_config_text(text, str(resolved), overrides)


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False, default_flow_style=None)


def resolve_scenario(cfg: ScenarioConfig) -> ResolvedScenario:
    step_size = cfg.step_size if cfg.step_size is not None else default_step_size(build_graph(cfg.graph))
    pm = build_process(cfg, step_size)
    return ResolvedScenario(
        process=pm,
        sensors=build_sensors(cfg, pm.m),
        graph=build_graph(cfg.graph),
        step_size=step_size,
        initial_truth=np.asarray(cfg.initial_truth if cfg.initial_truth is not None else np.zeros(pm.m), dtype=float),
    )
