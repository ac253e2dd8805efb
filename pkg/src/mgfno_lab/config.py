"""Run configuration: JSON file plus ``key.path=value`` overrides, schema-checked."""

import json
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, field_validator


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(_Strict):
    dir: Optional[str] = None
    gen_resolution: int = 1024
    resolutions: List[int] = [256, 512, 1024]
    n_train: int = 200
    n_test: int = 50
    nu: float = 0.1
    t_end: float = 1.0

    @field_validator("resolutions")
    @classmethod
    def _increasing(cls, v):
        if not v or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("resolutions must be non-empty and strictly increasing")
        return v


class ModelSection(_Strict):
    width: int = 32
    modes: int = 16
    n_layers: int = 4
    proj_dim: int = 64
    activation: str = "gelu"
    layer_mlp: bool = True
    scales: List[float] = [1.0, 2.0, 4.0, 8.0]
    level3: Literal["grouped", "branches"] = "grouped"


class TrainSection(_Strict):
    mode: Literal["fno", "fno-skip", "mgfno"] = "mgfno"
    epochs: Union[int, List[int]] = 30
    batch_size: int = 20
    lr0: float = 1e-3
    halving_period: int = 100
    band_every: int = 0


class EvalSection(_Strict):
    checkpoint: Optional[str] = None
    dataset: Optional[str] = None
    resolutions: Optional[List[int]] = None


class AnalyzeSection(_Strict):
    kind: Literal["bands", "fprinciple"] = "fprinciple"
    seeds: List[int] = [0, 1, 2, 3, 4]
    steps: int = 10_000
    lr: float = 5e-4
    record_every: int = 10
    loss: Literal["sum", "mean"] = "sum"
    optimizer: Literal["adam", "gd"] = "adam"
    stop_when: Optional[Literal["first", "all"]] = None
    checkpoint: Optional[str] = None
    dataset: Optional[str] = None
    resolution: Optional[int] = None


class MgSection(_Strict):
    dim: int = 1
    n: int = 129
    omega: float = 2.0 / 3.0
    sweep_omega: float = 1.0
    tol: float = 1e-10
    levels: int = 12
    pre_smooth: int = 2
    post_smooth: int = 2
    max_cycles: int = 100
    curve_n: int = 65
    rhs: Literal["ones", "random"] = "ones"


class RunConfig(_Strict):
    pde: Literal["burgers", "darcy"] = "burgers"
    seed: int = 0
    data: DataSection = DataSection()
    model: ModelSection = ModelSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    analyze: AnalyzeSection = AnalyzeSection()
    mg: MgSection = MgSection()


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(raw, assignment):
    """Apply ``a.b.c=value`` (value parsed as JSON when possible) to a nested dict."""
    if "=" not in assignment:
        raise ValueError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = raw
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ValueError(f"override {key!r} descends into a non-object")
    node[parts[-1]] = _parse_value(value)
    return raw


def load_config(path=None, overrides=()):
    raw = {}
    if path:
        with open(path) as fh:
            raw = json.load(fh)
    for item in overrides:
        apply_override(raw, item)
    return RunConfig.model_validate(raw)
