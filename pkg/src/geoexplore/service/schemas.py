"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional, Union

from pydantic import BaseModel, Field


class Labels(BaseModel):
    country: str
    city: Optional[str] = None
    street: Optional[str] = None


class GraphSummary(BaseModel):
    graph_id: str
    continent: Optional[str] = None
    difficulty: Optional[str] = None
    n_nodes: int
    n_edges: int
    start_node: str


class RuleFailure(BaseModel):
    rule: str
    message: str


class GraphValidation(BaseModel):
    graph_id: str
    passed: bool
    failures: list[RuleFailure] = []
    min_depth: int
    start_depth: Optional[int] = None


class EpisodeCreate(BaseModel):
    graph_id: str
    heading: float = 0.0
    fov: float = Field(default=90.0, gt=0, le=120)
    width: int = Field(default=256, ge=1, le=4096)
    height: int = Field(default=256, ge=1, le=4096)
    tolerance: float = Field(default=45.0, ge=0, le=180)
    mode: Literal["crop", "panorama"] = "crop"
    include_image: bool = False


class RotateAction(BaseModel):
    type: Literal["rotate"]
    delta: float = Field(gt=-360, lt=360)


class MoveAction(BaseModel):
    type: Literal["move"]


class StopAction(BaseModel):
    type: Literal["stop"]


class GuessAction(BaseModel):
    type: Literal["guess"]
    lat: float = Field(ge=-90, le=90)
    lon: float
    labels: Optional[Labels] = None
    confidence: Optional[float] = Field(default=None, ge=0, le=1)


class StepRequest(BaseModel):
    action: Union[RotateAction, MoveAction, StopAction, GuessAction] = Field(discriminator="type")


class LinkOut(BaseModel):
    bearing: float
    length_m: float


class ObservationOut(BaseModel):
    heading: float
    turn: int
    node_degree: int
    fov: float
    width: int
    height: int
    view_hash: str
    links: list[LinkOut]
    mode: str
    feedback: Optional[str] = None
    image_png_base64: Optional[str] = None


class GuessResult(BaseModel):
    distance_km: float
    score: float
    label_correct: dict[str, Optional[bool]]


class EpisodeOut(BaseModel):
    episode_id: str
    graph_id: str
    turn: int
    done: bool
    observation: ObservationOut
    result: Optional[GuessResult] = None


class ScoreRequest(BaseModel):
    distances_km: list[float] = Field(min_length=1)


class ScoreResponse(BaseModel):
    n: int
    mean_distance_km: float
    mean_score: float
    scores: list[float]


class PointIn(BaseModel):
    model_tag: str
    continent: str
    lat: float = Field(ge=-90, le=90)
    lon: float


class DiversityRequest(BaseModel):
    points: list[PointIn] = Field(min_length=1)


class DiversityRowOut(BaseModel):
    model_tag: str
    scope: str
    n: int
    occupancy: float
    entropy: float
    hull_area: float
    clark_evans: float
    mean_nn: float


class ScoreSample(BaseModel):
    model: str
    level: str
    score: float


class TrendRequest(BaseModel):
    scores: list[ScoreSample] = Field(min_length=1)
    levels: Optional[list[str]] = None
    alpha: float = Field(default=0.05, gt=0, lt=1)
    ols_on: Literal["samples", "means"] = "samples"


class TrendRowOut(BaseModel):
    model: str
    levels: list[str]
    f_stat: Optional[float]
    f_p: Optional[float]
    spearman_rho: Optional[float]
    spearman_p: Optional[float]
    spearman_p_exact: Optional[float]
    ols_slope: Optional[float]
    ols_p: Optional[float]
    level_means: list[float]
    remark: bool
