"""FastAPI app: graph registry, interactive episodes and metric endpoints.

State lives in memory. Episodes hold only an env state and an env; the
ground truth never leaves the server except through the score of a guess.
"""

from __future__ import annotations

import base64
import math
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request

from .. import tables
from ..diversity import DiversityReport
from ..env import Env, EnvConfig, EnvState, Guess, Move, NoNavigablePath, Observation, Rotate, Stop
from ..geo import LEVELS, GeoPoint, PlaceLabels, aggregate_scores, geo_score, haversine_km, normalize_continent, normalize_label
from ..graph import GraphError, NavGraph, graph_from_dict, load_dataset, validate_depth
from ..render import PanoStore, to_png_bytes
from . import schemas as S


@dataclass
class _Episode:
    env: Env
    state: EnvState
    include_image: bool
    result: Optional[S.GuessResult] = None


class Registry:
    def __init__(self):
        self.lock = threading.Lock()
        self.graphs: dict[str, NavGraph] = {}
        self.episodes: dict[str, _Episode] = {}


def _finite(v):
    return v if v is not None and math.isfinite(v) else None


def _obs_out(obs: Observation, include_image: bool) -> S.ObservationOut:
    d = obs.to_dict()
    if include_image and obs.view is not None:
        d["image_png_base64"] = base64.b64encode(to_png_bytes(obs.view)).decode("ascii")
    return S.ObservationOut(**d)


def _summary(g: NavGraph) -> S.GraphSummary:
    return S.GraphSummary(
        graph_id=g.graph_id,
        continent=g.continent,
        difficulty=g.difficulty,
        n_nodes=len(g.nodes),
        n_edges=len(g.edges),
        start_node=g.start_node,
    )


def create_app(dataset_dir: Optional[str | Path] = None, pano_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="geoexplore", version="0.1.0")
    reg = Registry()
    store = PanoStore(pano_dir)
    app.state.registry = reg
    if dataset_dir is not None:
        for g in load_dataset(dataset_dir):
            reg.graphs[g.graph_id] = g

    def get_graph(graph_id: str) -> NavGraph:
        with reg.lock:
            g = reg.graphs.get(graph_id)
        if g is None:
            raise HTTPException(404, f"unknown graph {graph_id!r}")
        return g

    def get_episode(episode_id: str) -> _Episode:
        with reg.lock:
            ep = reg.episodes.get(episode_id)
        if ep is None:
            raise HTTPException(404, f"unknown episode {episode_id!r}")
        return ep

    @app.get("/health")
    def health():
        with reg.lock:
            return {"status": "ok", "graphs": len(reg.graphs), "episodes": len(reg.episodes)}

    @app.get("/graphs", response_model=list[S.GraphSummary])
    def list_graphs():
        with reg.lock:
            graphs = sorted(reg.graphs.values(), key=lambda g: g.graph_id)
        return [_summary(g) for g in graphs]

    @app.post("/graphs", response_model=S.GraphSummary, status_code=201)
    async def upload_graph(request: Request):
        try:
            doc = await request.json()
        except ValueError:
            raise HTTPException(422, "body is not JSON")
        if not isinstance(doc, dict):
            raise HTTPException(422, "graph document must be a JSON object")
        try:
            g = graph_from_dict(doc)
        except GraphError as exc:
            raise HTTPException(422, f"{type(exc).__name__}: {exc}")
        with reg.lock:
            if g.graph_id in reg.graphs:
                raise HTTPException(409, f"graph {g.graph_id!r} already registered")
            reg.graphs[g.graph_id] = g
        return _summary(g)

    @app.get("/graphs/{graph_id}/validate", response_model=S.GraphValidation)
    def validate_graph(graph_id: str, min_depth: int = 10):
        g = get_graph(graph_id)
        d = validate_depth(g, min_depth)
        failures = []
        if not d.passed:
            failures.append(
                S.RuleFailure(
                    rule="boundary-depth",
                    message=f"boundary node {d.witness!r} is {d.distance} hops from the start node",
                )
            )
        return S.GraphValidation(
            graph_id=g.graph_id, passed=d.passed, failures=failures, min_depth=min_depth, start_depth=d.distance
        )

    @app.post("/episodes", response_model=S.EpisodeOut, status_code=201)
    def create_episode(req: S.EpisodeCreate):
        g = get_graph(req.graph_id)
        env = Env(g, store, EnvConfig(fov=req.fov, width=req.width, height=req.height, tolerance=req.tolerance, mode=req.mode))
        state, obs = env.reset(None, req.heading)
        eid = uuid.uuid4().hex
        with reg.lock:
            reg.episodes[eid] = _Episode(env, state, req.include_image)
        return S.EpisodeOut(
            episode_id=eid, graph_id=g.graph_id, turn=state.turn, done=False, observation=_obs_out(obs, req.include_image)
        )

    @app.get("/episodes/{episode_id}", response_model=S.EpisodeOut)
    def get_episode_view(episode_id: str):
        ep = get_episode(episode_id)
        obs = ep.env.observe(ep.state)
        return S.EpisodeOut(
            episode_id=episode_id,
            graph_id=ep.state.graph_id,
            turn=ep.state.turn,
            done=ep.state.done,
            observation=_obs_out(obs, ep.include_image),
            result=ep.result,
        )

    @app.post("/episodes/{episode_id}/step", response_model=S.EpisodeOut)
    def step_episode(episode_id: str, req: S.StepRequest):
        ep = get_episode(episode_id)
        a = req.action
        if a.type == "rotate":
            action = Rotate(a.delta)
        elif a.type == "move":
            action = Move()
        elif a.type == "stop":
            action = Stop()
        else:
            labels = None if a.labels is None else PlaceLabels(a.labels.country, a.labels.city, a.labels.street)
            action = Guess(GeoPoint(a.lat, a.lon), labels, a.confidence)
        with reg.lock:
            if ep.state.done:
                raise HTTPException(409, "episode already ended")
            try:
                tr = ep.env.step(ep.state, action)
                state, obs = tr.state, tr.observation
            except NoNavigablePath as exc:
                state, obs = exc.state, exc.observation
            ep.state = state
            if isinstance(action, Guess):
                truth = ep.env.graph.node(ep.env.graph.start_node)
                d = haversine_km(action.point, truth.location)
                correct = {}
                for lvl in LEVELS:
                    t = truth.labels.at(lvl)
                    p = None if action.labels is None else action.labels.at(lvl)
                    correct[lvl] = None if t is None else normalize_label(p) == normalize_label(t)
                ep.result = S.GuessResult(distance_km=d, score=geo_score(d), label_correct=correct)
            result = ep.result
        return S.EpisodeOut(
            episode_id=episode_id,
            graph_id=state.graph_id,
            turn=state.turn,
            done=state.done,
            observation=_obs_out(obs, ep.include_image),
            result=result,
        )

    @app.delete("/episodes/{episode_id}", status_code=204)
    def delete_episode(episode_id: str):
        with reg.lock:
            if reg.episodes.pop(episode_id, None) is None:
                raise HTTPException(404, f"unknown episode {episode_id!r}")

    @app.post("/metrics/score", response_model=S.ScoreResponse)
    def score(req: S.ScoreRequest):
        try:
            mean_d, mean_s = aggregate_scores(req.distances_km)
            scores = [geo_score(x) for x in req.distances_km]
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return S.ScoreResponse(n=len(scores), mean_distance_km=mean_d, mean_score=mean_s, scores=scores)

    @app.post("/metrics/diversity", response_model=list[S.DiversityRowOut])
    def diversity(req: S.DiversityRequest):
        try:
            pts = [
                tables.ProposedPoint(p.model_tag, normalize_continent(p.continent), GeoPoint(p.lat, p.lon)) for p in req.points
            ]
            rows = tables.diversity_rows(pts)
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return [
            S.DiversityRowOut(
                model_tag=r.model_tag,
                scope=r.scope,
                n=r.report.n,
                **dict(zip(DiversityReport.METRICS, r.report.values())),
            )
            for r in rows
        ]

    @app.post("/metrics/trend", response_model=list[S.TrendRowOut])
    def trend(req: S.TrendRequest):
        try:
            reports = tables.trend_reports(
                [(s.model, s.level, s.score) for s in req.scores], levels=req.levels, alpha=req.alpha, ols_on=req.ols_on
            )
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return [
            S.TrendRowOut(
                model=r.model,
                levels=list(r.levels),
                f_stat=_finite(r.f_stat),
                f_p=_finite(r.f_p),
                spearman_rho=_finite(r.spearman_rho),
                spearman_p=_finite(r.spearman_p),
                spearman_p_exact=r.spearman_p_exact,
                ols_slope=_finite(r.ols_slope),
                ols_p=_finite(r.ols_p),
                level_means=list(r.level_means),
                remark=r.remark,
            )
            for r in reports
        ]

    return app
