"""End-to-end operations behind the CLI and the HTTP service."""

from __future__ import annotations

import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from . import tables
from .agent.backends import ChatBackend, ModelBackend, OracleBackend, ReplayBackend
from .agent.loop import EpisodeConfig, EpisodeFailed, EpisodeTrace, run_episode
from .consensus import PolarHistogram, aggregate_consensus
from .geo import LEVELS, aggregate_scores, level_metrics
from .graph import (
    DEFAULT_MIN_DEPTH,
    GraphError,
    GraphStats,
    NavGraph,
    graph_stats,
    load_graph,
    read_manifest,
    validate_depth,
)
from .render import PanoStore

log = logging.getLogger(__name__)

DEPTH_RULE = "boundary-depth"


class CoverageLevel(BaseModel):
    """One ordered experimental condition and the env settings it implies."""

    label: str
    value: Optional[float] = None
    max_turns: Optional[int] = Field(default=None, ge=0)
    fov: Optional[float] = Field(default=None, gt=0, le=120)
    mode: Optional[str] = None


class RunConfig(BaseModel):
    dataset_dir: str
    backend: str = "oracle"
    model_tag: Optional[str] = None
    output_dir: str = "out"
    max_turns: int = Field(default=10, ge=0)
    fov: float = Field(default=90.0, gt=0, le=120)
    width: int = Field(default=512, ge=1)
    height: int = Field(default=512, ge=1)
    tolerance: float = Field(default=45.0, ge=0, le=180)
    mode: str = "crop"
    stop_on_confidence: Optional[float] = Field(default=None, ge=0, le=1)
    max_retries: int = Field(default=3, ge=0)
    retry_backoff: float = Field(default=0.0, ge=0)
    parallelism: int = Field(default=1, ge=1)
    seed: int = 0
    random_heading: bool = True
    coverage_levels: list[CoverageLevel] = Field(default_factory=lambda: [CoverageLevel(label="full")])
    pano_dir: Optional[str] = None
    image_mode: str = "base64"

    @field_validator("coverage_levels")
    @classmethod
    def _levels_ordered(cls, levels):
        if not levels:
            raise ValueError("at least one coverage level is required")
        labels = [l.label for l in levels]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate coverage level labels {labels}")
        values = [l.value for l in levels]
        if all(v is not None for v in values) and any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("coverage level values must be strictly increasing")
        return levels

    @model_validator(mode="after")
    def _mode_ok(self):
        if self.mode not in ("crop", "panorama"):
            raise ValueError(f"unknown mode {self.mode!r}")
        return self

    @property
    def tag(self) -> str:
        return self.model_tag or self.backend.split("@")[0]

    def episode_config(self, level: CoverageLevel) -> EpisodeConfig:
        return EpisodeConfig(
            max_turns=self.max_turns if level.max_turns is None else level.max_turns,
            fov=self.fov if level.fov is None else level.fov,
            width=self.width,
            height=self.height,
            tolerance=self.tolerance,
            mode=self.mode if level.mode is None else level.mode,
            stop_on_confidence=self.stop_on_confidence,
            max_retries=self.max_retries,
            retry_backoff=self.retry_backoff,
        )


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Read a JSON or YAML run config; keyword overrides win over file values."""
    text = Path(path).read_text(encoding="utf-8")
    data = yaml.safe_load(text) if Path(path).suffix in (".yml", ".yaml") else json.loads(text)
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


# --- validate ----------------------------------------------------------------

@dataclass
class GraphCheck:
    file: str
    graph_id: Optional[str]
    failures: list[tuple[str, str]] = field(default_factory=list)
    graph: Optional[NavGraph] = None

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class ValidationSummary:
    checks: list[GraphCheck]
    stats: Optional[GraphStats]

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(c.ok for c in self.checks)

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            name = c.graph_id or c.file
            if c.ok:
                out.append(f"PASS {name}")
            for rule, msg in c.failures:
                out.append(f"FAIL {name} [{rule}] {msg}")
        if self.stats is not None:
            s = self.stats.to_dict()
            out.append(
                "stats: graphs={n_graphs} mean_nodes={n_nodes:.2f} mean_edges={n_edges:.2f} "
                "avg_degree={avg_degree:.3f} edge_node_ratio={edge_node_ratio:.3f} "
                "mean_boundary={boundary_count:.2f}".format(**s)
            )
        return out


def _rule_name(exc: Exception) -> str:
    name = type(exc).__name__
    return "".join("-" + c.lower() if c.isupper() else c for c in name).lstrip("-")


def cmd_validate(dataset_dir: str | Path, min_depth: int = DEFAULT_MIN_DEPTH) -> ValidationSummary:
    ds = read_manifest(dataset_dir)
    checks = []
    for entry in ds.entries:
        check = GraphCheck(entry.file, None)
        try:
            g = load_graph(ds.root / entry.file)
        except FileNotFoundError:
            check.failures.append(("missing-file", f"{entry.file} not found"))
        except GraphError as exc:
            check.failures.append((_rule_name(exc), str(exc)))
        else:
            check.graph_id, check.graph = g.graph_id, g
            depth = validate_depth(g, min_depth)
            if not depth.passed:
                check.failures.append(
                    (
                        DEPTH_RULE,
                        f"boundary node {depth.witness!r} is {depth.distance} hops from start "
                        f"{g.start_node!r} (need >= {min_depth})",
                    )
                )
        checks.append(check)
    graphs = [c.graph for c in checks if c.graph is not None]
    return ValidationSummary(checks, graph_stats(graphs) if graphs else None)


# --- eval --------------------------------------------------------------------

BackendFactory = Callable[[NavGraph, str], ModelBackend]


def make_backend_factory(spec: str, cfg: Optional[RunConfig] = None) -> tuple[BackendFactory, Optional[ChatBackend]]:
    """``oracle`` | ``replay:<path>`` | ``chat:<model>[@<api base>]``."""
    kind, _, arg = spec.partition(":")
    if kind == "oracle":
        return (lambda g, level: OracleBackend(g.start.location, g.start.labels)), None
    if kind == "replay":
        if not arg:
            raise ValueError("replay backend needs a file: replay:<path>")
        table = ReplayBackend.load_table(arg)
        name = f"replay:{Path(arg).name}"
        return (lambda g, level: ReplayBackend.for_episode(table, g.graph_id, level, name=name)), None
    if kind == "chat":
        model, _, base = arg.partition("@")
        chat = ChatBackend(base or None, model or "gpt-4o", image_mode=cfg.image_mode if cfg else "base64")
        return (lambda g, level: chat), chat
    raise ValueError(f"unknown backend spec {spec!r}")


def start_heading(seed: int, graph_id: str, level: str, randomize: bool = True) -> float:
    if not randomize:
        return 0.0
    return float(random.Random(f"{seed}:{graph_id}:{level}").randrange(0, 360, 15))


@dataclass
class BenchReport:
    model: str
    n_episodes: int
    n_failed: int
    n_null_guess: int
    mean_distance_km: Optional[float]
    mean_score: Optional[float]
    levels: dict
    coverage: dict
    trend: Optional[dict] = None
    episodes: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "n_episodes": self.n_episodes,
            "n_failed": self.n_failed,
            "n_null_guess": self.n_null_guess,
            "mean_distance_km": self.mean_distance_km,
            "mean_score": self.mean_score,
            "levels": self.levels,
            "coverage": self.coverage,
            "trend": self.trend,
            "episodes": self.episodes,
        }


def _episode_key(graph_id: str, level: str) -> str:
    return f"{graph_id}@{level}"


def _safe_name(s: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.@" else "_" for c in s)


def _run_one(job) -> EpisodeTrace:
    g, level, cfg, factory, store = job
    heading = start_heading(cfg.seed, g.graph_id, level.label, cfg.random_heading)
    try:
        backend = factory(g, level.label)
        return run_episode(g, backend, cfg.episode_config(level), heading=heading, store=store, level=level.label)
    except EpisodeFailed as exc:
        log.warning("episode %s failed: %s", _episode_key(g.graph_id, level.label), exc)
        return exc.trace
    except Exception as exc:  # backend construction and the like
        log.warning("episode %s failed: %s", _episode_key(g.graph_id, level.label), exc)
        return EpisodeTrace(
            graph_id=g.graph_id,
            start_node=g.start_node,
            start_heading=heading,
            truth_point=g.start.location,
            truth_labels=g.start.labels,
            level=level.label,
            error=f"{type(exc).__name__}: {exc}",
        )


def summarize(traces: list[EpisodeTrace], model: str, levels: list[CoverageLevel]) -> BenchReport:
    scored = [t for t in traces if not t.failed and t.final_guess is not None]
    usable = [t for t in traces if not t.failed]
    mean_d = mean_s = None
    if scored:
        mean_d, mean_s = aggregate_scores([t.distance_km for t in scored])

    level_out = {}
    for lvl in LEVELS:
        subset = [t for t in usable if t.truth_labels.at(lvl) is not None]
        if not subset:
            level_out[lvl] = None
            continue
        preds = [t.final_guess.labels if t.final_guess is not None else None for t in subset]
        m = level_metrics(preds, [t.truth_labels for t in subset], lvl)
        level_out[lvl] = {"n": len(subset), "accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1}

    coverage = {}
    for lvl in levels:
        ts = [t for t in traces if t.level == lvl.label]
        sc = [t for t in ts if not t.failed and t.final_guess is not None]
        md, ms = aggregate_scores([t.distance_km for t in sc]) if sc else (None, None)
        coverage[lvl.label] = {
            "n": len(ts),
            "n_failed": sum(t.failed for t in ts),
            "n_null_guess": sum(t.null_guess for t in ts),
            "mean_distance_km": md,
            "mean_score": ms,
        }

    trend = None
    scores = [(model, t.level, t.score) for t in scored]
    if len({lvl for _, lvl, _ in scores}) >= 2:
        order = [l.label for l in levels]
        reports = tables.trend_reports(scores, levels=order)
        if reports:
            r = reports[0]
            trend = {k: v for k, v in r.row().items()}

    return BenchReport(
        model=model,
        n_episodes=len(traces),
        n_failed=sum(t.failed for t in traces),
        n_null_guess=sum(t.null_guess for t in traces),
        mean_distance_km=mean_d,
        mean_score=mean_s,
        levels=level_out,
        coverage=coverage,
        trend=trend,
        episodes=[
            {
                "graph_id": t.graph_id,
                "level": t.level,
                "trace": f"traces/{_safe_name(_episode_key(t.graph_id, t.level))}.json",
                "status": "failed" if t.failed else ("null_guess" if t.final_guess is None else "ok"),
                "distance_km": t.distance_km,
                "score": t.score,
                "turns": len(t.turns),
                "retries": t.retries,
            }
            for t in traces
        ],
    )


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=True) + "\n"


def cmd_eval(cfg: RunConfig, backend_factory: Optional[BackendFactory] = None) -> BenchReport:
    """Run one episode per (graph, coverage level) and write traces and reports.

    Output is a pure function of (dataset, config, backend responses): no
    timestamps, stable ordering, independent of ``parallelism``.
    """
    graphs = read_manifest(cfg.dataset_dir).load()
    chat = None
    if backend_factory is None:
        backend_factory, chat = make_backend_factory(cfg.backend, cfg)
    store = PanoStore(cfg.pano_dir)
    jobs = [(g, lvl, cfg, backend_factory, store) for g in graphs for lvl in cfg.coverage_levels]
    if cfg.parallelism > 1:
        with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
            traces = list(pool.map(_run_one, jobs))
    else:
        traces = [_run_one(j) for j in jobs]

    report = summarize(traces, cfg.tag, cfg.coverage_levels)
    out = Path(cfg.output_dir)
    index_lines = []
    for t, ep in zip(traces, report.episodes):
        tables.write_text_atomic(out / ep["trace"], _dumps(t.to_dict()))
        index_lines.append(json.dumps(ep, sort_keys=True))
    tables.write_text_atomic(out / "traces" / "index.jsonl", "\n".join(index_lines) + "\n")
    tables.write_text_atomic(out / "report.json", _dumps(report.to_dict()))
    tables.write_text_atomic(
        out / "scores.csv",
        tables.write_scores_csv(
            (report.model, t.level, t.score, t.graph_id) for t in traces if t.score is not None
        ),
    )
    if chat is not None:
        chat.dump_log(out / "chat_log.jsonl")
    return report


# --- diversity / trend / consensus --------------------------------------------

def cmd_diversity(points_csv: str | Path, output_dir: str | Path) -> list[tables.DiversityRow]:
    points = tables.read_points_csv(Path(points_csv).read_text(encoding="utf-8"))
    rows = tables.diversity_rows(points)
    out = Path(output_dir)
    tables.write_text_atomic(out / "diversity.csv", tables.write_diversity_csv(rows))
    tables.write_text_atomic(out / "radar.csv", tables.write_radar_csv(tables.radar_rows(rows)))
    return rows


def cmd_trend(scores_csv: str | Path, output_dir: str | Path, levels=None, alpha: float = 0.05, ols_on: str = "samples"):
    scores = tables.read_scores_csv(Path(scores_csv).read_text(encoding="utf-8"))
    reports = tables.trend_reports(scores, levels=levels, alpha=alpha, ols_on=ols_on)
    tables.write_text_atomic(Path(output_dir) / "trend.csv", tables.write_trend_csv(reports))
    return reports


def cmd_consensus(
    dataset_dir: str | Path,
    output_dir: str | Path,
    radial_bins: int = 6,
    angular_bins: int = 8,
    percentile: float = 0.99,
    center: str = "start",
) -> PolarHistogram:
    graphs = read_manifest(dataset_dir).load()
    hist = aggregate_consensus(graphs, radial_bins, angular_bins, percentile, center)
    out = Path(output_dir)
    tables.write_text_atomic(out / "consensus_nodes.csv", hist.nodes_csv())
    tables.write_text_atomic(out / "consensus_edges.csv", hist.edges_csv())
    tables.write_text_atomic(out / "consensus.svg", hist.to_svg())
    return hist


# --- report ------------------------------------------------------------------

def _num(v, fmt="{:.3f}") -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return fmt.format(v)


def cmd_report(output_dir: str | Path) -> str:
    """Assemble a markdown summary from whatever tables exist in ``output_dir``."""
    out = Path(output_dir)
    parts = ["# Benchmark report", ""]
    found = False
    rp = out / "report.json"
    if rp.is_file():
        found = True
        r = json.loads(rp.read_text(encoding="utf-8"))
        parts += [
            f"## Geolocation: {r['model']}",
            "",
            f"episodes {r['n_episodes']}, failed {r['n_failed']}, null guesses {r['n_null_guess']}",
            "",
            "| Dist. (km) | Score | Street Acc/Rec/F1 | City Acc/Rec/F1 | Country Acc/Rec/F1 |",
            "|---|---|---|---|---|",
        ]
        cells = [_num(r["mean_distance_km"], "{:.1f}"), _num(r["mean_score"], "{:.2f}")]
        for lvl in LEVELS:
            m = r["levels"].get(lvl)
            cells.append("-" if m is None else f"{m['accuracy']:.3f} / {m['recall']:.3f} / {m['f1']:.3f}")
        parts += ["| " + " | ".join(cells) + " |", ""]
        if len(r["coverage"]) > 1:
            parts += ["| Level | n | Dist. (km) | Score |", "|---|---|---|---|"]
            for lab, c in r["coverage"].items():
                parts.append(f"| {lab} | {c['n']} | {_num(c['mean_distance_km'], '{:.1f}')} | {_num(c['mean_score'], '{:.2f}')} |")
            parts.append("")
    dp = out / "diversity.csv"
    if dp.is_file():
        found = True
        rows = tables.read_diversity_csv(dp.read_text(encoding="utf-8"))
        parts += ["## Spatial diversity (per-model mean over continents)", "", "| Model | O16 | H16 | A_hull | R_CE | r_NN |", "|---|---|---|---|---|---|"]
        for row in rows:
            if row.scope == "mean":
                parts.append("| " + " | ".join([row.model_tag] + [f"{v:.4f}" for v in row.report.values()]) + " |")
        parts.append("")
    tp = out / "trend.csv"
    if tp.is_file():
        found = True
        parts += ["## Trend across levels", "", "| Model | F | p | rho | p(rho) | slope | p(slope) | means | remark |", "|---|---|---|---|---|---|---|---|---|"]
        for rec in tables.read_trend_csv(tp.read_text(encoding="utf-8")):
            means = " / ".join(f"{m:.2f}" for m in rec["level_means"])
            parts.append(
                f"| {rec['model']} | {_num(rec['f_stat'], '{:.2f}')} | {_num(rec['f_p'], '{:.4f}')} | "
                f"{_num(rec['spearman_rho'], '{:.2f}')} | {_num(rec['spearman_p'], '{:.2f}')} | "
                f"{_num(rec['ols_slope'], '{:.3f}')} | {_num(rec['ols_p'], '{:.3f}')} | {means} | "
                f"{'pass' if rec['remark'] else 'fail'} |"
            )
        parts.append("")
    if not found:
        raise FileNotFoundError(f"no report.json, diversity.csv or trend.csv in {out}")
    text = "\n".join(parts)
    tables.write_text_atomic(out / "report.md", text)
    return text
