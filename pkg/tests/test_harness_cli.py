import json
import shutil
from pathlib import Path

import pytest
import yaml

from geoexplore import harness
from geoexplore.agent import ScriptedBackend
from geoexplore.cli import main
from geoexplore.graph import fixture_dataset_dir
from geoexplore.harness import CoverageLevel, RunConfig, cmd_eval, cmd_validate, start_heading

from helpers import path_doc

FX = fixture_dataset_dir()
REPLAY = FX / "replay.json"


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def dataset_with(tmp_path, *docs) -> Path:
    d = tmp_path / "ds"
    shutil.copytree(FX, d)
    manifest = json.loads((d / "manifest.json").read_text())
    for doc in docs:
        (d / f"{doc['graph_id']}.json").write_text(json.dumps(doc))
        manifest["graphs"].append({"file": f"{doc['graph_id']}.json"})
    (d / "manifest.json").write_text(json.dumps(manifest))
    return d


# --- validate ----------------------------------------------------------------

def test_validate_fixtures(capsys):
    s = cmd_validate(FX)
    assert s.ok and len(s.checks) == 3
    assert s.stats.n_graphs == 3
    assert main(["validate"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "stats: graphs=3" in out


def test_validate_shallow_graph_names_rule(tmp_path, capsys):
    d = dataset_with(tmp_path, path_doc(19, graph_id="shallow"))
    s = cmd_validate(d)
    assert not s.ok
    bad = [c for c in s.checks if not c.ok]
    assert [c.graph_id for c in bad] == ["shallow"]
    rule, msg = bad[0].failures[0]
    assert rule == "boundary-depth" and "9 hops" in msg
    assert main(["validate", "--dataset", str(d)]) == 1
    assert "FAIL shallow [boundary-depth]" in capsys.readouterr().out


def test_validate_broken_file_and_missing_file(tmp_path):
    doc = path_doc(21, graph_id="broken")
    doc["edges"].append({"from": "p00", "to": "nowhere"})
    d = dataset_with(tmp_path, doc)
    m = json.loads((d / "manifest.json").read_text())
    m["graphs"].append("ghost.json")
    (d / "manifest.json").write_text(json.dumps(m))
    s = cmd_validate(d)
    fails = {c.file: c.failures[0][0] for c in s.checks if not c.ok}
    assert fails["ghost.json"] == "missing-file"
    assert fails["broken.json"] not in ("boundary-depth", "missing-file")
    assert s.stats.n_graphs == 3


def test_validate_empty_dir(tmp_path, capsys):
    assert main(["validate", "--dataset", str(tmp_path)]) == 1
    assert "manifest" in capsys.readouterr().err


# --- eval ----------------------------------------------------------------------

def test_eval_oracle(tmp_path):
    rep = cmd_eval(RunConfig(dataset_dir=str(FX), output_dir=str(tmp_path)))
    assert rep.mean_distance_km == 0.0 and rep.mean_score == 100.0
    for lvl in ("street", "city", "country"):
        assert rep.levels[lvl]["accuracy"] == 1.0
    assert (tmp_path / "report.json").is_file() and (tmp_path / "scores.csv").is_file()


def replay_cfg(out, parallelism=1, **kw):
    return RunConfig(dataset_dir=str(FX), output_dir=str(out), backend=f"replay:{REPLAY}", parallelism=parallelism, seed=7,
                     width=128, height=96, **kw)


def test_eval_replay_byte_identical(tmp_path):
    levels = [CoverageLevel(label="20%", value=20, max_turns=2), CoverageLevel(label="80%", value=80)]
    runs = []
    for i, par in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        cmd_eval(replay_cfg(out, par, coverage_levels=levels))
        runs.append(tree_bytes(out))
    assert runs[0] == runs[1] == runs[2]
    assert len(runs[0]) == 3 * 2 + 3


def test_eval_accounting(tmp_path):
    levels = [CoverageLevel(label="a", max_turns=1), CoverageLevel(label="b")]
    rep = cmd_eval(replay_cfg(tmp_path, coverage_levels=levels))
    assert rep.n_episodes == 6 == sum(c["n"] for c in rep.coverage.values())
    index = [json.loads(l) for l in (tmp_path / "traces" / "index.jsonl").read_text().splitlines()]
    assert [e["trace"] for e in index] == [e["trace"] for e in rep.episodes]
    on_disk = sorted(str(p.relative_to(tmp_path)) for p in (tmp_path / "traces").glob("*.json"))
    assert on_disk == sorted(e["trace"] for e in index)
    # one turn is too short for the scripted walk to reach its GUESS
    assert rep.coverage["a"]["n_null_guess"] == 3 and rep.coverage["a"]["mean_score"] is None
    assert rep.coverage["b"]["n_null_guess"] == 0
    assert rep.n_null_guess == 3


def test_eval_always_unparseable(tmp_path):
    factory = lambda g, level: ScriptedBackend(lambda prompt, obs, i: "I am not sure what to do.")
    rep = cmd_eval(RunConfig(dataset_dir=str(FX), output_dir=str(tmp_path)), backend_factory=factory)
    assert rep.n_null_guess == rep.n_episodes == 3
    assert rep.n_failed == 0
    assert rep.mean_score is None and rep.mean_distance_km is None
    assert all(e["status"] == "null_guess" for e in rep.episodes)
    assert (tmp_path / "scores.csv").read_text().count("\n") == 1


def test_eval_failing_backend_counted(tmp_path):
    def factory(g, level):
        if g.graph_id == "fx-ladder":
            raise RuntimeError("backend down")
        return harness.make_backend_factory("oracle")[0](g, level)

    rep = cmd_eval(RunConfig(dataset_dir=str(FX), output_dir=str(tmp_path)), backend_factory=factory)
    assert rep.n_failed == 1 and rep.n_episodes == 3
    assert rep.mean_score == 100.0
    assert [e["status"] for e in rep.episodes] == ["ok", "failed", "ok"]


def test_start_heading_seeded():
    a = start_heading(3, "g", "20")
    assert a == start_heading(3, "g", "20") and a % 15 == 0 and 0 <= a < 360
    assert start_heading(3, "g", "20", randomize=False) == 0.0
    assert len({start_heading(s, "g", "20") for s in range(50)}) > 5


def test_run_config_validation(tmp_path):
    with pytest.raises(ValueError):
        RunConfig(dataset_dir="x", parallelism=0)
    with pytest.raises(ValueError):
        RunConfig(dataset_dir="x", coverage_levels=[{"label": "a", "value": 2}, {"label": "b", "value": 1}])
    with pytest.raises(ValueError):
        RunConfig(dataset_dir="x", coverage_levels=[{"label": "a"}, {"label": "a"}])
    with pytest.raises(ValueError):
        RunConfig(dataset_dir="x", mode="sphere")
    p = tmp_path / "cfg.yaml"
    p.write_text(yaml.safe_dump({"dataset_dir": "d", "max_turns": 4, "coverage_levels": [{"label": "20%", "fov": 60}]}))
    cfg = harness.load_config(p, seed=9)
    assert cfg.seed == 9 and cfg.episode_config(cfg.coverage_levels[0]).fov == 60
    assert cfg.episode_config(cfg.coverage_levels[0]).max_turns == 4


def test_backend_specs():
    with pytest.raises(ValueError):
        harness.make_backend_factory("telepathy")
    with pytest.raises(ValueError):
        harness.make_backend_factory("replay:")
    factory, chat = harness.make_backend_factory("chat:some-model@http://localhost:1")
    assert chat is not None and chat.model == "some-model"


# --- tables through the CLI ------------------------------------------------------

def test_cli_eval_then_report(tmp_path, capsys):
    out = tmp_path / "o"
    rc = main(["eval", "--backend", f"replay:{REPLAY}", "--out", str(out), "--model-tag", "demo"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["model"] == "demo" and report["n_episodes"] == 3
    assert main(["report", "--out", str(out)]) == 0
    assert "## Geolocation: demo" in capsys.readouterr().out
    assert (out / "report.md").is_file()


def test_cli_report_without_tables(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2


def test_cli_diversity(tmp_path):
    pts = tmp_path / "p.csv"
    pts.write_text("model_tag,continent,lat,lon\nm,eu,48,2\nm,eu,41,12\nm,eu,52,13\n")
    assert main(["diversity", str(pts), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "diversity.csv").read_text().startswith("model_tag,scope,n,occupancy")
    assert (tmp_path / "radar.csv").is_file()
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["diversity", str(empty), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "b.csv"
    bad.write_text("model_tag,continent,lat,lon\nm,eu,48,2\nm,eu,x,2\n")
    assert main(["diversity", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_trend(tmp_path, capsys):
    rows = ["model,level,score"]
    for lvl, vals in (("hard", [1, 2, 3]), ("medium", [2, 3, 4]), ("easy", [3, 4, 5])):
        rows += [f"anova,{lvl},{v}" for v in vals]
    rows += ["solo,hard,50"]
    p = tmp_path / "s.csv"
    p.write_text("\n".join(rows) + "\n")
    assert main(["trend", str(p), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "anova: F=3.000 p=0.1250" in out and "solo" not in out
    text = (tmp_path / "trend.csv").read_text()
    assert text.splitlines()[0].startswith("model,f_stat,f_p,spearman_rho,spearman_p,ols_slope,ols_p,level_means,remark")
    assert main(["trend", str(p), "--levels", "easy,hard", "--out", str(tmp_path)]) == 2


def test_cli_consensus(tmp_path):
    assert main(["consensus", "--out", str(tmp_path)]) == 0
    svg1 = (tmp_path / "consensus.svg").read_bytes()
    assert main(["consensus", "--out", str(tmp_path), "--center", "medoid"]) == 0
    assert main(["consensus", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "consensus.svg").read_bytes() == svg1


def test_cli_options_before_subcommand(tmp_path):
    assert main(["--out", str(tmp_path), "--seed", "3", "eval", "--backend", "oracle"]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["mean_score"] == 100.0


def test_cli_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset_dir": str(FX), "output_dir": str(tmp_path / "x"), "max_turns": 2}))
    assert main(["eval", "--config", str(cfg)]) == 0
    assert (tmp_path / "x" / "report.json").is_file()
    cfg.write_text(json.dumps({"dataset_dir": str(FX), "parallelism": 0}))
    assert main(["eval", "--config", str(cfg)]) == 1


def test_cli_runtime_errors(tmp_path):
    assert main(["eval", "--backend", "replay:/does/not/exist.json", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--backend", "bogus", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
