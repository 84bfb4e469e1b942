import json
import shutil
import subprocess

import pytest

from graphweld import fileio as fio
from graphweld.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_USAGE, run
from graphweld.evaluation import parse_report


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "cfg.json").write_text(json.dumps({"persons": 500, "participation": [0.6, 0.5, 0.3]}))
    assert run(["generate", "--config", str(d / "cfg.json"), "--seed", "3", "--out", str(d / "nets")]) == 0
    return d


def test_generate_outputs(workdir):
    nets = workdir / "nets"
    coll, ids = fio.read_collection(nets)
    assert len(coll) == 3 and coll.total_accounts() > 0
    gen = fio.read_manifest(nets / "generation.txt")
    assert json.loads(gen["config"])["seed"] == 3 and json.loads(gen["config"])["persons"] == 500
    man = fio.read_manifest(nets / "run.manifest.txt")
    assert man["command"] == "generate" and "wall_time_s" in man and f"input.{workdir / 'cfg.json'}" in man
    assert (nets / fio.TRUTH).exists()


def test_generate_deterministic(workdir, tmp_path):
    assert run(["generate", "--config", str(workdir / "cfg.json"), "--seed", "3", "--out", str(tmp_path)]) == 0
    for f in (workdir / "nets").iterdir():
        if f.name != "run.manifest.txt":
            assert (tmp_path / f.name).read_bytes() == f.read_bytes(), f.name


def test_full_pipeline(workdir):
    d, nets = workdir, str(workdir / "nets")
    truth = str(workdir / "nets" / fio.TRUTH)
    assert run(["candidates", "--in", nets, "--threshold", "0.8", "--out", str(d / "cands.tsv")]) == 0
    assert run(["featurize", "--in", nets, "--candidates", str(d / "cands.tsv"), "--out", str(d / "feat.bin")]) == 0
    assert run(["train", "--in", nets, "--candidates", str(d / "cands.tsv"), "--features", str(d / "feat.bin"),
                "--truth", truth, "--epochs", "4", "--out", str(d / "model.txt")]) == 0
    assert run(["align", "--in", nets, "--model", str(d / "model.txt"), "--candidates", str(d / "cands.tsv"),
                "--truth", truth, "--out", str(d / "alignment.tsv")]) == 0
    assert run(["evaluate", "--pred", str(d / "alignment.tsv"), "--truth", truth, "--in", nets,
                "--report", str(d / "report.txt")]) == 0
    rep = parse_report((d / "report.txt").read_text())
    assert list(rep) == ["FullModel"]
    assert set(rep["FullModel"]) == {"0-1", "0-2", "1-2", "all"}
    p, r, f = rep["FullModel"]["all"]
    assert 0 < f <= 1 and f == pytest.approx(2 * p * r / (p + r), abs=1e-3)
    # the report does not depend on the id map source
    assert run(["evaluate", "--pred", str(d / "alignment.tsv"), "--truth", truth,
                "--report", str(d / "report2.txt")]) == 0
    assert (d / "report2.txt").read_text() == (d / "report.txt").read_text()
    for f in ("cands.tsv", "feat.bin", "model.txt", "alignment.tsv", "report.txt"):
        man = fio.read_manifest(d / f"{f}.manifest.txt")
        assert man["version"] and any(k.startswith("input.") for k in man)
    assert run(["build-graph", "--in", nets, "--alignment", str(d / "alignment.tsv"), "--out", str(d / "g")]) == 0
    coll, ids = fio.read_collection(workdir / "nets")
    persons = fio.read_persons(d / "g" / "persons.tsv", ids)
    assert sum(len(p) for p in persons) == coll.total_accounts()
    man = fio.read_manifest(d / "g" / "run.manifest.txt")
    edges = len((d / "g" / "edges.tsv").read_text().splitlines()) - 1
    assert int(man["multi_edges"]) == edges == sum(len(n.edges) for n in coll) - int(man["dropped_intra_person_edges"])


def test_align_exclude_labeled(workdir):
    d, nets = workdir, str(workdir / "nets")
    truth = str(workdir / "nets" / fio.TRUTH)
    if not (d / "model.txt").exists():
        pytest.skip("pipeline test did not run")
    assert run(["align", "--in", nets, "--model", str(d / "model.txt"), "--candidates", str(d / "cands.tsv"),
                "--truth", truth, "--exclude-labeled", "--out", str(d / "al2.tsv")]) == 0
    coll, ids = fio.read_collection(workdir / "nets")
    assert len(fio.read_alignment(d / "al2.tsv", ids)) < len(fio.read_alignment(d / "alignment.tsv", ids))


def test_crawl_sim(workdir, capsys):
    out = workdir / "crawl"
    assert run(["crawl-sim", "--in", str(workdir / "nets"), "--strategy", "bfs", "--budget", "50",
                "--seed", "1", "--out", str(out)]) == 0
    assert "bfs\tbudget=50\toverlap=" in capsys.readouterr().out
    obtained, _ = fio.read_collection(out / "obtained")
    assert obtained.total_accounts() == 50
    assert fio.read_manifest(out / "crawl.txt")["fetched"] == "50"


def test_usage_errors(capsys):
    assert run(["generate", "--seed", "1", "--out", "x", "--bogus"]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err
    assert run(["frobnicate"]) == EXIT_USAGE
    assert run(["generate", "--out", "x"]) == EXIT_USAGE
    assert run(["crawl-sim", "--in", "x", "--out", "y"]) == EXIT_USAGE
    assert run([]) == EXIT_USAGE


def test_missing_truth_is_data_error(workdir, tmp_path):
    pred = tmp_path / "p.tsv"
    pred.write_text(fio.header("alignment") + "\n")
    assert run(["evaluate", "--pred", str(pred), "--truth", str(tmp_path / "none.tsv"),
                "--report", str(tmp_path / "r.txt")]) == EXIT_DATA


def test_data_errors(workdir, tmp_path):
    assert run(["candidates", "--in", str(tmp_path), "--out", str(tmp_path / "c.tsv")]) == EXIT_DATA
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"persons": 3}))
    assert run(["generate", "--config", str(bad), "--seed", "1", "--out", str(tmp_path / "o")]) == EXIT_DATA
    old = tmp_path / "old.tsv"
    old.write_text("#graphweld.alignment\t0\n")
    assert run(["build-graph", "--in", str(workdir / "nets"), "--alignment", str(old),
                "--out", str(tmp_path / "g")]) == EXIT_DATA


def test_numerical_failure_exit_code(workdir, monkeypatch, tmp_path):
    import graphweld.cli as cli
    from graphweld.factorgraph import LearnResult, Parameters

    monkeypatch.setattr(cli, "learn", lambda *a, **k: LearnResult(Parameters.zeros(1), diverged=True,
                                                                  message="epoch 0: nan"))
    nets = str(workdir / "nets")
    cands = tmp_path / "c.tsv"
    assert run(["candidates", "--in", nets, "--out", str(cands)]) == 0
    assert run(["train", "--in", nets, "--candidates", str(cands), "--truth", str(workdir / "nets" / fio.TRUTH),
                "--out", str(tmp_path / "m.txt")]) == EXIT_NUMERIC


@pytest.mark.skipif(shutil.which("graphweld") is None, reason="console script not installed")
def test_console_script_help():
    out = subprocess.run(["graphweld", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("generate", "candidates", "featurize", "train", "align", "evaluate", "build-graph",
                "crawl-sim", "repro"):
        assert cmd in out.stdout
