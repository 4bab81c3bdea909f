import argparse
import json
import re
from pathlib import Path

import pandas as pd
import pytest

from cli import build_parser, main, run
from manifest import hash_files, load_invocations

DOC = Path(__file__).parent / "CLI_DOCUMENTATION.md"


def error_record(capsys):
    lines = [l for l in capsys.readouterr().err.splitlines() if l.startswith("georeg-error ")]
    assert len(lines) == 1
    return json.loads(lines[0][len("georeg-error "):])


@pytest.fixture
def ws(tmp_path):
    """A simulated line drive plus a manifest, all under tmp_path."""
    manifest = str(tmp_path / "manifest.db")
    sim = tmp_path / "sim"
    assert run(["--manifest", manifest, "simulate", "--preset", "line", "--seed", "1", "--out", str(sim)]) == 0

    def call(*argv):
        return run(["--manifest", manifest, *[str(a) for a in argv]])

    return {"root": tmp_path, "sim": sim, "manifest": manifest, "call": call}


class TestPipeline:

    def test_full_progression(self, ws, capsys):
        call, sim, root = ws["call"], ws["sim"], ws["root"]
        origin = sim / "origin.cfg"
        assert call("filter-gps", "--odom", sim / "odom.csv", "--gps", sim / "gps.csv", "--origin", origin,
                    "--out-path", root / "path.csv", "--out-decisions", root / "decisions.csv") == 0

        assert call("align-rigid", "--graph", sim / "graph.g2o", "--gps", sim / "gps.csv",
                    "--pose-times", sim / "pose_times.csv", "--decisions", root / "decisions.csv",
                    "--origin", origin, "--out", root / "rigid.g2o") == 0
        report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert set(report) == {"theta", "tx", "ty", "chi2", "pairs"} and report["pairs"] > 0

        assert call("optimize", "--graph", sim / "graph.g2o", "--gps-priors", root / "path.csv",
                    "--pose-times", sim / "pose_times.csv", "--out", root / "loose.g2o",
                    "--report", root / "loose.json") == 0
        assert "gps" in json.loads((root / "loose.json").read_text())

        assert call("optimize", "--graph", root / "loose.g2o", "--anchors", sim / "labels.csv", "--origin", origin,
                    "--out", root / "anchored.g2o", "--report", root / "anchored.json") == 0
        assert json.loads((root / "anchored.json").read_text())["anchors"]["matched"] > 0

        assert call("evaluate", "--graph", root / "anchored.g2o", "--labels", sim / "labels.csv", "--origin", origin,
                    "--n-values", "0,1", "--out-curve", root / "curve.csv",
                    "--out-residuals", root / "residuals.csv") == 0
        curve = pd.read_csv(root / "curve.csv")
        assert list(curve.columns) == ["n", "combos", "mean_err", "stddev", "failures"]
        assert curve["n"].tolist() == [0, 1]

        assert call("project", "--graph", root / "anchored.g2o", "--scans", sim / "scans.csv", "--origin", origin,
                    "--out-points", root / "points.csv", "--grid", root / "grid", "--cell-size", "1.0") == 0
        assert (root / "grid.pgm").is_file() and (root / "grid.pgw").is_file()

        commands = [inv.command for inv in load_invocations(ws["manifest"])]
        assert commands == ["simulate", "filter-gps", "align-rigid", "optimize", "optimize", "evaluate", "project"]

    def test_simulate_is_deterministic(self, ws):
        other = ws["root"] / "again"
        assert ws["call"]("simulate", "--preset", "line", "--seed", "1", "--out", other) == 0
        names = sorted(p.name for p in ws["sim"].iterdir())
        first = hash_files([ws["sim"] / n for n in names])
        second = hash_files([other / n for n in names])
        assert list(first.values()) == list(second.values())

    def test_main_configures_logging(self, tmp_path):
        assert main(["--manifest", str(tmp_path / "m.db"), "--log-level", "WARNING", "simulate",
                     "--preset", "line", "--out", str(tmp_path / "sim")]) == 0


class TestExitCodes:

    def test_missing_input_is_2(self, ws, capsys):
        root = ws["root"]
        code = ws["call"]("filter-gps", "--odom", root / "missing.csv", "--gps", ws["sim"] / "gps.csv",
                          "--out-path", root / "path.csv")
        assert code == 2
        assert error_record(capsys)["exit_code"] == 2
        last = load_invocations(ws["manifest"])[-1]
        assert last.exit_code == 2 and last.outputs == {}

    def test_parse_error_names_position(self, ws, capsys):
        bad = ws["root"] / "bad.g2o"
        bad.write_text("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1.0 abc 0\n")
        assert ws["call"]("optimize", "--graph", bad, "--out", ws["root"] / "out.g2o") == 2
        record = error_record(capsys)
        assert (record["error"], record["line"], record["column"]) == ("parse", 2, 18)

    def test_bad_config_key_is_4(self, ws, capsys):
        cfg = ws["root"] / "sim.cfg"
        cfg.write_text("no_such_key = 1\n")
        assert ws["call"]("simulate", "--config", cfg, "--out", ws["root"] / "x") == 4
        assert error_record(capsys)["key"] == "no_such_key"

    def test_gps_priors_need_pose_times(self, ws, capsys):
        sim = ws["sim"]
        code = ws["call"]("optimize", "--graph", sim / "graph.g2o", "--gps-priors", sim / "truth.csv",
                          "--out", ws["root"] / "out.g2o")
        assert code == 4
        assert error_record(capsys)["key"] == "pose_times"

    def test_gauge_failure_is_3(self, ws, capsys):
        free = ws["root"] / "free.g2o"
        free.write_text("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n")
        assert ws["call"]("optimize", "--graph", free, "--out", ws["root"] / "out.g2o") == 3
        assert error_record(capsys)["error"] == "gauge"
        assert not (ws["root"] / "out.g2o").exists()


class TestReplay:

    def _filter(self, ws, cfg):
        sim, root = ws["sim"], ws["root"]
        return ws["call"]("filter-gps", "--odom", sim / "odom.csv", "--gps", sim / "gps.csv",
                          "--origin", sim / "origin.cfg", "--config", cfg,
                          "--out-path", root / "path.csv", "--out-decisions", root / "decisions.csv")

    def test_replay_reproduces_outputs(self, ws):
        cfg = ws["root"] / "filter.cfg"
        cfg.write_text("gate_confidence = 0.95\n")
        assert self._filter(ws, cfg) == 0
        assert ws["call"]("replay") == 0
        assert [inv.command for inv in load_invocations(ws["manifest"])] == ["simulate", "filter-gps"]

    def test_replay_detects_changed_output(self, ws, capsys):
        cfg = ws["root"] / "filter.cfg"
        cfg.write_text("gate_confidence = 0.95\n")
        assert self._filter(ws, cfg) == 0
        cfg.write_text("gate_confidence = 0.5\n")
        assert ws["call"]("replay") == 3
        record = error_record(capsys)
        assert any(m.get("file", "").endswith("decisions.csv") for m in record["mismatches"])

    def test_empty_manifest(self, tmp_path, capsys):
        assert run(["--manifest", str(tmp_path / "none.db"), "replay"]) == 2
        error_record(capsys)


class TestDocumentation:

    def _documented(self):
        sections, current = {}, None
        for line in DOC.read_text().splitlines():
            heading = re.match(r"^## (?:`georeg ([a-z-]+)`|(Global options))", line)
            if heading:
                current = heading.group(1) or "global"
                sections[current] = set()
            elif line.startswith("## "):
                current = None
            elif current:
                sections[current].update(re.findall(r"`(--[a-z][a-z-]*)`", line))
        return sections

    def test_every_flag_documented(self):
        parser = build_parser()
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        documented = self._documented()

        def flags(p):
            return {s for a in p._actions for s in a.option_strings if s.startswith("--") and s != "--help"}

        assert documented.pop("global") == flags(parser)
        assert set(documented) == set(sub.choices)
        for name, subparser in sub.choices.items():
            assert documented[name] == flags(subparser), name
