import csv
import json
import logging
import subprocess
import sys

import pytest

from clickcascade.cli import main
from clickcascade.errors import InvalidInputError, RecordError
from clickcascade.io import ExperimentConfig, atomic_write_text, load_packages_csv, read_results

HEADER = "test_id,headline,lede,impressions,clicks\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def packages_file(tmp_path, n_tests=8):
    heads = ["You Won't Believe This", "How To Cook Rice", "10 Cats Who Rule", "Why Is The Sky Blue?",
             "She Did Not Expect THIS", "The Senate Votes Today"]
    rows = []
    for t in range(n_tests):
        for k in range(3):
            imp = 1000 + 37 * t + 11 * k
            rows.append(f't{t},"{heads[(t + k) % 6]}",garden soil plants story {t % 2},{imp},{(t * 7 + k * 13) % 90 + 5}')
    return write(tmp_path / "packages.csv", HEADER + "\n".join(rows) + "\n")


def experiment_file(tmp_path, scenario, name=None, **sim):
    cfg = {"schema_version": 1,
           "simulation": {"n_agents": 40, "total_steps": 20, "round_length": 5, "scenario": scenario,
                          "master_seed": 3, "n_replicas": 3, **sim},
           "model": {"synthetic": {"seed": 0}},
           "analysis": {"bootstrap": 100, "bootstrap_seed": 1}}
    return write(tmp_path / (name or f"exp_{scenario}.json"), json.dumps(cfg))


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


class TestPackagesCsv:
    def test_three_rows(self, tmp_path):
        p = write(tmp_path / "p.csv", HEADER + "a,One,lede,10,1\na,Two,,10,2\nb,Three,,5,0\n")
        recs = load_packages_csv(p)
        assert len(recs) == 3 and recs[1].lede is None and recs[2].impressions == 5

    def test_errors_aggregated_with_line_numbers(self, tmp_path):
        p = write(tmp_path / "p.csv", HEADER + "a,One,,10,1\na,Two,,5,10\nb,Three,,x,0\nc,Four,,3\n")
        with pytest.raises(RecordError) as info:
            load_packages_csv(p)
        assert [row for row, _ in info.value.problems] == [3, 4, 5]
        assert "row 3" in str(info.value)

    def test_header_only(self, tmp_path, caplog):
        with caplog.at_level(logging.WARNING):
            assert load_packages_csv(write(tmp_path / "p.csv", HEADER)) == []
        assert "no package rows" in caplog.text

    def test_bad_header(self, tmp_path):
        with pytest.raises(RecordError):
            load_packages_csv(write(tmp_path / "p.csv", "id,title\n1,x\n"))

    def test_quoted_fields(self, tmp_path):
        p = write(tmp_path / "p.csv", HEADER + 'a,"Hello, ""World""","multi\nline",10,1\n')
        rec = load_packages_csv(p)[0]
        assert rec.headline == 'Hello, "World"' and rec.lede == "multi\nline"


class TestExperimentConfig:
    def test_schema_version(self, tmp_path):
        with pytest.raises(InvalidInputError, match="schema_version"):
            ExperimentConfig.from_dict({"schema_version": 2, "model": {"synthetic": {}}})

    def test_missing_model_file(self, tmp_path):
        data = {"schema_version": 1, "simulation": {}, "model": {"path": "nope.json"}}
        with pytest.raises(InvalidInputError, match="nope.json"):
            ExperimentConfig.from_dict(data, tmp_path)

    def test_unknown_field(self):
        with pytest.raises(InvalidInputError, match="simulation"):
            ExperimentConfig.from_dict({"schema_version": 1, "simulation": {"agents": 3},
                                        "model": {"synthetic": {}}})

    def test_model_from_file(self, tmp_path):
        write(tmp_path / "m.json", json.dumps({"w0": 0.4, "weights": [0.01] * 50}))
        data = {"schema_version": 1, "simulation": {"n_agents": 20, "total_steps": 5}, "model": {"path": "m.json"}}
        cfg = ExperimentConfig.from_dict(data, tmp_path)
        assert cfg.decision_model().w0 == 0.4


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write_text(tmp_path / "a.txt", "x")
    atomic_write_text(tmp_path / "a.txt", "y")
    assert [p.name for p in tmp_path.iterdir()] == ["a.txt"]
    assert (tmp_path / "a.txt").read_text() == "y"


class TestCli:
    def test_missing_config(self, tmp_path, capsys):
        code, _, err = run(["simulate", "--config", tmp_path / "missing.json", "--output-dir", tmp_path / "o"], capsys)
        assert code != 0
        msg = json.loads(err)
        assert msg["path"].endswith("missing.json") and "missing.json" in msg["message"]

    def test_invalid_config_values(self, tmp_path, capsys):
        p = experiment_file(tmp_path, "pure", infection_rate=2.0)
        code, _, err = run(["simulate", "--config", p, "--output-dir", tmp_path / "o"], capsys)
        assert code == 2 and "infection_rate" in json.loads(err)["message"]

    def test_bad_records(self, tmp_path, capsys):
        p = write(tmp_path / "p.csv", HEADER + "a,One,,5,10\n")
        code, _, err = run(["extract", "--input", p, "--output", tmp_path / "f.csv"], capsys)
        assert code == 2
        assert json.loads(err)["problems"] == [{"row": 2, "message": "clicks (10) > impressions (5)"}]

    def test_abtest_bayes(self, capsys):
        code, out, _ = run(["abtest", "--clicks-a", 10, "--impressions-a", 1000, "--clicks-b", 100,
                            "--impressions-b", 1000], capsys)
        res = json.loads(out)
        assert code == 0 and res["action"] == "promote_variant" and res["uplift"] == pytest.approx(9.0)

    def test_abtest_ztest(self, capsys):
        code, out, _ = run(["abtest", "--clicks-a", 10, "--impressions-a", 1000, "--clicks-b", 100,
                            "--impressions-b", 1000, "--method", "ztest"], capsys)
        res = json.loads(out)
        assert res["decision"] == "significant_b_better" and 8.7 < res["z"] < 8.9

    def test_abtest_invalid(self, capsys):
        code, _, err = run(["abtest", "--clicks-a", 10, "--impressions-a", 5, "--clicks-b", 1,
                            "--impressions-b", 5], capsys)
        assert code == 2 and "exceed" in json.loads(err)["message"]

    def test_text_pipeline_and_replay(self, tmp_path, capsys):
        pk = packages_file(tmp_path)
        lda, feats, model = tmp_path / "lda.json", tmp_path / "features.csv", tmp_path / "model.json"
        assert run(["topics", "fit", "--input", pk, "--k", 2, "--iterations", 20, "--min-df", 1,
                    "--output", lda], capsys)[0] == 0
        assert run(["topics", "apply", "--input", pk, "--model", lda, "--output", tmp_path / "props.csv"],
                   capsys)[0] == 0
        assert run(["extract", "--input", pk, "--lda-model", lda, "--output", feats], capsys)[0] == 0
        with feats.open() as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "package_id" and rows[0][-1] == "ctr" and "topic_1" in rows[0]
        assert len(rows) == 25
        assert run(["fit", "--features", feats, "--grid-size", 10, "--rule", "one-se", "--output", model],
                   capsys)[0] == 0
        fitted = json.loads(model.read_text())
        assert fitted["names"] == rows[0][1:-1] and fitted["cv"]["k_folds"] == 5
        for manifest in (lda, feats, model):
            m = tmp_path / (manifest.name + ".manifest.json")
            assert json.loads(m.read_text())["artifacts"]
            code, out, _ = run(["replay", m], capsys)
            assert code == 0 and all(json.loads(out)["identical"].values())

    def test_simulate_analyze(self, tmp_path, capsys):
        dirs = {}
        for sc in ("pure", "ab_led"):
            dirs[sc] = tmp_path / f"out_{sc}"
            code, _, err = run(["simulate", "--config", experiment_file(tmp_path, sc), "--output-dir", dirs[sc]],
                               capsys)
            assert code == 0, err
            assert {p.name for p in dirs[sc].iterdir()} == {"results.json", "rounds.csv", "config.json",
                                                            "manifest.json"}
        rounds = {sc: [r for r in csv.DictReader((d / "rounds.csv").open()) if r["round"] == "0"]
                  for sc, d in dirs.items()}
        assert rounds["pure"] == rounds["ab_led"]
        assert list(rounds["pure"][0]) == ["replica", "round", "arm", "genotype", "impressions", "clicks",
                                           "ctr", "decision"]
        manifest = json.loads((dirs["pure"] / "manifest.json").read_text())
        assert manifest["seeds"]["master_seed"] == 3 and len(manifest["seeds"]["replica_seeds"]) == 3
        assert manifest["config"]["simulation"]["scenario"] == "pure"

        report = tmp_path / "report.json"
        code, _, err = run(["analyze", "--inputs", dirs["pure"], dirs["ab_led"], "--output", report], capsys)
        assert code == 0, err
        rep = json.loads(report.read_text())
        assert set(rep["comparison"]["mean_final_entropy"]) == {"pure", "ab_led"}
        assert rep["scenarios"]["pure"]["final"]["entropy_bootstrap"]["n_resamples"] == 100

        code, out, _ = run(["replay", dirs["ab_led"] / "manifest.json"], capsys)
        assert code == 0 and json.loads(out)["identical"] == {"config": True, "results": True, "rounds": True}

    def test_replay_detects_tampering(self, tmp_path, capsys):
        out_dir = tmp_path / "o"
        run(["simulate", "--config", experiment_file(tmp_path, "pure"), "--output-dir", out_dir], capsys)
        m = json.loads((out_dir / "manifest.json").read_text())
        m["artifacts"]["rounds"]["sha256"] = "0" * 64
        (out_dir / "manifest.json").write_text(json.dumps(m))
        code, _, err = run(["replay", out_dir / "manifest.json"], capsys)
        assert code == 4 and "differ" in json.loads(err)["message"]

    def test_results_reload(self, tmp_path, capsys):
        run(["simulate", "--config", experiment_file(tmp_path, "ab_led"), "--output-dir", tmp_path / "o"], capsys)
        cfg, results = read_results(tmp_path / "o" / "results.json")
        assert cfg["scenario"] == "ab_led" and [r.replica_index for r in results] == [0, 1, 2]

    def test_console_script(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "clickcascade.cli", "abtest", "--clicks-a", "1",
                               "--impressions-a", "2", "--clicks-b", "1", "--impressions-b", "2"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert json.loads(proc.stdout)["action"] == "keep_control"
