import json

import pandas as pd
import pytest

from sidoscore.cli import (
    EXIT_CONVERGENCE,
    EXIT_IO,
    EXIT_OK,
    EXIT_VALIDATION,
    main,
)

from conftest import game_to_json, random_games


@pytest.fixture
def games_file(tmp_path):
    games = random_games(40, n_accounts_per_role=4, n_champs=3, seed=31)
    path = tmp_path / "games.jsonl"
    path.write_text("\n".join(game_to_json(g) for g in games) + "\n")
    return path


class TestIngest:
    def test_clean_file(self, games_file, tmp_path):
        out = tmp_path / "out"
        assert main(["--out", str(out), "ingest", str(games_file)]) == EXIT_OK
        report = json.loads((out / "ingest_report.json").read_text())
        assert report["parsed"] == 40
        assert report["rejections"] == []
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["stages"][0]["stage"] == "parse"

    def test_bad_lines_reported(self, games_file, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(games_file.read_text() + "not json\n")
        out = tmp_path / "out"
        assert main(["--out", str(out), "ingest", str(bad)]) == EXIT_OK
        report = json.loads((out / "ingest_report.json").read_text())
        assert len(report["rejections"]) == 1
        assert report["rejections"][0]["reason"] == "JSON"

    def test_strict_rejects(self, games_file, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text(games_file.read_text() + "not json\n")
        code = main(["--out", str(tmp_path / "o"), "--strict", "ingest", str(bad)])
        assert code == EXIT_VALIDATION

    def test_missing_file(self, tmp_path):
        code = main(["--out", str(tmp_path / "o"), "ingest", str(tmp_path / "nope.jsonl")])
        assert code == EXIT_IO


class TestSimulateFitScores:
    def test_full_chain(self, tmp_path):
        sim = tmp_path / "sim"
        assert (
            main(
                [
                    "--out",
                    str(sim),
                    "--seed",
                    "3",
                    "simulate",
                    "--n-accounts",
                    "15",
                    "--n-champions",
                    "5",
                ]
            )
            == EXIT_OK
        )
        table = sim / "observations.csv"
        assert table.exists() and (sim / "truth.json").exists()

        fitdir = tmp_path / "fits"
        assert (
            main(
                [
                    "--out",
                    str(fitdir),
                    "--seed",
                    "0",
                    "fit",
                    "--table",
                    str(table),
                    "--chains",
                    "2",
                    "--warmup",
                    "200",
                    "--draws",
                    "200",
                ]
            )
            == EXIT_OK
        )
        fits = list(fitdir.glob("*.sidofit"))
        assert len(fits) == 1

        scoresdir = tmp_path / "scores"
        assert (
            main(["--out", str(scoresdir), "scores", "--player-fit", str(fits[0])])
            == EXIT_OK
        )
        df = pd.read_csv(scoresdir / "scores.csv")
        assert set(df["scope"]) == {"PLAYER"}
        assert len(df) == 15

        mm = tmp_path / "mm"
        assert (
            main(
                [
                    "--out",
                    str(mm),
                    "metametrics",
                    "--scores",
                    str(scoresdir / "scores.csv"),
                    "--scores-b",
                    str(scoresdir / "scores.csv"),
                ]
            )
            == EXIT_OK
        )
        mdf = pd.read_csv(mm / "metametrics.csv")
        kinds = set(mdf["meta_metric"])
        assert "discrimination" in kinds and "stability" in kinds
        stab = mdf[mdf["meta_metric"] == "stability"]["value"].iloc[0]
        assert stab == 1.0  # identical periods are perfectly concordant

        roster = tmp_path / "roster.csv"
        accounts = df["account_id"].tolist()
        lines = ["account_id,player_name,league"]
        lines += [f"{a},PRO_{a},LCS" for a in accounts[:5]]
        roster.write_text("\n".join(lines) + "\n")
        cmp_out = tmp_path / "cmp"
        assert (
            main(
                [
                    "--out",
                    str(cmp_out),
                    "compare",
                    "--scores",
                    str(scoresdir / "scores.csv"),
                    "--roster",
                    str(roster),
                ]
            )
            == EXIT_OK
        )
        cdf = pd.read_csv(cmp_out / "comparisons.csv")
        assert "p_adjusted" in cdf.columns and len(cdf) >= 1

    def test_fit_strict_convergence_gate(self, tmp_path):
        sim = tmp_path / "sim"
        main(["--out", str(sim), "--seed", "1", "simulate", "--n-accounts", "8", "--n-champions", "3"])
        # absurdly short chains cannot pass the R-hat gate
        code = main(
            [
                "--out",
                str(tmp_path / "f"),
                "--strict",
                "fit",
                "--table",
                str(sim / "observations.csv"),
                "--chains",
                "2",
                "--warmup",
                "0",
                "--draws",
                "100",
            ]
        )
        assert code in (EXIT_OK, EXIT_CONVERGENCE)

    def test_fit_covariate_flag_requires_column(self, tmp_path):
        sim = tmp_path / "sim"
        main(["--out", str(sim), "--seed", "2", "simulate", "--n-accounts", "8", "--n-champions", "3"])
        code = main(
            [
                "--out",
                str(tmp_path / "f"),
                "fit",
                "--table",
                str(sim / "observations.csv"),
                "--covariate",
            ]
        )
        assert code == EXIT_VALIDATION


class TestBaselinesCmd:
    def test_ba_from_table(self, tmp_path):
        sim = tmp_path / "sim"
        main(["--out", str(sim), "--seed", "4", "simulate", "--n-accounts", "10", "--n-champions", "4"])
        out = tmp_path / "b"
        assert (
            main(["--out", str(out), "baselines", "--table", str(sim / "observations.csv")])
            == EXIT_OK
        )
        df = pd.read_csv(out / "baseline_scores.csv")
        assert set(df["scope"]) == {"BA"}
        assert len(df) == 10

    def test_pm_from_games(self, games_file, tmp_path):
        out = tmp_path / "b"
        assert (
            main(
                [
                    "--out",
                    str(out),
                    "baselines",
                    "--games",
                    str(games_file),
                    "--phase",
                    "P0_7",
                    "--stat",
                    "GOLD",
                ]
            )
            == EXIT_OK
        )
        df = pd.read_csv(out / "baseline_scores.csv")
        assert set(df["scope"]) == {"PM_OFF", "PM_DEF"}

    def test_no_inputs_is_validation_error(self, tmp_path):
        assert main(["--out", str(tmp_path / "b"), "baselines"]) == EXIT_VALIDATION


class TestReportCmd:
    def test_report_outputs(self, games_file, tmp_path):
        out = tmp_path / "rep"
        assert (
            main(["--out", str(out), "--seed", "0", "report", "--games", str(games_file)])
            == EXIT_OK
        )
        assert (out / "differentials.csv").exists()
        assert (out / "manifest.json").exists()
        svgs = list(out.glob("*.svg"))
        assert svgs

    def test_report_deterministic(self, games_file, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            main(["--out", str(out), "--seed", "0", "report", "--games", str(games_file)])
        for pa in sorted(a.iterdir()):
            assert pa.read_bytes() == (b / pa.name).read_bytes(), pa.name


class TestEntryPoint:
    def test_console_script_installed(self):
        import shutil
        import subprocess

        exe = shutil.which("sidoscore")
        assert exe is not None
        res = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        assert "ingest" in res.stdout
