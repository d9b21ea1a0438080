import json

import pytest

from evalkit.analysis import ReliabilityReport, load_reference_scores
from evalkit.cli import main
from evalkit.corpus_io import read_corpus, write_corpus
from evalkit.dialogue import Corpus, simulation_schema

from conftest import MOVIES
from helpers import act, corpus, dlg, turns, utt

REF = load_reference_scores()


@pytest.fixture()
def catalog_file(tmp_path):
    path = tmp_path / "catalog.json"
    path.write_text(json.dumps(MOVIES))
    return str(path)


def write_scores(path, scores):
    path.write_text(json.dumps(scores))
    return str(path)


def small_corpus():
    return corpus(
        dlg(
            "d1",
            "sysA",
            turns(
                ("USER", ["Disclose"]),
                ("SYSTEM", [act("Recommend", ("TITLE", "Alpha"))], ["Alpha"]),
                ("USER", [act("Accept", ("TITLE", "Alpha"))]),
            ),
            satisfaction="satisfied",
        ),
        dlg(
            "d2",
            "sysB",
            turns(("USER", ["Inquire"]), ("SYSTEM", ["Respond"])),
            satisfaction="frustrated",
        ),
    )


class TestIngest:
    def test_counts_and_total(self, tmp_path, capsys):
        path = tmp_path / "corpus.ndjson"
        write_corpus(small_corpus(), path)
        assert main(["ingest", "--input", str(path)]) == 0
        out = capsys.readouterr().out
        assert "sysA" in out and "sysB" in out
        assert out.strip().endswith("2")

    def test_reference_scale_manifest_totals_467(self, tmp_path, capsys):
        dialogues = []
        for crs_id, count in REF["dialogue_counts"].items():
            for i in range(count):
                dialogues.append(
                    dlg(
                        f"{crs_id}-{i}",
                        crs_id,
                        turns(("USER", ["Other"]), ("SYSTEM", ["Other"])),
                    )
                )
        path = tmp_path / "arena.ndjson"
        write_corpus(Corpus(dialogues=tuple(dialogues)), path)
        assert main(["ingest", "--input", str(path)]) == 0
        out = capsys.readouterr().out
        assert out.strip().splitlines()[-1].split()[-1] == "467"

    def test_empty_file_summarizes_zero(self, tmp_path, capsys):
        path = tmp_path / "empty.ndjson"
        path.write_text("")
        assert main(["ingest", "--input", str(path)]) == 0
        assert capsys.readouterr().out.strip().endswith("0")

    def test_malformed_line_exits_one_with_line_number(self, tmp_path, capsys):
        path = tmp_path / "broken.ndjson"
        path.write_text('{"schema_version":"1"}\n{oops}\n')
        assert main(["ingest", "--input", str(path)]) == 1
        assert "line 2" in capsys.readouterr().err


class TestAnnotate:
    def test_rule_mode_annotates(self, tmp_path, catalog_file):
        raw = corpus(
            dlg(
                "d1",
                "sysA",
                [
                    utt(0, "USER", text="I'm looking for something with laughs"),
                    utt(1, "SYSTEM", text="Have you seen Paper Moon?"),
                    utt(2, "USER", text="I'll watch that one, thanks!"),
                ],
            )
        )
        src = tmp_path / "raw.ndjson"
        write_corpus(raw, src)
        out = tmp_path / "annotated.ndjson"
        assert (
            main(
                [
                    "annotate",
                    "--input",
                    str(src),
                    "--output",
                    str(out),
                    "--catalog",
                    catalog_file,
                ]
            )
            == 0
        )
        annotated = read_corpus(out)
        intents = [
            [a.intent for a in u.acts] for u in annotated.dialogues[0].utterances
        ]
        assert intents == [["Disclose"], ["Recommend"], ["Accept"]]
        recommend = annotated.dialogues[0].utterances[1].acts[0]
        assert recommend.slot_values("TITLE") == ("Paper Moon",)

    def test_rerun_without_overwrite_is_idempotent(self, tmp_path, catalog_file):
        raw = corpus(
            dlg("d1", "sysA", [utt(0, "USER", text="I'll watch it, thanks!")])
        )
        src = tmp_path / "raw.ndjson"
        write_corpus(raw, src)
        first = tmp_path / "first.ndjson"
        second = tmp_path / "second.ndjson"
        assert main(["annotate", "--input", str(src), "--output", str(first)]) == 0
        assert main(["annotate", "--input", str(first), "--output", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()

    def test_llm_mode_without_endpoint_is_config_error(
        self, tmp_path, capsys, monkeypatch
    ):
        monkeypatch.delenv("EVALKIT_LLM_ENDPOINT", raising=False)
        src = tmp_path / "raw.ndjson"
        write_corpus(corpus(dlg("d1", "sysA", [utt(0, "USER", text="hi")])), src)
        code = main(
            ["annotate", "--input", str(src), "--output", str(tmp_path / "o"), "--mode", "llm"]
        )
        assert code == 2
        assert "EVALKIT_LLM_ENDPOINT" in capsys.readouterr().err

    def test_llm_mode_with_mock_endpoint(self, tmp_path):
        src = tmp_path / "raw.ndjson"
        write_corpus(corpus(dlg("d1", "sysA", [utt(0, "USER", text="sure!")])), src)
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["Accept()"]))
        out = tmp_path / "annotated.ndjson"
        code = main(
            [
                "annotate",
                "--input",
                str(src),
                "--output",
                str(out),
                "--mode",
                "llm",
                "--llm-endpoint",
                f"mock:{script}",
            ]
        )
        assert code == 0
        annotated = read_corpus(out)
        assert annotated.dialogues[0].utterances[0].acts[0].intent == "Accept"

    def test_endpoint_from_environment(self, tmp_path, monkeypatch):
        src = tmp_path / "raw.ndjson"
        write_corpus(corpus(dlg("d1", "sysA", [utt(0, "USER", text="sure!")])), src)
        script = tmp_path / "script.json"
        script.write_text(json.dumps(["Accept()"]))
        monkeypatch.setenv("EVALKIT_LLM_ENDPOINT", f"mock:{script}")
        out = tmp_path / "annotated.ndjson"
        code = main(
            ["annotate", "--input", str(src), "--output", str(out), "--mode", "llm"]
        )
        assert code == 0
        annotated = read_corpus(out)
        assert annotated.dialogues[0].utterances[0].acts[0].intent == "Accept"

    def test_flag_beats_config_file_beats_environment(self, tmp_path, monkeypatch):
        src = tmp_path / "raw.ndjson"
        write_corpus(corpus(dlg("d1", "sysA", [utt(0, "USER", text="sure!")])), src)
        flag_script = tmp_path / "flag.json"
        flag_script.write_text(json.dumps(["Accept()"]))
        config_script = tmp_path / "config.json"
        config_script.write_text(json.dumps(["Reject()"]))
        env_script = tmp_path / "env.json"
        env_script.write_text(json.dumps(["Inquire()"]))
        config_file = tmp_path / "settings.json"
        config_file.write_text(json.dumps({"llm_endpoint": f"mock:{config_script}"}))
        monkeypatch.setenv("EVALKIT_LLM_ENDPOINT", f"mock:{env_script}")

        def annotate_with(extra):
            out = tmp_path / "out.ndjson"
            code = main(
                ["annotate", "--input", str(src), "--output", str(out), "--mode", "llm"]
                + extra
            )
            assert code == 0
            return read_corpus(out).dialogues[0].utterances[0].acts[0].intent

        assert annotate_with(["--config", str(config_file), "--llm-endpoint", f"mock:{flag_script}"]) == "Accept"
        assert annotate_with(["--config", str(config_file)]) == "Reject"
        assert annotate_with([]) == "Inquire"


class TestEvaluate:
    def test_metrics_match_module_values(self, tmp_path, capsys):
        path = tmp_path / "corpus.ndjson"
        write_corpus(small_corpus(), path)
        out = tmp_path / "report.ndjson"
        code = main(
            [
                "evaluate",
                "--input",
                str(path),
                "--output",
                str(out),
                "--metrics",
                "sr,srrr,rdl",
            ]
        )
        assert code == 0
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        header, records = lines[0], lines[1:]
        assert "config_hash" in header and "seed" in header
        by_metric = {r["metric"]: r for r in records}
        assert by_metric["SR"]["per_system"] == {"sysA": 1.0, "sysB": 0.0}
        assert by_metric["SRRR"]["per_system"] == {"sysA": 1.0, "sysB": 0.0}
        assert by_metric["RDL"]["per_system"]["sysA"] == pytest.approx(1 / 3)

    def test_unknown_metric_lists_names(self, tmp_path, capsys):
        path = tmp_path / "corpus.ndjson"
        write_corpus(small_corpus(), path)
        code = main(
            ["evaluate", "--input", str(path), "--output", str(tmp_path / "r"), "--metrics", "zzz"]
        )
        assert code == 2
        err = capsys.readouterr().err
        for name in ("sr", "srrr", "rdl", "recall"):
            assert name in err

    def test_empty_corpus_is_an_error(self, tmp_path, capsys):
        path = tmp_path / "empty.ndjson"
        path.write_text('{"schema_version":"1"}\n')
        code = main(
            ["evaluate", "--input", str(path), "--output", str(tmp_path / "r")]
        )
        assert code == 1
        assert "no dialogues" in capsys.readouterr().err

    def test_multiple_inputs_merge(self, tmp_path):
        c = small_corpus()
        first = tmp_path / "a.ndjson"
        second = tmp_path / "b.ndjson"
        write_corpus(corpus(c.dialogues[0]), first)
        write_corpus(corpus(c.dialogues[1]), second)
        out = tmp_path / "report.ndjson"
        code = main(
            [
                "evaluate",
                "--input",
                str(first),
                "--input",
                str(second),
                "--output",
                str(out),
                "--metrics",
                "sr",
            ]
        )
        assert code == 0
        records = [json.loads(l) for l in out.read_text().splitlines()][1:]
        assert set(records[0]["per_system"]) == {"sysA", "sysB"}


class TestSimulate:
    def test_abus_against_stub_is_reproducible(self, tmp_path, catalog_file):
        args = [
            "simulate",
            "--simulator",
            "abus",
            "--crs",
            "stub:always-recommend",
            "--catalog",
            catalog_file,
            "-n",
            "3",
            "--seed",
            "21",
        ]
        first = tmp_path / "one.ndjson"
        second = tmp_path / "two.ndjson"
        assert main(args + ["--output", str(first)]) == 0
        assert main(args + ["--output", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        generated = read_corpus(first, simulation_schema())
        assert len(generated) == 3
        assert all(d.provenance == "simulated" for d in generated.dialogues)

    def test_llmus_with_mock_script_is_byte_identical(self, tmp_path, catalog_file):
        script = tmp_path / "script.json"
        script.write_text(
            json.dumps(
                [
                    "Hi, I'm looking for a comedy.",
                    "continue",
                    "Great, I'll watch Midnight Run. Thanks!",
                    "abort: satisfied",
                ]
            )
        )
        args = [
            "simulate",
            "--simulator",
            "llm-us",
            "--crs",
            "stub:always-recommend",
            "--catalog",
            catalog_file,
            "-n",
            "2",
            "--seed",
            "3",
            "--llm-endpoint",
            f"mock:{script}",
        ]
        first = tmp_path / "one.ndjson"
        second = tmp_path / "two.ndjson"
        assert main(args + ["--output", str(first)]) == 0
        assert main(args + ["--output", str(second)]) == 0
        assert first.read_bytes() == second.read_bytes()
        generated = read_corpus(first, simulation_schema())
        assert len(generated) == 2
        assert all(d.simulator_id == "llm-us" for d in generated.dialogues)

    def test_default_batch_size_is_200(self, tmp_path, catalog_file):
        out = tmp_path / "batch.ndjson"
        code = main(
            [
                "simulate",
                "--simulator",
                "abus",
                "--crs",
                "stub:goodbye",
                "--catalog",
                catalog_file,
                "--output",
                str(out),
            ]
        )
        assert code == 0
        assert len(read_corpus(out, simulation_schema())) == 200

    def test_limits_from_config_file(self, tmp_path, catalog_file):
        config = tmp_path / "run.json"
        config.write_text(json.dumps({"n": 2, "seed": 33, "max_utterances": 4}))
        out = tmp_path / "sim.ndjson"
        code = main(
            [
                "simulate",
                "--simulator",
                "abus",
                "--crs",
                "stub:always-recommend",
                "--catalog",
                catalog_file,
                "--config",
                str(config),
                "--output",
                str(out),
            ]
        )
        assert code == 0
        generated = read_corpus(out, simulation_schema())
        assert len(generated) == 2
        assert all(len(d) <= 4 for d in generated.dialogues)
        assert generated.extra["seed"] == 33
        # A flag still beats the config file.
        out2 = tmp_path / "sim2.ndjson"
        assert (
            main(
                [
                    "simulate",
                    "--simulator",
                    "abus",
                    "--crs",
                    "stub:always-recommend",
                    "--catalog",
                    catalog_file,
                    "--config",
                    str(config),
                    "-n",
                    "1",
                    "--output",
                    str(out2),
                ]
            )
            == 0
        )
        assert len(read_corpus(out2, simulation_schema())) == 1

    def test_unknown_stub_is_config_error(self, tmp_path, catalog_file, capsys):
        code = main(
            [
                "simulate",
                "--simulator",
                "abus",
                "--crs",
                "stub:nonsense",
                "--catalog",
                catalog_file,
                "-n",
                "1",
                "--output",
                str(tmp_path / "x"),
            ]
        )
        assert code == 1  # unknown stub surfaces as a validation error

    def test_unreachable_endpoint_all_fail_exits_three(self, tmp_path, catalog_file, capsys):
        code = main(
            [
                "simulate",
                "--simulator",
                "abus",
                "--crs",
                "http://127.0.0.1:9/chat",
                "--catalog",
                catalog_file,
                "-n",
                "2",
                "--output",
                str(tmp_path / "x"),
            ]
        )
        assert code == 3
        assert "connector" in capsys.readouterr().err.lower()


class TestCompare:
    def test_identical_inputs_give_tau_one_and_zero_diffs(self, tmp_path):
        scores = {"A": 0.3, "B": 0.1}
        ref = write_scores(tmp_path / "ref.json", scores)
        sat = write_scores(tmp_path / "sat.json", {"A": 0.9, "B": 0.2})
        out = tmp_path / "rel.ndjson"
        code = main(
            [
                "compare",
                "--candidate",
                f"self={ref}",
                "--reference",
                ref,
                "--satisfaction",
                sat,
                "--output",
                str(out),
            ]
        )
        assert code == 0
        record = [json.loads(l) for l in out.read_text().splitlines()][1]
        report = ReliabilityReport.from_record(record)
        assert report.tau_b_vs_satisfaction == 1.0
        assert report.average_abs_diff == 0.0

    def test_disjoint_system_sets_exit_one(self, tmp_path, capsys):
        ref = write_scores(tmp_path / "ref.json", {"A": 0.3})
        cand = write_scores(tmp_path / "cand.json", {"B": 0.1})
        sat = write_scores(tmp_path / "sat.json", {"A": 0.9, "B": 0.2})
        code = main(
            [
                "compare",
                "--candidate",
                f"c={cand}",
                "--reference",
                ref,
                "--satisfaction",
                sat,
                "--output",
                str(tmp_path / "o"),
            ]
        )
        assert code == 1

    def test_reference_fixture_comparison(self, tmp_path):
        ref = write_scores(tmp_path / "rdl.json", REF["human_metrics"]["rdl"])
        sat = write_scores(tmp_path / "sat.json", REF["satisfaction"])
        llm = write_scores(tmp_path / "llm.json", REF["simulated_rdl"]["llm_us"])
        abus = write_scores(tmp_path / "abus.json", REF["simulated_rdl"]["abus"])
        out = tmp_path / "rel.ndjson"
        code = main(
            [
                "compare",
                "--candidate",
                f"llm_us={llm}",
                "--candidate",
                f"abus={abus}",
                "--reference",
                ref,
                "--satisfaction",
                sat,
                "--reference-name",
                "human",
                "--output",
                str(out),
            ]
        )
        assert code == 0
        records = [json.loads(l) for l in out.read_text().splitlines()][1:]
        by_name = {r["candidate"]: ReliabilityReport.from_record(r) for r in records}
        assert by_name["llm_us"].tau_b_vs_satisfaction == pytest.approx(0.366, abs=5e-3)
        assert by_name["abus"].tau_b_vs_satisfaction == pytest.approx(0.143, abs=5e-3)
        assert by_name["llm_us"].average_abs_diff == pytest.approx(0.015, abs=1e-3)
        assert by_name["abus"].average_abs_diff == pytest.approx(0.107, abs=1e-3)

    def test_metric_correlations_through_compare(self, tmp_path):
        sat = write_scores(tmp_path / "sat.json", REF["satisfaction"])
        candidates = []
        for name in ("rdl", "success_rate", "srrr", "recall_at_1"):
            path = write_scores(tmp_path / f"{name}.json", REF["human_metrics"][name])
            candidates += ["--candidate", f"{name}={path}"]
        out = tmp_path / "rel.ndjson"
        code = main(
            ["compare"]
            + candidates
            + ["--reference", sat, "--satisfaction", sat, "--output", str(out)]
        )
        assert code == 0
        records = [json.loads(l) for l in out.read_text().splitlines()][1:]
        taus = {r["candidate"]: r["tau_b_vs_satisfaction"] for r in records}
        assert taus["rdl"] == pytest.approx(0.78, abs=5e-3)
        assert taus["success_rate"] == pytest.approx(0.67, abs=5e-3)
        assert taus["srrr"] == pytest.approx(0.32, abs=5e-3)
        assert taus["recall_at_1"] == pytest.approx(0.07, abs=5e-3)

    def test_report_file_as_candidate_with_metric_selector(self, tmp_path):
        path = tmp_path / "corpus.ndjson"
        write_corpus(small_corpus(), path)
        report_path = tmp_path / "report.ndjson"
        assert (
            main(
                [
                    "evaluate",
                    "--input",
                    str(path),
                    "--output",
                    str(report_path),
                    "--metrics",
                    "sr,rdl",
                ]
            )
            == 0
        )
        ref = write_scores(tmp_path / "ref.json", {"sysA": 0.4, "sysB": 0.1})
        sat = write_scores(tmp_path / "sat.json", {"sysA": 0.8, "sysB": 0.3})
        out = tmp_path / "rel.ndjson"
        code = main(
            [
                "compare",
                "--candidate",
                f"mine={report_path}",
                "--metric",
                "RDL",
                "--reference",
                ref,
                "--satisfaction",
                sat,
                "--output",
                str(out),
            ]
        )
        assert code == 0
