import pandas as pd
import pytest

from formulation_data import BUNDLED_FORMULATIONS
from odt_predict import EXIT_DATA, EXIT_OK, EXIT_USAGE, main


def run(tmp_path, *argv):
    """main() against a config path in tmp_path; outputs land next to it"""
    return main(["--config", str(tmp_path / "config.toml"), "-q", *argv])


def bundled_lines():
    return BUNDLED_FORMULATIONS.read_text(encoding="utf-8").splitlines()


@pytest.fixture
def trained(tmp_path):
    assert run(tmp_path, "split") == EXIT_OK
    assert run(tmp_path, "train", "--preset", "custom", "--hidden-layers", "8", "--epochs", "5") == EXIT_OK
    return tmp_path


class TestUsage:

    def test_unknown_command(self, tmp_path):
        assert run(tmp_path, "bogus") == EXIT_USAGE

    def test_missing_command(self):
        assert main([]) == EXIT_USAGE

    def test_help(self, capsys):
        assert main(["--help"]) == EXIT_OK
        assert "experiment" in capsys.readouterr().out

    def test_bad_option_value(self, tmp_path):
        assert run(tmp_path, "split", "--n-test", "many") == EXIT_USAGE

    def test_missing_input_file(self, tmp_path):
        assert run(tmp_path, "ingest", "--formulations", str(tmp_path / "nope.csv")) == EXIT_USAGE


class TestIngest:

    def test_bundled_corpus(self, tmp_path, capsys):
        assert run(tmp_path, "ingest") == EXIT_OK
        out = capsys.readouterr().out
        assert "records: 145" in out
        assert "labeled: 144" in out
        assert "api groups: 26" in out
        assert "  Filler: 4" in out

    def test_strict_mode(self, tmp_path):
        assert run(tmp_path, "ingest", "--strict") == EXIT_OK

    def test_empty_file(self, tmp_path, capsys):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        assert run(tmp_path, "ingest", "--formulations", str(empty)) == EXIT_OK
        assert "records: 0" in capsys.readouterr().out

    def test_header_only_file(self, tmp_path, capsys, caplog):
        header_only = tmp_path / "header.csv"
        header_only.write_text(bundled_lines()[0] + "\n")
        assert run(tmp_path, "ingest", "--formulations", str(header_only)) == EXIT_OK
        assert capsys.readouterr().out.strip() == "records: 0"
        assert "holds no formulation rows" in caplog.text

    def test_corrupt_row(self, tmp_path, capsys):
        corrupt = tmp_path / "corrupt.csv"
        lines = bundled_lines()
        lines.insert(3, lines[3] + ",99")
        corrupt.write_text("\n".join(lines) + "\n")
        assert run(tmp_path, "ingest", "--formulations", str(corrupt)) == EXIT_DATA
        assert capsys.readouterr().out == ""


class TestSplit:

    def test_default_sizes(self, tmp_path, capsys):
        assert run(tmp_path, "split") == EXIT_OK
        assert capsys.readouterr().out.strip() == "train: 104 validation: 20 test: 20"
        lines = (tmp_path / "split.txt").read_text().splitlines()
        assert [line.split(":")[0] for line in lines] == ["train", "validation", "test"]

    def test_repeatable(self, tmp_path):
        first, second = tmp_path / "a.txt", tmp_path / "b.txt"
        assert run(tmp_path, "split", "--out", str(first)) == EXIT_OK
        assert run(tmp_path, "split", "--out", str(second)) == EXIT_OK
        assert first.read_bytes() == second.read_bytes()

    def test_seed_changes_split(self, tmp_path):
        assert run(tmp_path, "split", "--strategy", "random", "--seed", "1", "--out", str(tmp_path / "a.txt")) == 0
        assert run(tmp_path, "split", "--strategy", "random", "--seed", "2", "--out", str(tmp_path / "b.txt")) == 0
        assert (tmp_path / "a.txt").read_text() != (tmp_path / "b.txt").read_text()

    def test_explicit_test_rows(self, tmp_path, capsys):
        rows = tmp_path / "test_rows.txt"
        rows.write_text("0,1,2,3,4\n")
        assert run(tmp_path, "split", "--test-indices", str(rows)) == EXIT_OK
        assert "test: 5" in capsys.readouterr().out
        assert (tmp_path / "split.txt").read_text().splitlines()[2] == "test: 0,1,2,3,4"

    def test_validation_too_large(self, tmp_path):
        assert run(tmp_path, "split", "--n-validation", "200") == EXIT_USAGE


class TestTrainEvaluate:

    def test_outputs(self, trained, capsys):
        assert (trained / "model.odtnet").read_text().startswith("ODTNET1\n")
        assert (trained / "model.normalizer.csv").exists()
        report = (trained / "reports" / "training_report.txt").read_text()
        assert "split: train 104 / validation 20 / test 20" in report

    def test_deterministic_artifacts(self, trained):
        assert run(trained, "train", "--preset", "custom", "--hidden-layers", "8", "--epochs", "5",
                   "--out", str(trained / "again.odtnet"), "--report-dir", str(trained / "again")) == EXIT_OK
        assert (trained / "model.odtnet").read_bytes() == (trained / "again.odtnet").read_bytes()
        assert ((trained / "reports" / "training_report.txt").read_bytes()
                == (trained / "again" / "training_report.txt").read_bytes())

    def test_train_needs_split(self, tmp_path):
        assert run(tmp_path, "train", "--epochs", "1") == EXIT_USAGE

    def test_evaluate_all_sets(self, trained, capsys):
        capsys.readouterr()
        assert run(trained, "evaluate") == EXIT_OK
        out = capsys.readouterr().out
        assert [line.split(":")[0] for line in out.splitlines()] == ["train", "validation", "test"]
        frame = pd.read_csv(trained / "reports" / "evaluation.csv")
        assert len(frame) == 144
        assert frame["prediction_sec"].between(0, 100).all()

    def test_evaluate_selected_rows(self, trained):
        rows = trained / "rows.txt"
        rows.write_text("0\n1\n2\n")
        out = trained / "selected.csv"
        assert run(trained, "evaluate", "--indices", str(rows), "--out", str(out)) == EXIT_OK
        frame = pd.read_csv(out)
        assert frame["set"].unique().tolist() == ["selected"]
        assert frame["row_index"].tolist() == [0, 1, 2]

    def test_evaluate_matches_training_report(self, trained, capsys):
        report = (trained / "reports" / "training_report.txt").read_text()
        assert run(trained, "evaluate", "--sets", "test") == EXIT_OK
        summary = capsys.readouterr().out.strip()
        accuracy = summary.split("accuracy_PDT ")[1].split("%")[0]
        test_line = next(line for line in report.splitlines() if line.startswith("test "))
        assert f"{accuracy}%" in test_line

    def test_evaluate_unlabeled_row(self, trained):
        rows = trained / "rows.txt"
        meloxicam = next(i for i, line in enumerate(bundled_lines()[1:]) if line.startswith("Meloxicam"))
        rows.write_text(f"{meloxicam}\n")
        assert run(trained, "evaluate", "--indices", str(rows)) == EXIT_DATA

    def test_evaluate_missing_model(self, tmp_path):
        assert run(tmp_path, "evaluate", "--model", str(tmp_path / "none.odtnet")) == EXIT_USAGE


class TestPredict:

    def test_prints_seconds(self, trained, capsys):
        source = trained / "new.csv"
        source.write_text("\n".join(bundled_lines()[:3]) + "\n")
        capsys.readouterr()
        assert run(trained, "predict", str(source)) == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "row,api_name,prediction_sec"
        assert [line.split(",")[1] for line in lines[1:]] == ["Mirtazapine", "Mirtazapine"]
        assert all(0 <= float(line.split(",")[2]) <= 100 for line in lines[1:])

    def test_label_column_optional(self, trained, capsys):
        source = trained / "new.csv"
        source.write_text("\n".join(line.rsplit(",", 1)[0] for line in bundled_lines()[:2]) + "\n")
        assert run(trained, "predict", str(source)) == EXIT_OK

    def test_unknown_excipient(self, trained):
        lines = bundled_lines()
        source = trained / "new.csv"
        source.write_text(lines[0] + "\n" + lines[1].replace("Mannitol", "Starch") + "\n")
        assert run(trained, "predict", str(source)) == EXIT_DATA


class TestCodecDump:

    def test_corpus_layout(self, tmp_path, capsys):
        assert run(tmp_path, "codec", "dump") == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "index,feature"
        assert lines[1] == "0,api.molecular_weight"
        assert len(lines) == 49

    def test_model_layout_matches_corpus(self, trained, capsys):
        capsys.readouterr()
        assert run(trained, "codec", "dump") == EXIT_OK
        from_corpus = capsys.readouterr().out
        assert run(trained, "codec", "dump", "--model", str(trained / "model.odtnet")) == EXIT_OK
        assert capsys.readouterr().out == from_corpus


class TestExperiment:

    def test_short_run(self, tmp_path, capsys):
        assert run(tmp_path, "experiment", "--seeds", "0", "1", "--epochs", "3") == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0].split() == ["model", "training", "validation", "testing"]
        assert [line.split()[0] for line in lines[1:]] == ["ANN", "DNN"]
        frame = pd.read_csv(tmp_path / "reports" / "experiment.csv")
        assert len(frame) == 4
        assert (tmp_path / "reports" / "experiment_split.txt").exists()

    @pytest.mark.slow
    def test_deep_network_reproduction(self, tmp_path):
        assert run(tmp_path, "experiment") == EXIT_OK
        frame = pd.read_csv(tmp_path / "reports" / "experiment.csv")
        medians = frame.groupby("preset")[["train", "test"]].median()
        print(medians)
        assert medians.loc["dnn", "test"] >= medians.loc["ann", "test"]
        assert medians.loc["dnn", "train"] >= 0.70
        assert medians.loc["dnn", "test"] >= 0.60
