import csv
import io
import json

import pytest

from rarefind.cli import bench_main, dataset_main, main
from rarefind.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-data")
    spec = SyntheticSpec(name="clitoy", num_classes=3, dim=6,
                         class_sizes=(30, 60, 90), seed=8)
    _, manifest = generate_synthetic(spec, out)
    return manifest


class TestDatasetCommands:
    def test_validate_ok(self, cli_dataset, capsys):
        assert dataset_main(["validate", str(cli_dataset)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("OK: clitoy")
        assert "180 samples" in out

    def test_validate_broken_file(self, cli_dataset, tmp_path, capsys):
        broken = tmp_path / "broken.manifest.json"
        raw = json.loads(cli_dataset.read_text())
        raw["num_samples"] = 9999
        broken.write_text(json.dumps(raw))
        # resolve data files relative to the original location
        for key in ("features_file", "labels_file"):
            raw[key] = str(cli_dataset.parent / raw[key])
        raw["split_files"] = {k: str(cli_dataset.parent / v)
                              for k, v in raw["split_files"].items()}
        broken.write_text(json.dumps(raw))
        assert dataset_main(["validate", str(broken)]) == 1
        assert "INVALID" in capsys.readouterr().err

    def test_stats_csv(self, cli_dataset, capsys):
        assert dataset_main(["stats", str(cli_dataset)]) == 0
        rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
        assert rows[0] == ["dataset", "min", "max", "mean", "median"]
        assert rows[1][0] == "clitoy"
        values = [float(v) for v in rows[1][1:]]
        assert values[0] <= values[3] <= values[1]

    def test_umbrella_command(self, cli_dataset, capsys):
        assert main(["dataset", "stats", str(cli_dataset)]) == 0
        assert "dataset,min,max,mean,median" in capsys.readouterr().out


class TestBenchCommands:
    def test_synth_run_export_round_trip(self, tmp_path, capsys):
        spec_path = tmp_path / "spec.json"
        SyntheticSpec(name="bsynth", num_classes=3, dim=6,
                      class_sizes=(20, 40, 60), seed=4).to_json(spec_path)
        assert bench_main(["synth", "--spec", str(spec_path),
                           "--out", str(tmp_path / "data")]) == 0
        manifest = tmp_path / "data" / "bsynth.manifest.json"
        assert manifest.is_file()

        config = {
            "dataset": str(manifest),
            "strategies": ["ma", "pfma"],
            "Q": 1,
            "session": {"b": 4, "T": 2},
            "coverage": {"K": 4, "kmeans_runs": 2},
            "output_dir": str(tmp_path / "out"),
            "seed": 3,
        }
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        assert bench_main(["run", "--config", str(config_path)]) == 0
        results_csv = tmp_path / "out" / "results.csv"
        assert results_csv.is_file()
        assert (tmp_path / "out" / "results.jsonl").is_file()

        assert bench_main(["export", "--table", str(results_csv),
                           "--format", "jsonl",
                           "--out", str(tmp_path / "re.jsonl")]) == 0
        first = json.loads((tmp_path / "re.jsonl").read_text().splitlines()[0])
        assert first["strategy"] == "ma"
        direct = (tmp_path / "out" / "results.jsonl").read_text()
        assert (tmp_path / "re.jsonl").read_text() == direct
