import json
import math
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cavity_bayes.cli import main as cli_main
from cavity_bayes.geometry import conductor, contains_mask
from cavity_bayes.harness import ConfigError, approx_lemma_audit, config_from_dict, load_config, run_pipeline

SMALL_CONFIG = """
[experiment]
name = "small"
seed = 99
out = "{out}"

[solver]
step = 4e-3
n_paths = 192

[noise]
sigma = 0.05

[prior]
mode = "grid"
n_side = 2
radius = 0.2
span = 0.3

[truth]
cavities = [{{ center = [0.3, 0.3], radius = 0.2 }}]

[pairs]
count = 12
dispersion = 1.5

[ratio_grid]
n = 24

[disintegration]
n_samples = 2000
n_functions = 4

[convergence]
enabled = false
"""

DEGENERATE_CONFIG = """
[experiment]
name = "tiny-degenerate"
seed = 7
out = "{out}"

[solver]
step = 8e-3
n_paths = 96

[noise]
mode = "none"

[prior]
mode = "finite"

[[prior.domains]]
prob = 1.0
cavities = [{{ center = [0.15, 0.15], radius = 0.2 }}]

[truth]
cavities = [{{ center = [0.15, 0.15], radius = 0.2 }}]

[ratio_grid]
n = 16

[disintegration]
enabled = false

[convergence]
enabled = false
"""


def write_config(tmp_path, template, name="exp.toml", out="art"):
    path = tmp_path / name
    path.write_text(template.format(out=str(tmp_path / out)))
    return path


def artifact_bytes(out_dir: Path) -> dict:
    return {
        f.name: f.read_bytes()
        for f in sorted(out_dir.iterdir())
        if f.is_file() and f.name != "manifest.json"
    }


class TestConfig:
    def test_load_and_overrides(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        cfg = load_config(path, out_override=str(tmp_path / "other"), seed_override=123)
        assert cfg.seed == 123
        assert cfg.out_dir == tmp_path / "other"
        assert cfg.grid.m == 16

    def test_malformed_toml_diagnostic(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[experiment\nseed = 1\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(path)

    def test_missing_truth_diagnostic(self):
        with pytest.raises(ConfigError, match="truth"):
            config_from_dict({"experiment": {"seed": 1}})

    def test_bad_field_diagnostic(self):
        raw = {"experiment": {"seed": 1}, "truth": {"cavities": []}, "solver": {"step": -1}}
        with pytest.raises(ConfigError, match="step"):
            config_from_dict(raw)

    def test_digest_changes_iff_config_changes(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        a = load_config(path)
        b = load_config(path)
        assert a.digest() == b.digest()
        raw = dict(a.raw)
        raw["solver"] = dict(raw["solver"], n_paths=193)
        c = config_from_dict(raw)
        assert c.digest() != a.digest()


class TestPipeline:
    def test_degenerate_posterior_and_ratio(self, tmp_path):
        cfg = load_config(write_config(tmp_path, DEGENERATE_CONFIG))
        result = run_pipeline(cfg)
        post = json.loads(Path(result.artifacts["posterior"]).read_text())
        assert post["weights"] == [1.0]
        rows = np.loadtxt(result.artifacts["ratio"], delimiter=",", skiprows=2)
        truth = conductor(cavities=[((0.15, 0.15), 0.2)])
        indicator = contains_mask(truth, rows[:, :2]).astype(float)
        np.testing.assert_array_equal(rows[:, 2], indicator)

    def test_repeat_run_byte_identical(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        out = run_pipeline(load_config(path)).out_dir
        first = artifact_bytes(out)
        manifest_first = json.loads((out / "manifest.json").read_text())
        result = run_pipeline(load_config(path))
        second = artifact_bytes(result.out_dir)
        manifest_second = json.loads((result.out_dir / "manifest.json").read_text())
        assert first == second
        for key in ("artifacts", "config_digest", "seed"):
            assert manifest_first[key] == manifest_second[key]

    def test_second_run_never_resimulates(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        run_pipeline(load_config(path))
        result = run_pipeline(load_config(path))
        assert result.manifest["cache"]["misses"] == 0
        assert result.manifest["cache"]["hits"] > 0

    def test_stability_and_disintegration_reports(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        result = run_pipeline(load_config(path))
        assert result.stability.violations == 0
        assert all(c.passed for c in result.disintegration)
        header = Path(result.artifacts["stability"]).read_text().splitlines()
        assert header[0] == "# schema=stability_report.v1"
        assert header[1].split(",")[:3] == ["pair_id", "dy_norm", "sigma_sup"]

    def test_unknown_stage_rejected(self, tmp_path):
        cfg = load_config(write_config(tmp_path, SMALL_CONFIG))
        with pytest.raises(ConfigError, match="stages"):
            run_pipeline(cfg, stages=("nope",))


class TestLemmaAudit:
    def test_small_audit_clean(self):
        report = approx_lemma_audit(count=5, seed=2, eps_values=(0.25, 0.0625))
        assert report["violations"] == 0
        assert report["worst_ratio"] < 1.0


class TestCli:
    def test_pipeline_and_exit_codes(self, tmp_path):
        path = write_config(tmp_path, DEGENERATE_CONFIG)
        assert cli_main(["pipeline", "--config", str(path)]) == 0

    def test_malformed_config_exit_one(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text("[experiment\n")
        assert cli_main(["pipeline", "--config", str(path)]) == 1
        assert "config error" in capsys.readouterr().err

    def test_verify_bounds_exit_zero(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        assert cli_main(["verify-bounds", "--config", str(path)]) == 0

    def test_approx_lemma_cli(self, tmp_path, capsys):
        out = tmp_path / "lemma.json"
        assert cli_main(["approx-lemma", "--count", "3", "--seed", "1", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["violations"] == 0
        assert "worst ratio" in capsys.readouterr().out

    def test_forward_direct_flags(self, tmp_path, capsys):
        domain_file = tmp_path / "d.json"
        domain_file.write_text(
            json.dumps(
                {
                    "outer": {"type": "disk", "center": [0.0, 0.0], "radius": 1.0},
                    "cavities": [{"center": [0.0, 0.0], "radius": 0.4}],
                }
            )
        )
        grid_file = tmp_path / "g.toml"
        grid_file.write_text("[grid]\nhorizon = 1.0\nm_t = 2\nm_a = 2\narc = [0.0, 1.5707963267948966]\n")
        code = cli_main(
            [
                "forward",
                "--domain", str(domain_file),
                "--grid", str(grid_file),
                "--paths", "64",
                "--step", "8e-3",
                "--seed", "3",
                "--out", str(tmp_path / "cache"),
            ]
        )
        assert code == 0
        payload = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert len(payload["y"]) == 4
        assert list((tmp_path / "cache").glob("*.json"))

    def test_ratio_field_subcommand(self, tmp_path):
        path = write_config(tmp_path, DEGENERATE_CONFIG)
        assert cli_main(["ratio-field", "--config", str(path)]) == 0

    def test_check_disintegration_subcommand(self, tmp_path):
        path = write_config(tmp_path, SMALL_CONFIG)
        assert cli_main(["check-disintegration", "--config", str(path)]) == 0

    def test_console_script_installed(self):
        out = subprocess.run(
            [sys.executable, "-m", "cavity_bayes.cli", "--help"], capture_output=True, text=True
        )
        assert out.returncode == 0
        assert "pipeline" in out.stdout
