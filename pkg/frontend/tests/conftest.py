import json
import subprocess
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

BENCH_CONFIG = """
[experiment]
name = "figures-bench"
seed = 515
out = "{out}"

[solver]
step = 4e-3
n_paths = 160

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
count = 15
dispersion = 1.5

[ratio_grid]
n = 24

[disintegration]
enabled = false

[convergence]
steps = [8e-3, 4e-3]
n_paths = 2000
"""

DEGENERATE_CONFIG = """
[experiment]
name = "figures-degenerate"
seed = 3
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
n = 32

[disintegration]
enabled = false

[convergence]
enabled = false
"""

TRUTH_DOMAIN = {
    "outer": {"type": "disk", "center": [0.0, 0.0], "radius": 1.0},
    "cavities": [{"center": [0.15, 0.15], "radius": 0.2}],
}


def _run_pipeline(config_text: str, tmp: Path, tag: str) -> Path:
    out = tmp / tag
    config = tmp / f"{tag}.toml"
    config.write_text(config_text.format(out=str(out)))
    proc = subprocess.run(
        ["cavity-bayes", "pipeline", "--config", str(config)], capture_output=True, text=True
    )
    assert proc.returncode == 0, f"pipeline failed: {proc.stderr}"
    return out


@pytest.fixture(scope="session")
def artifacts(tmp_path_factory):
    """Benchmark + degenerate artifact sets produced through the CLI."""
    tmp = tmp_path_factory.mktemp("artifacts")
    bench = _run_pipeline(BENCH_CONFIG, tmp, "bench")
    degenerate = _run_pipeline(DEGENERATE_CONFIG, tmp, "degenerate")
    truth_path = tmp / "truth.json"
    truth_path.write_text(json.dumps(TRUTH_DOMAIN))
    return {"bench": bench, "degenerate": degenerate, "truth": truth_path}
