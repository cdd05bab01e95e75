import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from periodic_oseledets.cli import main
from periodic_oseledets.oseledets import LyapunovSpectrum, SplittingEstimate
from periodic_oseledets.periodic_approx import ApproximationReport
from periodic_oseledets.verify import TOL_ENV

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

DIAGONAL = """
[subshift]
alphabet = 2

[generator]
kind = "constant"
matrix = [[2.0, 0.0], [0.0, 0.5]]

[measure]
type = "bernoulli"
probabilities = [0.5, 0.5]

[experiment]
n_min = 1
n_max = 4
horizon = 64
samples = 4
"""

HYPERBOLIC = """
[subshift]
alphabet = 2

[generator]
kind = "locally_constant"
matrices = [[[2.0, 0.3], [0.1, 0.5]], [[1.5, -0.2], [0.25, 0.6]]]

[measure]
type = "bernoulli"
probabilities = [0.5, 0.5]

[experiment]
n_min = 3
n_max = 7
horizon = 128
samples = 6
seed = 5
"""


@pytest.fixture
def write(tmp_path):
    def _write(text, name="cfg.toml"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)

    return _write


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


# spectrum


def test_spectrum_diagonal(capsys, write, tmp_path):
    code, out, _ = run(capsys, "spectrum", write(DIAGONAL), "--out", tmp_path / "o")
    assert code == 0
    assert f"block exponent {math.log(2)!r} multiplicity 1" in out
    assert f"block exponent {-math.log(2)!r} multiplicity 1" in out
    data = json.loads((tmp_path / "o" / "spectrum.json").read_text())
    assert LyapunovSpectrum.from_dict(data["spectrum"]).values == (math.log(2), -math.log(2))
    assert data["header"]["command"] == "spectrum"


def test_spectrum_wrong_matrix_width(capsys, write):
    bad = DIAGONAL.replace(
        'kind = "constant"\nmatrix = [[2.0, 0.0], [0.0, 0.5]]',
        'kind = "locally_constant"\nmatrices = [[[2.0, 0.0], [0.0, 0.5]], [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]]',
    )
    code, _, err = run(capsys, "spectrum", write(bad))
    assert code == 2
    assert "generator.matrices.1" in err


def test_spectrum_missing_measure(capsys, write):
    text = DIAGONAL.replace('[measure]\ntype = "bernoulli"\nprobabilities = [0.5, 0.5]\n', "")
    code, _, err = run(capsys, "spectrum", write(text))
    assert code == 2 and "[measure]" in err


def test_spectrum_inconsistent_blocks_exit_3(capsys, write):
    text = """
[subshift]
alphabet = 2
[generator]
kind = "locally_constant"
matrices = [[[0.5403023058681398, -0.8414709848078965], [0.8414709848078965, 0.5403023058681398]],
            [[3.0, 0.0], [0.0, 0.3333333333333333]]]
[measure]
type = "bernoulli"
probabilities = [0.5, 0.5]
[experiment]
horizon = 1
samples = 30
"""
    code, _, err = run(capsys, "spectrum", write(text))
    assert code == 3 and "InconsistentBlockStructure" in err


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[subshift\nalphabet = 2", "not valid TOML"),
        ('[generator]\nkind = "constant"\nmatrix = [[1.0]]', "missing [subshift]"),
        (DIAGONAL + "bogus = 1\n", "experiment.bogus"),
        (DIAGONAL.replace('kind = "constant"', 'kind = "spline"'), "generator.kind"),
        (DIAGONAL.replace("horizon = 64", "horizon = -3"), "experiment.horizon"),
        (DIAGONAL.replace("probabilities = [0.5, 0.5]", "probabilities = [0.5]"), "measure.probabilities"),
    ],
)
def test_config_errors_exit_2(capsys, write, text, needle):
    code, _, err = run(capsys, "spectrum", write(text))
    assert code == 2 and needle in err


def test_missing_file_and_bad_arguments(capsys, tmp_path):
    assert run(capsys, "spectrum", tmp_path / "absent.toml")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    assert run(capsys, "approx", CONFIGS / "diagonal.toml", "--workers", "0")[0] == 2
    assert run(capsys, "--version")[0] == 0


# split


def test_split_eigenbasis(capsys, write, tmp_path):
    text = DIAGONAL.replace("[[2.0, 0.0], [0.0, 0.5]]", "[[2.0, 1.0], [0.0, 0.5]]")
    code, out, _ = run(capsys, "split", write(text), "--point", "0|0|0", "--out", tmp_path)
    assert code == 0 and "E^1" in out and "E^2" in out
    est = SplittingEstimate.from_dict(json.loads((tmp_path / "split.json").read_text())["splitting"])
    e1 = est.spaces[0].basis[:, 0]
    e2 = est.spaces[1].basis[:, 0]
    assert abs(abs(e1[0]) - 1.0) < 1e-12
    assert abs(abs(e2 @ np.array([2.0, -3.0])) / math.sqrt(13) - 1.0) < 1e-9


def test_split_nilpotent_neg_infinity(capsys, tmp_path):
    code, out, _ = run(capsys, "split", CONFIGS / "nilpotent.toml", "--out", tmp_path)
    assert code == 0 and "exponent -inf multiplicity 2" in out
    text = (tmp_path / "split.json").read_text()
    assert '"-inf"' in text and "Infinity" not in text


def test_split_dimension_mismatch_exit_3(capsys, tmp_path):
    code, _, err = run(capsys, "split", CONFIGS / "mismatch.toml")
    assert code == 3 and "DimensionMismatch" in err
    for tol in ("1e-3", "1e-12"):
        code, *_ = run(capsys, "split", CONFIGS / "mismatch.toml", "--set", f"experiment.intersect_tol={tol}", "--out", tmp_path)
        assert code == 0


@pytest.mark.parametrize("point", ["periodic:01", "seed:3", "1|0,1|0@1"])
def test_split_point_forms(capsys, write, tmp_path, point):
    assert run(capsys, "split", write(HYPERBOLIC), "--point", point, "--out", tmp_path)[0] == 0


@pytest.mark.parametrize("point", ["periodic:0x", "1|2", "seed:abc", "0|0|0@z"])
def test_split_bad_point(capsys, write, point):
    code, _, err = run(capsys, "split", write(HYPERBOLIC), "--point", point)
    assert code == 2 and "invalid input" in err


def test_split_inadmissible_point(capsys):
    code, _, err = run(capsys, "split", CONFIGS / "golden_mean.toml", "--point", "0|1,1|0")
    assert code == 2


# periodic


def test_periodic_counts(capsys, write, tmp_path):
    code, out, _ = run(capsys, "periodic", write(DIAGONAL), "3", "--out", tmp_path)
    assert code == 0 and out.startswith("8 periodic points of period 3")
    rows = (tmp_path / "periodic.csv").read_text().splitlines()
    assert rows[0] == "index,word,gamma_1,gamma_2,multiplicities"
    assert len(rows) == 1 + 8
    assert rows[1] == f"0,000,{math.log(2)!r},{-math.log(2)!r},1 1"
    code, out, _ = run(capsys, "periodic", CONFIGS / "golden_mean.toml", "3", "--out", tmp_path)
    assert code == 0 and len((tmp_path / "periodic.csv").read_text().splitlines()) == 1 + 4


def test_periodic_cap(capsys, write):
    code, _, err = run(capsys, "periodic", write(DIAGONAL), "12", "--set", "experiment.enumeration_cap=100")
    assert code == 2 and "EnumerationOverflow" in err


# approx


def test_approx_constant(capsys, write, tmp_path):
    code, out, _ = run(capsys, "approx", write(DIAGONAL), "--out", tmp_path, "--workers", "1")
    assert code == 0
    lines = (tmp_path / "approx.csv").read_text().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        assert all(float(row[f"angle_{q}"]) == 0.0 for q in ("min", "median", "max"))
    report = ApproximationReport.from_dict(json.loads((tmp_path / "approx.json").read_text()))
    assert report.header["command"] == "approx"
    assert "ladder" in out


def test_approx_byte_identical(capsys, write, tmp_path):
    cfg = write(HYPERBOLIC)
    assert run(capsys, "approx", cfg, "--out", tmp_path / "a", "--workers", "1")[0] == 0
    assert run(capsys, "approx", cfg, "--out", tmp_path / "b", "--workers", "2")[0] == 0
    for name in ("approx.csv", "approx.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_overrides_echoed(capsys, write, tmp_path):
    code, *_ = run(
        capsys, "spectrum", write(DIAGONAL), "--set", "experiment.samples=3", "--set", "output.prefix=run1",
        "--out", tmp_path,
    )
    assert code == 0
    header = json.loads((tmp_path / "run1.json").read_text())["header"]
    assert header["overrides"] == ["experiment.samples=3", "output.prefix=run1"]
    assert run(capsys, "spectrum", write(DIAGONAL), "--set", "experiment.nope=1")[0] == 2
    assert run(capsys, "spectrum", write(DIAGONAL), "--set", "samples")[0] == 2


def test_output_formats(capsys, write, tmp_path):
    code, *_ = run(capsys, "approx", write(DIAGONAL), "--set", 'output.formats=["csv"]', "--out", tmp_path / "o")
    assert code == 0
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["approx.csv"]


def test_unwritable_output(capsys, write, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run(capsys, "spectrum", write(DIAGONAL), "--out", blocker / "sub")
    assert code == 2


# verify


def test_verify_default(capsys):
    code, out, _ = run(capsys, "verify")
    assert code == 0
    assert "FAIL" not in out and out.strip().endswith("checks passed")


def test_verify_broken_tolerance(capsys, monkeypatch):
    monkeypatch.setenv(TOL_ENV, "-1")
    code, out, err = run(capsys, "verify", "--suite", "linear_core")
    assert code == 1
    assert "FAIL linear_core.exterior_power_minors" in out
    assert "violated: linear_core.exterior_power_minors" in err


def test_verify_list_and_suites(capsys):
    code, out, _ = run(capsys, "verify", "--list")
    assert code == 0
    assert out.split() == ["base_dynamics", "linear_core", "oseledets", "periodic_approx", "cli"]
    assert run(capsys, "verify", "--suite", "nope")[0] == 2


def test_verify_with_config(capsys):
    code, out, _ = run(capsys, "verify", CONFIGS / "hyperbolic.toml", "--suite", "cli")
    assert code == 0 and "PASS config.adjoint_transpose_identity" in out


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "periodic_oseledets.cli", "verify", "--list"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and "oseledets" in proc.stdout


def test_shipped_configs_load():
    from periodic_oseledets.config import load_config

    for path in sorted(CONFIGS.glob("*.toml")):
        load_config(path)
