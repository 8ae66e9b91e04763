import json
import subprocess
import sys
import time

import numpy as np
import pytest

from cggm import cli
from cggm.io import (
    expand_table, parse_case_data, parse_contingency_table, rochdale, write_contingency_table,
)
from cggm.estimators import observed_cell_counts
from cggm.rank import init_latents, latent_bounds


def test_rochdale():
    data = rochdale()
    assert (data.n, data.p) == (665, 8)
    assert data.names == list("abcdefgh")
    counts = observed_cell_counts(data)
    # cell "2 1 1 1 2 2 1 1": a=2, e=2, f=2, everything else 1
    assert counts[int("10001100", 2)] == 57


def test_table_parsing(tmp_path):
    f = tmp_path / "t.txt"
    f.write_text("1 0\n0 1\n")
    data = parse_contingency_table(f, 2)
    assert data.x.tolist() == [[0, 0], [1, 1]]
    f.write_text("0 0 0 0")
    with pytest.raises(ValueError, match="no observations"):
        parse_contingency_table(f, 2)
    f.write_text("1 2 3")
    with pytest.raises(ValueError, match="cells"):
        parse_contingency_table(f, 2)
    f.write_text("1 -2 3 4")
    with pytest.raises(ValueError):
        parse_contingency_table(f, 2)
    f.write_text("1 2 x 4")
    with pytest.raises(ValueError):
        parse_contingency_table(f, 2)


def test_last_variable_varies_fastest():
    cases = expand_table([0, 3, 0, 0, 0, 0], [2, 3])
    assert cases.tolist() == [[0, 1]] * 3


def test_table_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    levels = [2, 3, 2, 4]
    counts = rng.integers(0, 5, int(np.prod(levels)))
    f = tmp_path / "t.txt"
    write_contingency_table(f, counts)
    data = parse_contingency_table(f, 4, levels)
    assert data.n == counts.sum()
    assert np.array_equal(observed_cell_counts(data), counts)
    assert data.kinds == ["binary", "ordinal", "binary", "ordinal"]


def test_case_data(tmp_path, caplog):
    f = tmp_path / "c.csv"
    f.write_text("x,y\n0,1.5\nNA,2.25\n1,-0.5\n")
    data = parse_case_data(f)
    assert data.kinds == ["binary", "continuous"]
    assert np.isnan(data.x[1, 0])
    z = init_latents(data)
    assert latent_bounds(data.x[:, 0], z[:, 0], 1) == (-np.inf, np.inf)
    assert np.argsort(z[:, 1]).tolist() == [2, 0, 1]
    f.write_text("x,y\n0,1\n1\n")
    with pytest.raises(ValueError, match="fields"):
        parse_case_data(f)
    f.write_text("x,y\n0,abc\n")
    with pytest.raises(ValueError, match="non-numeric"):
        parse_case_data(f)
    f.write_text("x,y\n0,3\n")
    with caplog.at_level("WARNING"):
        one = parse_case_data(f)
    assert one.n == 1 and "single case" in caplog.text


def test_cli_missing_data_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["--out", "x"])
    assert exc.value.code != 0


def test_cli_bad_input(tmp_path, capsys):
    assert cli.main(["--data", str(tmp_path / "nope.txt"), "--levels", "2x2"]) == 2
    f = tmp_path / "t.txt"
    f.write_text("0 0 0 0")
    assert cli.main(["--data", str(f), "--levels", "2x2", "--out", str(tmp_path)]) == 2
    assert "no observations" in capsys.readouterr().err


def test_cli_small_run_is_fast_and_deterministic(tmp_path, capsys):
    f = tmp_path / "toy.txt"
    f.write_text("5 2\n1 6\n")
    args = ["--data", str(f), "--levels", "2x2", "--chains", "1", "--iters", "100",
            "--burnin", "10", "--draws", "500"]
    cli.main(args + ["--out", str(tmp_path / "warm")])
    t0 = time.perf_counter()
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert time.perf_counter() - t0 < 1.0
    assert cli.main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ["edges.csv", "correlation.csv", "cramers_v.csv", "cells.csv", "degrees.csv",
                 "trace.csv", "samples.csv", "summary.json"]:
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes(), name
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["schema_version"] == 1 and summary["n"] == 14
    assert "mean edge count" in capsys.readouterr().out


def test_cli_rochdale_four_chains(tmp_path):
    out = tmp_path / "r"
    rc = cli.main(["--data", "rochdale", "--chains", "4", "--iters", "300", "--burnin", "100",
                   "--draws", "200", "--out", str(out)])
    assert rc == 0
    names = {p.name for p in out.iterdir()}
    assert {"edges.csv", "correlation.csv", "cramers_v.csv", "cells.csv", "degrees.csv",
            "summary.json"} <= names
    cells = (out / "cells.csv").read_text().splitlines()
    assert cells[0] == "cell,observed,expected" and len(cells) == 257
    assert cells[1 + int("10001100", 2)].startswith("2 1 1 1 2 2 1 1,57,")
    trace = (out / "trace.csv").read_text().splitlines()
    assert len(trace) == 1 + 4 * 300
    summary = json.loads((out / "summary.json").read_text())
    assert summary["retained_samples"] == 800 and summary["baseline"] == "cggm"


def test_cli_copula_full_and_cases(tmp_path):
    f = tmp_path / "c.csv"
    rng = np.random.default_rng(1)
    x = rng.normal(size=(40, 3))
    rows = ["a,b,c"] + [",".join(f"{v:.4f}" for v in r) for r in x]
    rows[5] = "NA," + rows[5].split(",", 1)[1]
    f.write_text("\n".join(rows) + "\n")
    out = tmp_path / "o"
    rc = cli.main(["--data", str(f), "--format", "cases", "--iters", "60", "--burnin", "10",
                   "--baseline", "copula-full", "--out", str(out)])
    assert rc == 0
    assert not (out / "cells.csv").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mean_edge_count"] == 3.0


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "cggm.cli", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "--nc-samples" in res.stdout
