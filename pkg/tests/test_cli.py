import copy
import csv
import json
import re

import numpy as np
import pytest

import stochrr.cli as cli
from stochrr.cli import BUILTINS, list_scenarios, load_scenario, main, run_scenario, validate
from stochrr.config import scenario_from_dict, scenario_to_json
from stochrr.qfactor import Q_TABLE_HEADER

EXPECTED = {"figure2", "classical-limit-sweep", "nelson-ho", "synchrotron-ll", "runaway-demo", "pomega-constB",
            "volkov-invariant"}


def documented_headers():
    table = {}
    for line in cli.__doc__.splitlines():
        m = re.match(r"^(\w+\.csv)\s+(.*)$", line)
        if m:
            table[m.group(1)] = m.group(2)
    return table


def expand(spec):
    cols = []
    for part in (c.strip() for c in spec.split(",")):
        m = re.match(r"^(\w)(\d)\.\.\w(\d)$", part)
        if m:
            cols += [f"{m.group(1)}{i}" for i in range(int(m.group(2)), int(m.group(3)) + 1)]
        else:
            cols.append(part)
    return cols


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def small(name, **changes):
    data = copy.deepcopy(BUILTINS[name])
    for table, values in changes.items():
        data.setdefault(table, {}).update(values)
    return scenario_from_dict(data)


def test_list_contains_the_builtins(capsys):
    assert set(list_scenarios()) == EXPECTED
    assert main(["list"]) == 0
    assert set(capsys.readouterr().out.split()) == EXPECTED


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_every_builtin_validates(name):
    ok, message = validate(name)
    assert ok, message
    assert main(["validate", name]) == 0


def test_corrupted_copy_fails_with_the_key(tmp_path, capsys):
    data = copy.deepcopy(BUILTINS["nelson-ho"])
    data["grid"]["dtua"] = 0.1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    ok, message = validate(str(path))
    assert not ok and "grid.dtua" in message
    assert main(["validate", str(path)]) == 2
    assert "grid.dtua" in capsys.readouterr().err


def test_builtin_round_trips_through_a_file(tmp_path):
    s = load_scenario("pomega-constB")
    path = tmp_path / "s.json"
    path.write_text(scenario_to_json(s))
    assert load_scenario(str(path)) == s


def test_golden_headers(tmp_path):
    docs = documented_headers()
    scenarios = [
        load_scenario("figure2"),
        small("synchrotron-ll", grid={"dtau": 2 * np.pi / 400}),
        load_scenario("runaway-demo"),
        small("pomega-constB", ensemble={"n_paths": 300}, grid={"tau_end": 1.0, "dtau": 0.02},
              estimators={"tau_indices": [20, 30], "epsilon": 1.0, "requests": BUILTINS["pomega-constB"]
                          ["estimators"]["requests"] + ["density"]}),
        small("nelson-ho", ensemble={"n_paths": 2000}, grid={"tau_end": 2.0, "dtau": 0.5, "substeps": 10}),
        small("volkov-invariant", ensemble={"n_paths": 200}),
        small("classical-limit-sweep", ensemble={"n_paths": 200}, grid={"tau_end": 1.0, "dtau": 0.05},
              estimators={"lam_sweep": [0.1, 0.01]}),
    ]
    seen = set()
    for s in scenarios:
        out = tmp_path / s.name
        manifest, code = run_scenario(s, str(out))
        assert code == 0, manifest.failures
        for name in manifest.outputs:
            if not name.endswith(".csv"):
                continue
            seen.add(name)
            cols = header(out / name)
            if name == "density.csv":
                assert cols[-1] == "p" and len(cols) >= 2
            elif name == "q_curve.csv":
                assert cols == list(Q_TABLE_HEADER)
            else:
                assert cols == expand(docs[name]), name
    assert {"q_table.csv", "ll_trajectory.csv", "mean_trajectory.csv", "p_omega.csv", "rr_field.csv",
            "ehrenfest.csv", "invariant.csv", "ks.csv", "osmotic.csv", "energy.csv", "runaway.csv",
            "sweep.csv"} <= seen
    assert expand(docs["q_table.csv"]) == list(Q_TABLE_HEADER)


def test_manifest_is_written_last_and_lists_checksums(tmp_path):
    out = tmp_path / "fig"
    manifest, code = run_scenario(load_scenario("figure2"), str(out))
    assert code == 0
    written = json.loads((out / "manifest.json").read_text())
    assert written["outputs"] == manifest.outputs
    assert "q_table.csv" in written["outputs"] and "scenario.json" in written["outputs"]
    newest = max(out.iterdir(), key=lambda p: p.stat().st_mtime_ns)
    assert newest.name == "manifest.json"


def test_figure2_anchor_cell(tmp_path):
    out = tmp_path / "fig"
    run_scenario(load_scenario("figure2"), str(out))
    with open(out / "q_table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    cell = [r for r in rows if float(r["intensity_W_cm2"]) == 1e22 and float(r["energy_MeV"]) == 600.0]
    assert len(cell) == 1 and 0.25 <= float(cell[0]["q_full"]) <= 0.35


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "no-such-scenario"]) == 2
    out = tmp_path / "x"
    out.mkdir()
    (out / "junk").write_text("x")
    assert main(["run", "figure2", "--out", str(out)]) == 2
    assert main(["run", "figure2", "--out", str(out), "--overwrite"]) == 0
    assert main(["run", "figure2", "--out", str(tmp_path / "y"), "--threads", "0"]) == 2
    assert main(["run", "figure2", "--out", str(tmp_path / "z"), "--seed", "-1"]) == 2


def test_partial_outputs_exit_four(tmp_path):
    # an epsilon window far smaller than the cloud leaves rr_field without paths
    s = small("pomega-constB", ensemble={"n_paths": 200}, grid={"tau_end": 1.0, "dtau": 0.02},
              estimators={"tau_indices": [20], "epsilon": 1e-9, "requests": ["mean_trajectory", "rr_field"]})
    manifest, code = run_scenario(s, str(tmp_path / "p"))
    assert code == 4
    assert list(manifest.failures) and "mean_trajectory.csv" in manifest.outputs


def test_q_table_subcommand(capsys, tmp_path):
    assert main(["q-table", "--intensities", "1e22", "--energies", "600"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == ",".join(Q_TABLE_HEADER)
    assert 0.25 <= float(lines[1].split(",")[3]) <= 0.35
    path = tmp_path / "q.csv"
    assert main(["q-table", "--intensities", "1e21", "1e22", "--energies", "300", "--out", str(path)]) == 0
    assert len(path.read_text().strip().splitlines()) == 3


def test_seed_override_changes_the_manifest(tmp_path):
    s = small("nelson-ho", ensemble={"n_paths": 500}, grid={"tau_end": 1.0, "dtau": 0.5, "substeps": 5})
    path = tmp_path / "s.json"
    path.write_text(scenario_to_json(s))
    assert main(["run", str(path), "--out", str(tmp_path / "a"), "--seed", "5"]) == 0
    written = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert written["seed"] == 5
