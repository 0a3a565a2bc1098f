import json

import numpy as np
import pytest

from cvczero.cli import main, parse_loops
from cvczero.config import DEFAULT_TOLERANCES, RunConfig, load_config, parse_config
from cvczero.errors import ConfigError, UnknownSeries
from cvczero.report import CheckResult, emit_plot_data, run_suite


def test_parse_config_sections():
    cfg = parse_config('[run]\nzoo = ["flat3", "twisted"]\nseed = 3\nsamples = 7\n'
                       '[tolerances]\ncvc0 = 2e-6\n[output]\ntiming = true\n')
    assert cfg.zoo == ["flat3", "twisted"] and cfg.seed == 3 and cfg.samples == 7
    assert cfg.tolerance("cvc0") == 2e-6
    assert cfg.tolerance("flats") == DEFAULT_TOLERANCES["flats"]
    assert cfg.timing


@pytest.mark.parametrize("text, line, fld", [
    ('[run]\nseed = 1\nbogus = 2\n', 3, "run.bogus"),
    ('[run]\nzoo = ["nowhere"]\n', 2, "run.zoo"),
    ('[run]\nsamples = "many"\n', 2, "run.samples"),
    ('[run]\nseed = 1\n\n[tolerances]\ncvc0 = -1.0\n', 5, "tolerances.cvc0"),
    ('[extra]\nx = 1\n', 1, "extra"),
])
def test_config_errors_carry_line_and_field(text, line, fld):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line
    assert err.value.field == fld


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.toml"))


def test_tol_scale_loosens_both_kinds_of_threshold():
    cfg = RunConfig(tol_scale=10.0)
    assert cfg.tolerance("cvc0") == pytest.approx(1e-5)
    assert cfg.tolerance("no_split") == pytest.approx(0.01)


def test_config_digest_ignores_output_settings():
    a, b = RunConfig(seed=1), RunConfig(seed=1, output="x.json", jobs=4, timing=True)
    assert a.digest() == b.digest()
    assert a.digest() != RunConfig(seed=2).digest()


def test_check_result_pass_rule():
    assert CheckResult("x", "a", 1, 0.5, 1.0).passed
    assert not CheckResult("x", "a", 1, 1.0, 1.0).passed
    assert not CheckResult("x", "a", 1, float("nan"), 1.0).passed


@pytest.fixture(scope="module")
def small_report():
    cfg = RunConfig(zoo=["round3", "twisted"], seed=5, samples=10, rank_samples=3)
    return run_suite(cfg, jobs=1)


def test_suite_report_structure(small_report):
    d = json.loads(small_report.to_json())
    assert d["schema"] == "cvczero-report/1"
    assert d["wall_time"] is None
    names = [c["name"] for c in d["entries"][0]["checks"]]
    assert names[:2] == ["oracle-fd", "oracle-closed"]
    for c in small_report.checks:
        assert set(c) >= {"name", "anchor", "n_samples", "max_residual", "tolerance", "pass",
                          "excluded_count"}
        assert c["pass"] == (c["max_residual"] < c["tolerance"])
    assert small_report.passed


def test_plot_series(small_report):
    f = emit_plot_data(small_report, "f").splitlines()
    assert f[0] == "t,f,f_exact"
    t, val, _ = map(float, f[1].split(","))
    assert val == pytest.approx(np.sin(t), abs=1e-9)
    tr = emit_plot_data(small_report, "twisted:trS").splitlines()
    assert tr[0].startswith("s,trS")
    s, trs = map(float, tr[1].split(",")[:2])
    assert trs == pytest.approx(-1.0 / (1.0 + s), abs=1e-8)
    with pytest.raises(UnknownSeries):
        emit_plot_data(small_report, "")
    with pytest.raises(UnknownSeries):
        emit_plot_data(small_report, "nothing")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["verify", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["verify", "--zoo", "nowhere"]) == 2
    out = tmp_path / "r.json"
    assert main(["verify", "--zoo", "flat3", "--samples", "5", "--seed", "1",
                 "--output", str(out)]) == 0
    assert json.loads(out.read_text())["all_pass"]
    # an impossible tolerance makes a check fail
    cfg = tmp_path / "strict.toml"
    cfg.write_text('[run]\nzoo = ["round3"]\nsamples = 5\nchecks = ["oracle"]\n'
                   '[tolerances]\noracle_fd = 1e-30\n')
    assert main(["verify", "--config", str(cfg), "--output", str(tmp_path / "s.json")]) == 1


def test_cli_point_commands(capsys):
    assert main(["classify", "--zoo", "prodH2R", "--point", "0", "0", "0"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["class"] == "Nonisotropic"
    assert main(["rank", "--zoo", "flat3", "--point", "0", "0", "0",
                 "--direction", "1", "0", "0", "--horizon", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["estimated_rank"] == 3
    assert main(["geodesic", "--zoo", "flat3", "--point", "0", "0", "0",
                 "--direction", "0", "3", "4", "--horizon", "1", "--steps", "3"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["samples"][-1]["x"] == pytest.approx([0.0, 0.6, 0.8])


def test_cli_holonomy_with_loop_file(tmp_path, capsys):
    loops = tmp_path / "loops.toml"
    loops.write_text('[[loop]]\nname = "sq"\n'
                     '[[loop.leg]]\nchart = "prodH2R"\nstart = [0, 0, 0]\nend = [0.5, 0, 0]\n'
                     '[[loop.leg]]\nchart = "prodH2R"\nstart = [0.5, 0, 0]\nend = [0.5, 0.5, 0]\n'
                     '[[loop.leg]]\nchart = "prodH2R"\nstart = [0.5, 0.5, 0]\nend = [0, 0.5, 0]\n'
                     '[[loop.leg]]\nchart = "prodH2R"\nstart = [0, 0.5, 0]\nend = [0, 0, 0]\n')
    assert main(["holonomy", "--zoo", "prodH2R", "--loops", str(loops)]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["fixed_line"] is not None
    assert abs(abs(d["fixed_line"][2]) - 1.0) < 1e-6
    with pytest.raises(ConfigError):
        parse_loops("[[loop]]\nname = 'x'\n")


def test_cli_build_zoo_and_report(tmp_path, capsys):
    assert main(["zoo"]) == 0
    assert len(json.loads(capsys.readouterr().out)) == 8
    out = tmp_path / "atlas.json"
    assert main(["build", "--zoo", "s3_graph", "--output", str(out)]) == 0
    assert json.loads(out.read_text())["schema"] == "cvczero-atlas/1"
    graph = tmp_path / "lens.toml"
    graph.write_text('[[vertex]]\nkind = "disk"\n[[vertex]]\nkind = "disk"\n'
                     '[[edge]]\na = [0, 0]\nb = [1, 0]\nword = "A"\n')
    assert main(["build", "--graph", str(graph), "--output", str(tmp_path / "g.json")]) == 0
    rep = tmp_path / "r.json"
    main(["verify", "--zoo", "round3", "--samples", "3", "--output", str(rep)])
    assert main(["report", str(rep), "--series", "f"]) == 0
    assert capsys.readouterr().out.startswith("t,f,f_exact")
    assert main(["report", str(rep), "--series", "missing"]) == 2
