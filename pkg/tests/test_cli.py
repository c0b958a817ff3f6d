import csv
import subprocess
import sys

import pytest
from hypothesis import given, strategies as st

from homoflow.cli import RunConfig, emit_plot_script, main
from homoflow.errors import ConfigError

finite = st.floats(1e-6, 1e6, allow_nan=False)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@st.composite
def configs(draw):
    command = draw(st.sampled_from(["toy-mc", "moments", "dispersion", "frozen"]))
    params = {}
    if command == "toy-mc":
        params = {"n": draw(st.integers(4, 10 ** 7)), "T": draw(finite),
                  "mode": draw(st.sampled_from(["constant", "selfconsistent"])),
                  "a": draw(st.floats(0.01, 0.99)),
                  "orders": tuple(draw(st.lists(st.floats(-3, 3), min_size=1, max_size=4))),
                  "records": tuple(draw(st.lists(finite, max_size=3)))}
    elif command == "moments":
        params = {"K1": draw(st.floats(-5, 5)), "b": draw(finite), "fit_lo": draw(finite)}
    elif command == "dispersion":
        params = {"epsilon": tuple(draw(st.lists(finite, min_size=1, max_size=4))),
                  "k": tuple(draw(st.lists(st.floats(-2, 2), min_size=1, max_size=3)))}
    else:
        params = {"task": draw(st.sampled_from(["decay", "mass", "energy", "weak"])),
                  "sigmas": tuple(draw(st.lists(finite, min_size=3, max_size=3)))}
    return RunConfig(command, params, draw(st.integers(0, 2 ** 32)), draw(st.sampled_from(["out", "/tmp/x y"])))


@given(configs())
def test_config_round_trip(cfg):
    text = cfg.serialize()
    again = RunConfig.parse(text)
    assert again == cfg
    assert again.serialize() == text


def test_overrides_and_comments():
    cfg = RunConfig.parse("command=toy-mc  # comment\nn=100\n# T=5\nseed=3\n", ["n=200"])
    assert cfg.params["n"] == 200 and cfg.seed == 3 and cfg.params["T"] == 100.0


@pytest.mark.parametrize("text,key", [
    ("command=toy-mc\nbogus=1\n", "bogus"),
    ("command=toy-mc\nn=2\n", "n"),
    ("command=toy-mc\nT=abc\n", "T"),
    ("command=toy-sc\na=1.5\n", "a"),
    ("command=classify\n", "A"),
    ("command=frozen\nsigmas=1,2\n", "sigmas"),
])
def test_invalid_configs_name_the_key(text, key):
    with pytest.raises(ConfigError, match=repr(key)):
        RunConfig.parse(text)


def test_exit_codes(tmp_path, capsys):
    assert main(["nonsense", "--out", str(tmp_path)]) == 2
    assert main(["classify", "--out", str(tmp_path)]) == 2
    assert "'A'" in capsys.readouterr().err
    assert main(["classify", "A=0 0 0 0 0 0 0 0 0", "--out", str(tmp_path)]) == 2
    assert main(["dispersion", "epsilon=1e-3", "k=100", "--out", str(tmp_path)]) == 3
    graph = tmp_path / "g.txt"
    graph.write_text("1 2 1 thick\n2 1 1 thin\n1 1 1 thin\n2 2 1 thick\n")
    assert main(["wkb", f"graph={graph}", "cap=1", "--out", str(tmp_path)]) == 4
    assert main(["wkb", f"graph={graph}", "--out", str(tmp_path)]) == 0
    block = dict(line.split("=", 1) for line in (tmp_path / "wkb.txt").read_text().split())
    assert block["dominant_cycle"] == "2->2" and float(block["exponent"]) == 2.0


def test_console_script_exit_code(tmp_path):
    res = subprocess.run([sys.executable, "-m", "homoflow.cli", "toy-mc", "bogus=1",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
    assert "'bogus'" in res.stderr


def test_classify_identity(tmp_path):
    assert main(["classify", "A=1 0 0 0 1 0 0 0 1", "--out", str(tmp_path)]) == 0
    assert read_csv(tmp_path / "classify.csv")[0]["case_label"] == "HomogeneousDilatation"
    assert "case_label=HomogeneousDilatation" in (tmp_path / "report.txt").read_text()


def test_manifest_reproduces_outputs(tmp_path):
    first = tmp_path / "a"
    assert main(["toy-mc", "n=20000", "T=10", "mode=selfconsistent", "--seed", "7",
                 "--out", str(first)]) == 0
    second = tmp_path / "b"
    assert main(["--config", str(first / "manifest.txt"), "--out", str(second)]) == 0
    assert (first / "mc.csv").read_bytes() == (second / "mc.csv").read_bytes()
    manifest = (first / "manifest.txt").read_text()
    for needle in ("command=toy-mc", "seed=7", "n=20000", "# numpy", "# wall_time_s",
                   "# output mc.csv"):
        assert needle in manifest


def test_thread_count_does_not_change_csv(tmp_path, monkeypatch):
    outs = []
    for threads in ("1", "4"):
        monkeypatch.setenv("HOMOFLOW_THREADS", threads)
        out = tmp_path / threads
        assert main(["toy-mc", "n=50000", "T=20", "chunk=8192", "orders=0.5,1",
                     "--seed", "3", "--out", str(out)]) == 0
        outs.append((out / "mc.csv").read_bytes())
    assert outs[0] == outs[1]


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HOMOFLOW_THREADS", "zero")
    assert main(["toy-mc", "n=100", "T=1", "--out", str(tmp_path)]) == 2


def test_selfconsistent_run_hits_target(tmp_path):
    assert main(["toy-sc", "a=0.5", "T=1e4", "stride=100", "--out", str(tmp_path)]) == 0
    last = read_csv(tmp_path / "selfconsistent.csv")[-1]
    assert float(last["t"]) == 1e4
    assert abs(float(last["t"]) * float(last["epsilon"]) - 0.5) < 0.05


def test_moments_fit_matches_cycle_prediction(tmp_path):
    assert main(["moments", "K1=1", "K3=1", "b=1", "T=150", "--out", str(tmp_path)]) == 0
    fit = read_csv(tmp_path / "fit.csv")[0]
    assert abs(float(fit["c1"]) / float(fit["c1_wkb"]) - 1) < 0.05
    assert float(read_csv(tmp_path / "moments.csv")[-1]["t"]) == 150.0


def test_table_profile_and_long_field(tmp_path):
    table = tmp_path / "g0.csv"
    xs = [-3 + 0.05 * i for i in range(121)]
    table.write_text("X,value\n" + "".join(f"{x!r},{max(0.0, 1 - x * x / 9)!r}\n" for x in xs))
    out = tmp_path / "det"
    assert main(["toy-det", "profile=table", f"profile_table={table}", "T=4", "dt=0.1",
                 "field=1", "field_stride=10", "x_hi=8", "--out", str(out)]) == 0
    rows = read_csv(out / "field.csv")
    assert list(rows[0]) == ["t", "X", "phi"]
    assert sorted({float(r["t"]) for r in rows}) == pytest.approx([0, 1, 2, 3, 4])
    assert main(["toy-det", "profile=table", "profile_table=", "--out", str(out)]) == 2


def test_plot_scripts(tmp_path):
    csv_path = tmp_path / "d.csv"
    assert main(["dispersion", "epsilon=1e-2,1e-3", "--out", str(tmp_path)]) == 0
    script = emit_plot_script(tmp_path / "dispersion.csv", "dispersion", tmp_path / "p.py")
    pytest.importorskip("matplotlib")
    subprocess.run([sys.executable, str(script)], check=True)
    assert (tmp_path / "p.png").stat().st_size > 0
    csv_path.write_text("t,S\n1,2\n")
    with pytest.raises(ConfigError, match="'S_fit'"):
        emit_plot_script(csv_path, "moments", tmp_path / "q.py")
    assert main(["plot", "kind=moments", f"csv={csv_path}", "--out", str(tmp_path)]) == 2
