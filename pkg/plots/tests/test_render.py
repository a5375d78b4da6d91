import pytest

from ler_plots import ContainmentError, FigureSpec, SchemaMismatch, render
from ler_plots.cli import main


BOUNDS = """index,lower,upper,fitted
1,10.0,12.0,11.6
2,0.4,1.5,1.1
3,0.1,0.9,0.5
4,0.0,0.3,0.2
"""

QUAL_P = """p,qual
0.0,1.0
0.1,0.998
0.2,0.99
0.3,0.93
"""

QUAL_E = """E,qual
3.0,0.97
7.0,0.995
10.0,0.999
"""

DETECTION = """step,prob
1,0.0
2,0.1
3,0.35
4,0.62
5,0.81
6,0.93
"""

COUNTS = """bin_start_s,count
0.0,12
60.0,19
120.0,25
180.0,17
"""

DURATIONS = """focal_id,spoof_start_s,detect_s,encounters_used
v000,0.0,131.0,7
v001,0.0,88.5,6
v002,0.0,NA,3
v003,0.0,157.25,8
"""


@pytest.fixture
def csvs(tmp_path):
    paths = {}
    for name, text in [
        ("bounds", BOUNDS), ("qual_p", QUAL_P), ("qual_E", QUAL_E),
        ("detection", DETECTION), ("counts", COUNTS), ("durations", DURATIONS),
    ]:
        p = tmp_path / f"{name}.csv"
        p.write_text(text)
        paths[name] = str(p)
    return paths


@pytest.mark.parametrize(
    "kind,source",
    [
        ("bounds", "bounds"),
        ("qual-sweep", "qual_p"),
        ("qual-sweep", "qual_E"),
        ("detection", "detection"),
        ("traffic-counts", "counts"),
        ("traffic-durations", "durations"),
    ],
)
def test_each_kind_renders(tmp_path, csvs, kind, source):
    out = tmp_path / f"{kind}_{source}.svg"
    spec = FigureSpec(kind=kind, inputs=(csvs[source],), output=str(out))
    assert render(spec) == str(out)
    assert out.exists() and out.stat().st_size > 500


def test_detection_overlay(tmp_path, csvs):
    out = tmp_path / "overlay.svg"
    spec = FigureSpec(kind="detection", inputs=(csvs["detection"], csvs["detection"]), output=str(out))
    render(spec)
    assert out.exists()


def test_png_output(tmp_path, csvs):
    out = tmp_path / "bounds.png"
    render(FigureSpec(kind="bounds", inputs=(csvs["bounds"],), output=str(out)))
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_bounds_containment_checked_before_render(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("index,lower,upper,fitted\n1,1.0,2.0,2.5\n")
    out = tmp_path / "bad.svg"
    with pytest.raises(ContainmentError):
        render(FigureSpec(kind="bounds", inputs=(str(bad),), output=str(out)))
    assert not out.exists()


def test_missing_column_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("step,wrong\n1,0.5\n")
    with pytest.raises(SchemaMismatch) as exc:
        render(FigureSpec(kind="detection", inputs=(str(bad),), output=str(tmp_path / "x.svg")))
    assert exc.value.column == "prob"


def test_malformed_value_schema_mismatch(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("step,prob\none,0.5\n")
    with pytest.raises(SchemaMismatch):
        render(FigureSpec(kind="detection", inputs=(str(bad),), output=str(tmp_path / "x.svg")))


def test_unknown_kind_rejected(csvs, tmp_path):
    with pytest.raises(ValueError):
        FigureSpec(kind="pie", inputs=(csvs["bounds"],), output=str(tmp_path / "x.svg"))


def test_rendering_is_pure(tmp_path, csvs):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render(FigureSpec(kind="bounds", inputs=(csvs["bounds"],), output=str(a)))
    render(FigureSpec(kind="bounds", inputs=(csvs["bounds"],), output=str(b)))
    assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_render_ok(self, tmp_path, csvs, capsys):
        out = tmp_path / "fig.svg"
        assert main(["detection", csvs["detection"], "-o", str(out)]) == 0
        assert out.exists()
        assert "wrote" in capsys.readouterr().out

    def test_schema_mismatch_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        code = main(["detection", str(bad), "-o", str(tmp_path / "x.svg")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_containment_violation_exit_2(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("index,lower,upper,fitted\n1,1.0,2.0,9.9\n")
        assert main(["bounds", str(bad), "-o", str(tmp_path / "x.svg")]) == 2
