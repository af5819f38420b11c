from netcohesion.graph import Graph, block_labels
from netcohesion.plotting import plot_adjacency, plot_mse_bars, save_figure, save_summary_figures
from netcohesion.simulation import BenchmarkReport, ReportRow, summarize


def _summary():
    rows = [ReportRow(m, k, s, r, 1.0 + 0.1 * r + (0.5 if m == "mlr" else 0.0))
            for m in ("mlr", "rbf", "krr-rbf") for k in ("uniform", "tight")
            for s in ("train", "test") for r in range(3)]
    return summarize(BenchmarkReport(rows))


def test_summary_figures_are_byte_identical(tmp_path):
    a = save_summary_figures(_summary(), tmp_path / "a")
    b = save_summary_figures(_summary(), tmp_path / "b")
    assert [p.rsplit("/", 1)[1] for p in a] == [p.rsplit("/", 1)[1] for p in b]
    assert "mse_test_tight.svg" in {p.rsplit("/", 1)[1] for p in a}
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()


def test_svg_carries_no_timestamp(tmp_path):
    fig, _ = plot_mse_bars(_summary(), "uniform", "test")
    save_figure(fig, tmp_path / "f.svg")
    text = (tmp_path / "f.svg").read_text()
    assert "<dc:date>" not in text
    assert "RBF" in text and "MLR" in text


def test_adjacency_plot_title():
    g = Graph(6, ((0, 1), (2, 3), (4, 5)))
    fig, ax = plot_adjacency(g, block_labels(6, 3))
    assert ax.get_title() == "6 nodes, 3 edges"
    # spy with a marker size draws one marker per nonzero entry
    assert len(ax.lines[0].get_xdata()) == 6
