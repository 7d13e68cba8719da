import pytest

from stylemark import PlotSpec, StylemarkError, TableRow, emit_plot, emit_table
from stylemark.fixtures import REFERENCE_TABLE_ROWS
from stylemark.report import parse_table_csv


def reference_rows():
    return [TableRow(configuration=c, nme=n, fr=f)
            for c, n, f in REFERENCE_TABLE_ROWS]


class TestEmitTable:
    def test_reference_rows_reproduced_exactly(self, tmp_path):
        csv_path, txt_path = emit_table(reference_rows(), tmp_path / "table")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "configuration,nme,fr"
        assert lines[1] == "Baseline (Original Only),9.144,21"
        assert "Train + TrainSST (N=1),7.638,11" in lines
        assert len(lines) == 11
        # Text table carries the same rows in order.
        txt = txt_path.read_text()
        assert "Train + TrainSST (N=1)" in txt
        assert "7.638" in txt

    def test_single_row(self, tmp_path):
        csv_path, _ = emit_table(
            [TableRow(configuration="Baseline", nme=9.144, fr=21)],
            tmp_path / "one")
        assert csv_path.read_text().splitlines()[1:] == ["Baseline,9.144,21"]

    def test_csv_round_trip_at_3_decimals(self, tmp_path):
        csv_path, _ = emit_table(reference_rows(), tmp_path / "table")
        parsed = parse_table_csv(csv_path)
        for row, (config, nme, fr) in zip(parsed, REFERENCE_TABLE_ROWS):
            assert row.configuration == config
            assert row.nme == pytest.approx(nme, abs=5e-4)
            assert row.fr == fr

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(StylemarkError):
            emit_table([], tmp_path / "t")

    def test_row_order_preserved(self, tmp_path):
        rows = list(reversed(reference_rows()))
        csv_path, _ = emit_table(rows, tmp_path / "rev")
        lines = csv_path.read_text().splitlines()[1:]
        assert lines[0].startswith("Train + TrainSST (N=250)")

    def test_comparison_columns(self, tmp_path):
        rows = [
            TableRow("Baseline", 9.144, 21, delta_pct=0.0, retention_pct=100.0),
            TableRow("TrainST", 10.477, 25, delta_pct=14.6, retention_pct=87.3),
        ]
        csv_path, _ = emit_table(rows, tmp_path / "cmp")
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "configuration,nme,fr,delta_vs_baseline_pct,retention_pct"
        assert lines[2] == "TrainST,10.477,25,+14.6,87.3"


class TestEmitPlot:
    def spec(self, tmp_path, name="p.png"):
        return PlotSpec(
            kind="line_loss",
            series={"CF-ST": [(1000, 0.28), (4000, 0.08)],
                    "FB-ST": [(1000, 0.44), (4000, 0.15)]},
            output_path=tmp_path / name,
            title="Loss by epoch",
        )

    def test_two_line_plot_written(self, tmp_path):
        path = emit_plot(self.spec(tmp_path))
        assert path.exists()
        assert path.stat().st_size > 0

    def test_determinism_bytes(self, tmp_path):
        p1 = emit_plot(self.spec(tmp_path, "a.png"))
        p2 = emit_plot(self.spec(tmp_path, "b.png"))
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_spec_different_bytes(self, tmp_path):
        p1 = emit_plot(self.spec(tmp_path, "a.png"))
        other = PlotSpec(
            kind="line_loss",
            series={"CF-ST": [(1000, 0.29), (4000, 0.08)]},
            output_path=tmp_path / "c.png",
            title="Loss by epoch",
        )
        p2 = emit_plot(other)
        assert p1.read_bytes() != p2.read_bytes()

    def test_empty_series_rejected(self, tmp_path):
        with pytest.raises(StylemarkError):
            PlotSpec(kind="line_loss", series={}, output_path=tmp_path / "x.png")
        with pytest.raises(StylemarkError):
            PlotSpec(kind="line_loss", series={"a": []},
                     output_path=tmp_path / "x.png")

    def test_inconsistent_bar_lengths_rejected(self, tmp_path):
        with pytest.raises(StylemarkError, match="inconsistent"):
            PlotSpec(kind="bar_nme_fr", series={"nme": [1, 2], "fr": [1]},
                     output_path=tmp_path / "x.png")

    def test_bar_kinds_render(self, tmp_path):
        bar = PlotSpec(
            kind="bar_nme_fr",
            series={"nme": [9.1, 10.4, 7.6], "fr": [21.0, 25.0, 11.0]},
            labels=["Baseline", "TrainST", "Train+SST1"],
            output_path=tmp_path / "bars.png",
        )
        assert emit_plot(bar).exists()
        region = PlotSpec(
            kind="bar_per_region",
            series={"Baseline": [5.0, 7.0], "TrainST": [6.0, 8.0]},
            labels=["ears", "eyes"],
            output_path=tmp_path / "regions.png",
        )
        assert emit_plot(region).exists()

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(StylemarkError, match="unknown plot kind"):
            PlotSpec(kind="pie", series={"a": [1]}, output_path=tmp_path / "x.png")
