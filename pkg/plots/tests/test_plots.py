"""Rendering tests against the repo's sample tables."""

from pathlib import Path

import matplotlib.pyplot as plt
import pytest

from reconplots.boxplots import main as boxplots_main, render_boxplots
from reconplots.edc import main as edc_main, render_edc
from reconplots.roc import main as roc_main, render_roc
from reconplots.tables import TableError, read_boxstats, read_roc

SAMPLES = Path(__file__).resolve().parent.parent / "samples"


@pytest.fixture(autouse=True)
def close_figures():
    yield
    plt.close("all")


class TestSampleTables:
    def test_boxplots_render_nonzero_image(self, tmp_path):
        out = tmp_path / "box.png"
        render_boxplots(SAMPLES / "recon_boxstats.csv", out)
        assert out.stat().st_size > 0

    def test_roc_renders_nonzero_image(self, tmp_path):
        out = tmp_path / "roc.png"
        render_roc(SAMPLES / "verify_roc.csv", out)
        assert out.stat().st_size > 0

    def test_single_edc_renders_nonzero_image(self, tmp_path):
        out = tmp_path / "edc.png"
        render_edc([SAMPLES / "recon_edc_full.csv"], out)
        assert out.stat().st_size > 0

    def test_two_table_edc_overlay_has_two_curve_legend(self, tmp_path):
        out = tmp_path / "edc2.png"
        fig = render_edc(
            [SAMPLES / "recon_edc_full.csv", SAMPLES / "recon_edc_short.csv"],
            out, labels=["full loss", "stage 1 only"])
        assert out.stat().st_size > 0
        legend_texts = [t.get_text() for t in fig.axes[0].get_legend().get_texts()]
        assert legend_texts == ["full loss", "stage 1 only"]
        assert len(fig.axes[0].lines) == 2

    def test_rendering_leaves_tables_untouched(self, tmp_path):
        table = SAMPLES / "recon_boxstats.csv"
        before = table.read_bytes()
        render_boxplots(table, tmp_path / "box.png")
        assert table.read_bytes() == before


class TestErrors:
    def test_missing_column_is_named(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("identity_id,min,q1,median,max,iqr\n0,1,2,3,5,2\n")
        with pytest.raises(TableError, match="'q3'"):
            read_boxstats(bad)

    def test_empty_table_rejected_and_no_image_written(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("threshold,fraction\n")
        out = tmp_path / "edc.png"
        with pytest.raises(TableError, match="no rows"):
            render_edc([empty], out)
        assert not out.exists()

    def test_headerless_file_rejected(self, tmp_path):
        blank = tmp_path / "blank.csv"
        blank.write_text("")
        with pytest.raises(TableError, match="empty table"):
            read_roc(blank)

    def test_unparseable_value_reports_line(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("fpr,tpr\n0.1,oops\n")
        with pytest.raises(TableError, match="line 2"):
            read_roc(bad)

    def test_label_count_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="labels"):
            render_edc([SAMPLES / "recon_edc_full.csv"], tmp_path / "x.png",
                       labels=["a", "b"])


def test_criterion_9_acceptance(tmp_path, capsys):
    """All three figure types render from the repo's sample tables; overlays
    carry a two-curve legend; missing columns fail by name."""
    box = tmp_path / "box.png"
    render_boxplots(SAMPLES / "recon_boxstats.csv", box)
    roc = tmp_path / "roc.png"
    render_roc(SAMPLES / "verify_roc.csv", roc)
    overlay = tmp_path / "edc.png"
    fig = render_edc([SAMPLES / "recon_edc_full.csv", SAMPLES / "recon_edc_short.csv"],
                     overlay)
    ok = all(p.stat().st_size > 0 for p in (box, roc, overlay))
    ok &= len(fig.axes[0].get_legend().get_texts()) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("threshold\n1.0\n")
    try:
        render_edc([bad], tmp_path / "never.png")
        ok = False
    except TableError as error:
        ok &= "'fraction'" in str(error)
    ok &= not (tmp_path / "never.png").exists()
    print(f"[{'PASS' if ok else 'FAIL'}] criterion 9: plot scripts render the "
          "sample tables, overlay legends, and name missing columns")
    assert ok


class TestCommandLine:
    def test_boxplots_cli(self, tmp_path, capsys):
        out = tmp_path / "box.svg"
        assert boxplots_main([str(SAMPLES / "recon_boxstats.csv"), str(out)]) == 0
        assert out.stat().st_size > 0
        assert "wrote" in capsys.readouterr().out

    def test_edc_cli_with_labels(self, tmp_path):
        out = tmp_path / "edc.png"
        assert edc_main([str(SAMPLES / "recon_edc_full.csv"),
                         str(SAMPLES / "recon_edc_short.csv"),
                         str(out), "--labels", "full,ablated"]) == 0
        assert out.stat().st_size > 0

    def test_roc_cli(self, tmp_path):
        out = tmp_path / "roc.png"
        assert roc_main([str(SAMPLES / "verify_roc.csv"), str(out)]) == 0
        assert out.stat().st_size > 0

    def test_missing_column_exits_nonzero_naming_column(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("fpr\n0.0\n")
        with pytest.raises(SystemExit) as excinfo:
            roc_main([str(bad), str(tmp_path / "x.png")])
        assert excinfo.value.code == 1
        assert "'tpr'" in capsys.readouterr().err
