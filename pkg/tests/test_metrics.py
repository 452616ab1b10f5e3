import numpy as np
import pytest

from stdo.errors import ShapeError, StdoError
from stdo.metrics import PSNR_CAP, PsnrReport, emit_heatmap, psnr, read_pgm
from stdo.video import PatchGrid, PatchId


class TestPsnr:
    def test_identical_inputs_capped(self, rng):
        a = rng.random((4, 4, 3))
        assert psnr(a, a.copy()) == PSNR_CAP

    def test_unit_error(self):
        a = np.zeros((8, 8))
        b = np.ones((8, 8))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_single_pixel_case(self):
        # 2x2 single channel, one pixel differs by 10/255:
        # MSE = (10/255)^2 / 4, PSNR = 10*log10(2601) = 34.1514 dB
        a = np.zeros((2, 2))
        b = np.zeros((2, 2))
        b[0, 0] = 10.0 / 255.0
        val = psnr(a, b)
        assert val == pytest.approx(34.1514, abs=5e-4)
        assert val == pytest.approx(10 * np.log10((255 / 10) ** 2 * 4), rel=1e-12)

    def test_symmetry_and_permutation_invariance(self, rng):
        a = rng.random((5, 5))
        b = rng.random((5, 5))
        assert psnr(a, b) == psnr(b, a)
        perm = rng.permutation(25)
        assert psnr(a.ravel()[perm], b.ravel()[perm]) == pytest.approx(psnr(a, b), rel=1e-12)

    def test_monotone_in_mse(self, rng):
        a = rng.random((6, 6))
        prev = None
        for amp in (0.01, 0.02, 0.05, 0.1):
            val = psnr(a, a + amp)
            if prev is not None:
                assert val < prev
            prev = val

    def test_shape_mismatch(self, rng):
        with pytest.raises(ShapeError):
            psnr(rng.random((2, 2)), rng.random((2, 3)))


def make_report(grid, t_frames, values):
    """Build a report whose per-patch MSE yields the given dB values."""
    ids = [PatchId(i, j, t) for t in range(t_frames) for j in range(grid.rows) for i in range(grid.cols)]
    px = 3 * (grid.scale * grid.lr_patch_h) * (grid.scale * grid.lr_patch_w)
    sse = np.array([10 ** (-v / 10) * px for v in values])
    return PsnrReport.from_patch_sse(ids, sse, px), ids


class TestReport:
    def test_pooling_law(self, rng):
        grid = PatchGrid.from_lr(48, 32, 16, 16, 2)
        ids = [PatchId(i, j, t) for t in range(3) for j in range(2) for i in range(3)]
        px = 3 * 32 * 32
        sse = rng.random(len(ids)) * px * 1e-3
        rep = PsnrReport.from_patch_sse(ids, sse, px)

        # frame MSE pools patch SSE; video MSE is the pixel-weighted mean
        frame_mse = {}
        for pid, s in zip(ids, sse):
            frame_mse.setdefault(pid.t, []).append(s)
        total_px = len(ids) * px
        video_mse_direct = sse.sum() / total_px
        weighted = sum(np.sum(v) for v in frame_mse.values()) / total_px
        assert abs(video_mse_direct - weighted) <= 1e-9
        assert rep.video == pytest.approx(10 * np.log10(1 / video_mse_direct), rel=1e-12)
        for t, vals in frame_mse.items():
            mse_t = np.sum(vals) / (len(vals) * px)
            assert rep.per_frame[t] == pytest.approx(10 * np.log10(1 / mse_t), rel=1e-12)

    def test_values_bounded(self):
        grid = PatchGrid.from_lr(32, 32, 16, 16, 2)
        rep, _ = make_report(grid, 1, [20.0, 150.0, 60.0, 0.5])
        assert all(0 <= v <= PSNR_CAP for v in rep.per_patch.values())
        assert 0 <= rep.video <= PSNR_CAP

    def test_pooled_subset(self):
        grid = PatchGrid.from_lr(32, 32, 16, 16, 2)
        rep, ids = make_report(grid, 1, [30.0, 30.0, 40.0, 40.0])
        assert rep.pooled_db(ids[:2]) == pytest.approx(30.0, abs=1e-9)
        mixed = rep.pooled_db(ids)
        assert 30.0 < mixed < 40.0


class TestHeatmap:
    def test_uniform_report(self, tmp_path):
        grid = PatchGrid.from_lr(48, 32, 16, 16, 2)
        rep, _ = make_report(grid, 1, [33.0] * 6)
        csv_path, pgm_path = emit_heatmap(rep, grid, 0, str(tmp_path / "heat"))
        rows = open(csv_path).read().splitlines()
        assert rows == ["33.0000,33.0000,33.0000", "33.0000,33.0000,33.0000"]
        gray = read_pgm(pgm_path)
        assert gray.shape == (2, 3)
        assert len(np.unique(gray)) == 1

    def test_csv_cells_match_report(self, tmp_path):
        grid = PatchGrid.from_lr(48, 32, 16, 16, 2)
        vals = [31.25, 42.0, 33.3333, 28.0, 55.5, 39.9999]
        rep, ids = make_report(grid, 1, vals)
        csv_path, pgm_path = emit_heatmap(rep, grid, 0, str(tmp_path / "h"), cell=4)
        rows = [line.split(",") for line in open(csv_path).read().splitlines()]
        for pid in ids:
            assert rows[pid.j][pid.i] == f"{rep.per_patch[pid]:.4f}"
        gray = read_pgm(pgm_path)
        assert gray.shape == (8, 12)  # 2x3 cells scaled by 4
        # min and max dB map to 0 and 255
        assert gray.min() == 0 and gray.max() == 255

    def test_missing_frame_rejected(self, tmp_path):
        grid = PatchGrid.from_lr(48, 32, 16, 16, 2)
        rep, _ = make_report(grid, 1, [30.0] * 6)
        with pytest.raises(StdoError):
            emit_heatmap(rep, grid, 3, str(tmp_path / "x"))

    def test_motif_cells_score_low(self, small_bundle, tmp_path):
        from stdo.chunking import AnchorModel, profile_patches

        rep = profile_patches(AnchorModel.bicubic(), small_bundle.dataset)
        grid = small_bundle.grid
        for t in range(small_bundle.hr.t):
            frame_vals = [rep.per_patch[pid] for pid in grid.frame_ids(t)]
            assert max(frame_vals) - min(frame_vals) > 2.0
        emit_heatmap(rep, grid, 0, str(tmp_path / "synth"))
