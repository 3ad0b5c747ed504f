import numpy as np
import pytest

from conftest import default_rigs, flat_curved_layout
from railgauge import fileio
from railgauge.calibration import CalibrationSet
from railgauge.errors import LayoutError
from railgauge.pipeline import EncoderData, ImuData
from railgauge.railhead import RailProfileTemplate
from railgauge.simulator import make_irregularity_field


class TestLayoutFile:
    def test_round_trip(self, tmp_path):
        layout = flat_curved_layout()
        path = tmp_path / "layout.txt"
        fileio.save_layout(path, layout)
        loaded = fileio.load_layout(path)
        assert loaded.total_length == layout.total_length
        assert loaded.half_gauge == layout.half_gauge
        assert loaded.rail_inclination == layout.rail_inclination
        s = np.linspace(0.0, layout.total_length, 50)
        assert np.array_equal(loaded.horizontal_at(s)[0], layout.horizontal_at(s)[0])
        assert np.array_equal(loaded.position_at(s), layout.position_at(s))

    def test_bad_section_line(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text("half_gauge: 0.7\n[horizontal]\nwobbly 100 0 0 0 0\n[vertical]\nconstant 100 0 0\n")
        with pytest.raises(LayoutError):
            fileio.load_layout(path)

    def test_discontinuous_layout_rejected_at_load(self, tmp_path):
        path = tmp_path / "layout.txt"
        path.write_text(
            "[horizontal]\nstraight 100 0 0 0 0\ncircular 100 500 500 0 0\n"
            "[vertical]\nconstant 200 0 0\n"
        )
        with pytest.raises(LayoutError):
            fileio.load_layout(path)


class TestTemplateFile:
    def test_round_trip(self, tmp_path):
        tpl = RailProfileTemplate.default()
        path = tmp_path / "template.txt"
        fileio.save_template(path, tpl)
        loaded = fileio.load_template(path)
        assert loaded.r1 == tpl.r1 and loaded.r2 == tpl.r2
        assert np.array_equal(loaded.c1, tpl.c1)
        assert np.array_equal(loaded.c2, tpl.c2)
        assert loaded.alpha_min == tpl.alpha_min


class TestRigFile:
    def test_round_trip(self, tmp_path):
        cam, plane, _, _ = default_rigs()
        path = tmp_path / "rig.txt"
        fileio.save_rig(path, cam, plane, side="left")
        cam2, plane2, side = fileio.load_rig(path)
        assert side == "left"
        assert np.array_equal(cam2.m_int, cam.m_int)
        assert np.array_equal(cam2.u_cam, cam.u_cam)
        assert np.array_equal(cam2.euler_cam, cam.euler_cam)
        assert cam2.pixel_bounds == cam.pixel_bounds
        assert (plane2.a, plane2.b, plane2.c, plane2.d) == (plane.a, plane.b, plane.c, plane.d)


class TestCsvStreams:
    def test_imu_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        imu = ImuData(
            t=np.arange(100) / 200.0,
            accel=rng.normal(0.0, 1.0, (100, 3)),
            gyro=rng.normal(0.0, 0.1, (100, 3)),
        )
        path = tmp_path / "imu.csv"
        fileio.write_imu_csv(path, imu)
        back = fileio.read_imu_csv(path)
        assert np.array_equal(back.t, imu.t)
        assert np.array_equal(back.accel, imu.accel)
        assert np.array_equal(back.gyro, imu.gyro)

    def test_encoder_round_trip(self, tmp_path):
        enc = EncoderData(t=np.arange(10.0), s_app=np.arange(10.0) * 20.0)
        path = tmp_path / "encoder.csv"
        fileio.write_encoder_csv(path, enc)
        back = fileio.read_encoder_csv(path)
        assert np.array_equal(back.t, enc.t)
        assert np.array_equal(back.s_app, enc.s_app)

    def test_pixels_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        frames = {
            0: {"left": rng.normal(0, 100, (5, 2)), "right": rng.normal(0, 100, (4, 2))},
            3: {"left": rng.normal(0, 100, (2, 2)), "right": rng.normal(0, 100, (3, 2))},
        }
        path = tmp_path / "pixels.csv"
        fileio.write_pixels_csv(path, frames)
        back = fileio.read_pixels_csv(path)
        assert set(back) == {0, 3}
        for fid in back:
            for side in ("left", "right"):
                assert np.array_equal(back[fid][side], frames[fid][side])

    def test_records_round_trip(self, tmp_path):
        s = np.linspace(0.0, 10.0, 6)
        rec = {
            "s": s,
            "al": np.sin(s),
            "vp": np.cos(s),
            "gv": s * 0.1,
            "cl": s * -0.2,
            "tw": np.concatenate([[np.nan], np.ones(5)]),
        }
        path = tmp_path / "records.csv"
        fileio.write_records_csv(path, rec)
        back, quality = fileio.read_records_csv(path)
        for ch in ("s", "al", "vp", "gv", "cl"):
            assert np.array_equal(back[ch], rec[ch])
        assert np.isnan(back["tw"][0]) and np.array_equal(back["tw"][1:], rec["tw"][1:])
        assert quality == ["ok"] * 6

    def test_irregularity_round_trip(self, tmp_path):
        irr = make_irregularity_field(
            100.0, [dict(channel="gv", kind="sine", amplitude=1e-3, wavelength=10.0)]
        )
        path = tmp_path / "irr.csv"
        fileio.write_irregularity_csv(path, irr)
        back = fileio.read_irregularity_csv(path)
        assert back.ds == irr.ds
        assert np.array_equal(back.table, irr.table)

    def test_correspondences_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        cal = CalibrationSet(
            pattern_points=rng.normal(0, 1, (6, 3)),
            pattern_pixels=rng.normal(0, 100, (6, 2)),
            laser_points=rng.normal(0, 1, (3, 3)),
        )
        path = tmp_path / "corr.csv"
        fileio.write_correspondences_csv(path, cal)
        back = fileio.read_correspondences_csv(path)
        assert np.array_equal(back.pattern_points, cal.pattern_points)
        assert np.array_equal(back.pattern_pixels, cal.pattern_pixels)
        assert np.array_equal(back.laser_points, cal.laser_points)


class TestManifest:
    def test_hashes_inputs(self, tmp_path):
        f = tmp_path / "input.txt"
        f.write_text("payload")
        out = tmp_path / "manifest.yaml"
        fileio.write_manifest(out, {"a": 1}, {"input": str(f)}, extra={"note": "x"})
        import yaml

        manifest = yaml.safe_load(out.read_text())
        assert manifest["config"] == {"a": 1}
        assert manifest["note"] == "x"
        assert len(manifest["input_hashes"]["input"]) == 64
