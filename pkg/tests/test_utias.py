import numpy as np
import pytest

from coopsched.utias import DatasetError, load_dataset, resample_to_grid, write_dataset


def _write_minimal(path, odometry=None, measurements=None, groundtruth=None, barcodes=None):
    """Two-robot dataset with 0.1 s odometry/groundtruth from t=100 to t=101."""
    path.mkdir(parents=True, exist_ok=True)
    times = [100.0 + 0.1 * k for k in range(11)]
    (path / "Barcodes.dat").write_text(barcodes or "# subject barcode\n1 5\n2 14\n3 41\n")
    (path / "Landmark_Groundtruth.dat").write_text("3 1.5 2.5 0.001 0.001\n")
    for r in (1, 2):
        odo = odometry or "".join(f"{t!r} {0.1 * r} 0.0\n" for t in times)
        gt = groundtruth or "".join(f"{t!r} {r + 0.01 * k} 0.0 {0.1 * k}\n" for k, t in enumerate(times))
        (path / f"Robot{r}_Odometry.dat").write_text(odo)
        (path / f"Robot{r}_Groundtruth.dat").write_text(gt)
        (path / f"Robot{r}_Measurement.dat").write_text(measurements or "")
    return path


def test_well_formed_odometry_three_records(tmp_path):
    _write_minimal(tmp_path, odometry="# t v w\n1.0 0.1 0.0\n1.1 0.2 0.0\n1.2 0.3 0.1\n",
                   groundtruth="1.0 0 0 0\n1.2 0 0 0\n")
    b = load_dataset(tmp_path)
    assert b.counts()["odometry"] == {1: 3, 2: 3}
    np.testing.assert_array_equal(b.odometry[1][:, 1], [0.1, 0.2, 0.3])


def test_unknown_barcode_dropped(tmp_path):
    _write_minimal(tmp_path, measurements="100.5 14 2.0 0.1\n100.6 99 3.0 0.2\n100.7 41 1.0 0.0\n")
    b = load_dataset(tmp_path)
    assert b.dropped == {1: 1, 2: 1}
    assert b.measurements[1][:, 1].tolist() == [2.0, 3.0]
    # the landmark sighting is parsed but is not a robot measurement
    assert b.robot_measurements(1)[:, 1].tolist() == [2.0]


def test_out_of_order_timestamps_report_line(tmp_path):
    _write_minimal(tmp_path, odometry="1.0 0.1 0\n# comment\n1.2 0.1 0\n1.1 0.1 0\n")
    with pytest.raises(DatasetError, match=r"Robot1_Odometry\.dat:4"):
        load_dataset(tmp_path)


def test_measurements_may_share_timestamps(tmp_path):
    _write_minimal(tmp_path, measurements="100.5 14 2.0 0.1\n100.5 5 3.0 0.2\n")
    assert len(load_dataset(tmp_path).measurements[1]) == 2


def test_missing_file_named(tmp_path):
    _write_minimal(tmp_path)
    (tmp_path / "Robot2_Groundtruth.dat").unlink()
    with pytest.raises(DatasetError, match="Robot2_Groundtruth.dat"):
        load_dataset(tmp_path)
    (tmp_path / "Barcodes.dat").unlink()
    with pytest.raises(DatasetError, match="Barcodes.dat"):
        load_dataset(tmp_path)


def test_malformed_line_reported(tmp_path):
    _write_minimal(tmp_path, measurements="100.5 14 2.0\n")
    with pytest.raises(DatasetError, match=r"Robot1_Measurement\.dat:1"):
        load_dataset(tmp_path)
    _write_minimal(tmp_path, measurements="100.5 14 abc 0.1\n")
    with pytest.raises(DatasetError, match=r":1: non-numeric"):
        load_dataset(tmp_path)


def test_round_trip(tmp_path, fixture_dataset):
    original = load_dataset(fixture_dataset)
    write_dataset(original, tmp_path / "copy")
    again = load_dataset(tmp_path / "copy")
    assert original.same_records(again)


def test_pass_through_on_aligned_grid(tmp_path):
    _write_minimal(tmp_path)
    b = load_dataset(tmp_path)
    g = resample_to_grid(b, 0.0, 1.0, 0.1)
    assert g.n_ticks == 10
    np.testing.assert_array_equal(g.velocity[:, 0], b.odometry[1][:10, 1])
    np.testing.assert_allclose(g.truth[:, 1, 0], b.groundtruth[2][:10, 1], rtol=1e-12)
    np.testing.assert_allclose(g.truth[:, 0, 2], b.groundtruth[1][:10, 3], rtol=1e-9)


def test_nearest_measurement_wins(tmp_path):
    # both robots get this file; a row naming the robot itself is not a robot-to-robot sighting
    _write_minimal(tmp_path, measurements="100.27 14 2.0 0.1\n100.31 14 3.0 0.2\n100.34 5 4.0 0.3\n")
    g = resample_to_grid(load_dataset(tmp_path), 0.0, 1.0, 0.1)
    # robot 1 sees robot 2 twice inside tick 3's window; the sighting at 100.31 is nearer to 100.3
    assert g.measurements[3] == [(1, 2, 3.0, 0.2), (2, 1, 4.0, 0.3)]
    assert g.n_measurements == 2


def test_resampling_never_invents(fixture_dataset):
    b = load_dataset(fixture_dataset)
    g = resample_to_grid(b, 0.0, 300.0, 0.1)
    assert g.n_ticks == 3000
    raw = sum(len(b.robot_measurements(r)) for r in b.robots)
    assert 0 < g.n_measurements <= raw
    for ms in g.measurements:
        pairs = [(a, t) for a, t, _, _ in ms]
        assert len(pairs) == len(set(pairs))


def test_window_outside_data(fixture_dataset):
    b = load_dataset(fixture_dataset)
    with pytest.raises(DatasetError, match="outside"):
        resample_to_grid(b, 100.0, 300.0, 0.1)
    with pytest.raises(DatasetError):
        resample_to_grid(b, -1.0, 10.0, 0.1)
    with pytest.raises(ValueError):
        resample_to_grid(b, 0.0, 0.0, 0.1)


def test_heading_interpolation_across_wrap(tmp_path):
    gt = "100.0 0 0 3.1\n100.2 0 0 -3.1\n100.4 0 0 -3.0\n101.0 0 0 -3.0\n"
    _write_minimal(tmp_path, groundtruth=gt)
    g = resample_to_grid(load_dataset(tmp_path), 0.0, 0.5, 0.1)
    # halfway from 3.1 to -3.1 the short way round is pi, not 0
    assert abs(abs(g.truth[1, 0, 2] - np.pi)) < 1e-9
