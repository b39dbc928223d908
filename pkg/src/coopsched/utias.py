"""Reader, writer and grid resampler for UTIAS-style multi-robot datasets.

A dataset directory holds, for robots ``1..N``::

    Robot{n}_Odometry.dat      time  forward_velocity  angular_velocity
    Robot{n}_Measurement.dat   time  barcode  range  bearing
    Robot{n}_Groundtruth.dat   time  x  y  heading
    Barcodes.dat               subject  barcode
    Landmark_Groundtruth.dat   subject  x  y  x_std  y_std

Columns are whitespace separated and lines starting with ``#`` are comments.
Subjects ``1..N`` are the robots; every other subject is a static landmark.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BARCODES_FILE = "Barcodes.dat"
LANDMARKS_FILE = "Landmark_Groundtruth.dat"
SERIES = ("Odometry", "Measurement", "Groundtruth")

# odometry stamps within this fraction of a step of a tick count as "at" the tick
HOLD_TOLERANCE = 1e-3


class DatasetError(ValueError):
    """A dataset file is missing, malformed or inconsistent."""


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """Parsed dataset; series arrays are read-only.

    ``measurements[n]`` keeps only resolvable rows, with the barcode column
    replaced by the observed subject id. ``dropped[n]`` counts the rows whose
    barcode was not in the map.
    """

    robots: tuple[int, ...]
    odometry: dict[int, np.ndarray]  # (K, 3) t, v, omega
    measurements: dict[int, np.ndarray]  # (K, 4) t, subject, range, bearing
    groundtruth: dict[int, np.ndarray]  # (K, 4) t, x, y, heading
    barcodes: dict[int, int]  # barcode -> subject
    landmarks: np.ndarray  # (L, 5) subject, x, y, x_std, y_std
    dropped: dict[int, int] = field(default_factory=dict)

    @property
    def start_time(self) -> float:
        """Earliest time covered by every robot's odometry and groundtruth."""
        return max(float(s[0, 0]) for d in (self.odometry, self.groundtruth) for s in d.values())

    @property
    def end_time(self) -> float:
        return min(float(s[-1, 0]) for d in (self.odometry, self.groundtruth) for s in d.values())

    def counts(self) -> dict[str, dict[int, int]]:
        return {
            "odometry": {n: len(s) for n, s in self.odometry.items()},
            "measurement": {n: len(s) for n, s in self.measurements.items()},
            "groundtruth": {n: len(s) for n, s in self.groundtruth.items()},
            "dropped": dict(self.dropped),
        }

    def robot_measurements(self, n: int) -> np.ndarray:
        """Rows of robot ``n`` that observe another robot."""
        m = self.measurements[n]
        subj = m[:, 1]
        keep = np.isin(subj, self.robots) & (subj != n)
        return m[keep]

    def same_records(self, other: DatasetBundle) -> bool:
        def same(a, b):
            return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)

        return (self.robots == other.robots and same(self.odometry, other.odometry)
                and same(self.measurements, other.measurements)
                and same(self.groundtruth, other.groundtruth)
                and self.barcodes == other.barcodes
                and np.array_equal(self.landmarks, other.landmarks))


def _read_table(path: Path, n_cols: int, *, strictly_increasing: bool | None = None) -> np.ndarray:
    """Parse a whitespace table; ``strictly_increasing=False`` still requires non-decreasing time."""
    if not path.is_file():
        raise DatasetError(f"missing dataset file: {path.name} (looked in {path.parent})")
    rows = []
    prev_t = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != n_cols:
                raise DatasetError(f"{path.name}:{lineno}: expected {n_cols} columns, got {len(parts)}")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: non-numeric value in {text!r}") from None
            if not all(math.isfinite(v) for v in row):
                raise DatasetError(f"{path.name}:{lineno}: non-finite value in {text!r}")
            if strictly_increasing is not None and prev_t is not None:
                if row[0] < prev_t or (strictly_increasing and row[0] == prev_t):
                    raise DatasetError(f"{path.name}:{lineno}: timestamp {parts[0]} is not after {prev_t!r}")
            prev_t = row[0]
            rows.append(row)
    table = np.array(rows, dtype=float).reshape(len(rows), n_cols)
    table.flags.writeable = False
    return table


def _robot_ids(directory: Path) -> tuple[int, ...]:
    pattern = re.compile(r"Robot(\d+)_(?:%s)\.dat$" % "|".join(SERIES))
    ids = sorted({int(m.group(1)) for p in directory.iterdir() if (m := pattern.match(p.name))})
    if not ids:
        raise DatasetError(f"no Robot<n>_Odometry.dat files in {directory}")
    if ids != list(range(1, len(ids) + 1)):
        raise DatasetError(f"robot files must be numbered 1..N, found {ids}")
    return tuple(ids)


def load_dataset(directory: str | os.PathLike) -> DatasetBundle:
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"dataset directory not found: {directory}")
    robots = _robot_ids(directory)
    codes = _read_table(directory / BARCODES_FILE, 2)
    barcodes = {int(bc): int(subj) for subj, bc in codes}
    landmarks = _read_table(directory / LANDMARKS_FILE, 5)

    odometry, measurements, groundtruth, dropped = {}, {}, {}, {}
    for n in robots:
        odometry[n] = _read_table(directory / f"Robot{n}_Odometry.dat", 3, strictly_increasing=True)
        groundtruth[n] = _read_table(directory / f"Robot{n}_Groundtruth.dat", 4, strictly_increasing=True)
        # the published data has several sightings sharing one stamp
        raw = _read_table(directory / f"Robot{n}_Measurement.dat", 4, strictly_increasing=False)
        subjects = np.array([barcodes.get(int(bc), -1) for bc in raw[:, 1]], dtype=float)
        keep = subjects >= 0
        m = raw[keep].copy()
        m[:, 1] = subjects[keep]
        m.flags.writeable = False
        measurements[n] = m
        dropped[n] = int(np.count_nonzero(~keep))
        for name, s in (("Odometry", odometry[n]), ("Groundtruth", groundtruth[n])):
            if len(s) == 0:
                raise DatasetError(f"Robot{n}_{name}.dat has no records")
    return DatasetBundle(robots, odometry, measurements, groundtruth, barcodes, landmarks, dropped)


def _write_atomic(path: Path, lines: list[str]) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("".join(lines))
    os.replace(tmp, path)


def _fmt(row) -> str:
    return " ".join(repr(float(v)) for v in row) + "\n"


def _write_tables(directory: Path, robots, odometry, coded_measurements, groundtruth,
                  barcodes: dict[int, int], landmarks) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    _write_atomic(directory / BARCODES_FILE,
                  ["# subject barcode\n"] + [f"{s} {bc}\n" for bc, s in sorted(barcodes.items(),
                                                                                key=lambda kv: (kv[1], kv[0]))])
    _write_atomic(directory / LANDMARKS_FILE, ["# subject x y x_std y_std\n"] + [_fmt(r) for r in landmarks])
    for n in robots:
        _write_atomic(directory / f"Robot{n}_Odometry.dat", ["# time v omega\n"] + [_fmt(r) for r in odometry[n]])
        _write_atomic(directory / f"Robot{n}_Groundtruth.dat",
                      ["# time x y heading\n"] + [_fmt(r) for r in groundtruth[n]])
        _write_atomic(directory / f"Robot{n}_Measurement.dat",
                      ["# time barcode range bearing\n"]
                      + [f"{float(t)!r} {int(code)} {float(r)!r} {float(b)!r}\n"
                         for t, code, r, b in coded_measurements[n]])


def write_dataset(bundle: DatasetBundle, directory: str | os.PathLike) -> None:
    """Write ``bundle`` in the on-disk format; floats use ``repr`` so re-reading is exact."""
    code_of = {s: bc for bc, s in sorted(bundle.barcodes.items(), reverse=True)}
    coded = {}
    for n, m in bundle.measurements.items():
        m = m.copy()
        m[:, 1] = [code_of[int(s)] for s in m[:, 1]]
        coded[n] = m
    _write_tables(Path(directory), bundle.robots, bundle.odometry, coded, bundle.groundtruth,
                  bundle.barcodes, bundle.landmarks)


@dataclass(frozen=True, eq=False)
class ReplayGrid:
    """A dataset window on a uniform time grid.

    ``velocity[k, i]`` is robot ``i + 1``'s held forward speed at tick ``k``,
    ``truth[k, i]`` its interpolated ``(x, y, heading)`` and
    ``measurements[k]`` the ``(observer, target, range, bearing)`` tuples
    assigned to tick ``k``.
    """

    robots: tuple[int, ...]
    t0: float
    dt: float
    velocity: np.ndarray
    truth: np.ndarray
    measurements: list[list[tuple[int, int, float, float]]]

    @property
    def n_ticks(self) -> int:
        return len(self.velocity)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_ticks) * self.dt

    @property
    def n_measurements(self) -> int:
        return sum(len(ms) for ms in self.measurements)


def resample_to_grid(bundle: DatasetBundle, t0: float, duration: float, dt: float) -> ReplayGrid:
    """Resample the window ``[start + t0, start + t0 + duration)`` onto ticks ``dt`` apart.

    ``t0`` is measured from :attr:`DatasetBundle.start_time`. Odometry is
    zero-order held, groundtruth linearly interpolated (heading unwrapped
    first) and each robot-to-robot measurement goes to the nearest tick
    within ``dt / 2``; per tick and ordered pair the sighting nearest in time
    wins.
    """
    if not duration > 0.0 or not dt > 0.0:
        raise ValueError("duration and dt must be > 0")
    k_max = int(round(duration / dt))
    begin = bundle.start_time + t0
    times = begin + np.arange(k_max) * dt
    if t0 < 0.0 or times[-1] > bundle.end_time:
        raise DatasetError(f"window [{t0}, {t0 + duration}) s lies outside the data range "
                           f"[0, {bundle.end_time - bundle.start_time:.6g}] s")
    n = len(bundle.robots)
    velocity = np.empty((k_max, n))
    truth = np.empty((k_max, n, 3))
    for i, r in enumerate(bundle.robots):
        odo = bundle.odometry[r]
        idx = np.searchsorted(odo[:, 0], times + HOLD_TOLERANCE * dt, side="right") - 1
        velocity[:, i] = odo[idx, 1]
        gt = bundle.groundtruth[r]
        truth[:, i, 0] = np.interp(times, gt[:, 0], gt[:, 1])
        truth[:, i, 1] = np.interp(times, gt[:, 0], gt[:, 2])
        heading = np.interp(times, gt[:, 0], np.unwrap(gt[:, 3]))
        truth[:, i, 2] = np.mod(heading, 2.0 * math.pi)

    best: dict[tuple[int, int, int], tuple[float, float, float]] = {}
    for r in bundle.robots:
        for t, subj, rho, bearing in bundle.robot_measurements(r):
            k = int(round((t - begin) / dt))
            if not 0 <= k < k_max:
                continue
            gap = abs(t - times[k])
            if gap > dt / 2.0:
                continue
            key = (k, r, int(subj))
            if key not in best or gap < best[key][0]:
                best[key] = (gap, float(rho), float(bearing))
    measurements: list[list[tuple[int, int, float, float]]] = [[] for _ in range(k_max)]
    for (k, a, b), (_, rho, bearing) in sorted(best.items()):
        measurements[k].append((a, b, rho, bearing))
    velocity.flags.writeable = False
    truth.flags.writeable = False
    return ReplayGrid(bundle.robots, float(begin), dt, velocity, truth, measurements)


def _wrap(angle):
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def synthesize_dataset(directory: str | os.PathLike, n_robots: int = 5, duration: float = 320.0,
                       seed: int = 0, *, rate: float = 50.0, sensing_range: float = 5.0,
                       n_landmarks: int = 15, start: float = 1248272262.0,
                       sigma_rho: float = 0.147, sigma_theta: float = 0.1) -> DatasetBundle:
    """Write a synthetic dataset in the on-disk format and return it as loaded.

    Robots wander in a 6 m square arena at up to 0.2 m/s, steering back
    toward the centre near the walls. Each robot scans about five times a
    second and reports every robot and landmark within ``sensing_range``;
    a few sightings carry a barcode that is not in the map.
    """
    rng = np.random.default_rng(seed)
    step = 1.0 / rate
    k_max = int(round(duration / step)) + 1
    t = start + np.arange(k_max) * step
    arena = 6.0
    pose = np.column_stack([rng.uniform(1.0, arena - 1.0, n_robots), rng.uniform(1.0, arena - 1.0, n_robots),
                            rng.uniform(-math.pi, math.pi, n_robots)])
    v_cmd = np.empty((k_max, n_robots))
    w_cmd = np.empty((k_max, n_robots))
    gt = np.empty((k_max, n_robots, 3))
    v = rng.uniform(0.05, 0.2, n_robots)
    w = np.zeros(n_robots)
    for k in range(k_max):
        if k % int(rate) == 0:
            v = np.clip(v + rng.normal(0.0, 0.03, n_robots), 0.05, 0.2)
            w = rng.normal(0.0, 0.2, n_robots)
            centre = np.arctan2(arena / 2 - pose[:, 1], arena / 2 - pose[:, 0])
            near_wall = np.any((pose[:, :2] < 1.0) | (pose[:, :2] > arena - 1.0), axis=1)
            w = np.where(near_wall, 1.5 * _wrap(centre - pose[:, 2]), w)
        gt[k] = pose
        v_cmd[k], w_cmd[k] = v, w
        pose = pose + step * np.column_stack([v * np.cos(pose[:, 2]), v * np.sin(pose[:, 2]), w])
    gt[:, :, 2] = _wrap(gt[:, :, 2])

    landmark_xy = rng.uniform(0.0, arena, size=(n_landmarks, 2))
    subjects = list(range(1, n_robots + n_landmarks + 1))
    codes = rng.choice(np.arange(5, 100), size=len(subjects), replace=False)
    barcodes = {int(c): s for s, c in zip(subjects, codes)}
    unknown = next(c for c in range(5, 200) if c not in barcodes)
    landmarks = np.column_stack([np.arange(n_robots + 1, n_robots + n_landmarks + 1), landmark_xy,
                                 np.full(n_landmarks, 0.001), np.full(n_landmarks, 0.001)])

    odometry, measurements, groundtruth = {}, {}, {}
    scan_every = int(rate / 5)
    for i in range(n_robots):
        r = i + 1
        odometry[r] = np.column_stack([t, v_cmd[:, i] + rng.normal(0.0, 0.01, k_max),
                                       w_cmd[:, i] + rng.normal(0.0, 0.01, k_max)])
        groundtruth[r] = np.column_stack([t, gt[:, i]])
        rows = []
        offset = int(rng.integers(scan_every))
        for k in range(offset, k_max, scan_every):
            x, y, h = gt[k, i]
            targets = [(j + 1, gt[k, j, :2]) for j in range(n_robots) if j != i]
            targets += [(n_robots + 1 + l, landmark_xy[l]) for l in range(n_landmarks)]
            for subj, (tx, ty) in targets:
                rho = math.hypot(tx - x, ty - y)
                if rho > sensing_range:
                    continue
                code = codes[subj - 1] if rng.random() > 0.01 else unknown
                rows.append([t[k], code, max(rho + rng.normal(0.0, sigma_rho), 0.0),
                             _wrap(math.atan2(ty - y, tx - x) - h + rng.normal(0.0, sigma_theta))])
        measurements[r] = np.array(rows).reshape(-1, 4)

    _write_tables(Path(directory), tuple(range(1, n_robots + 1)), odometry, measurements, groundtruth,
                  barcodes, landmarks)
    return load_dataset(directory)
