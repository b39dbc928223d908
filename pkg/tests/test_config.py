import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopsched.belief import SensorParams
from coopsched.config import parse_config, serialize_config
from coopsched.harness import STUDY_WINDOWS, ConfigError, ScenarioConfig, Window

STUDY_WINDOWS_TEXT = """\
[windows]
[0,10] = none
(10,20] = 3 5 7 9
(20,35] = 2 6 8
(35,40] = 1 5 7
(40,60] = 3 4 6 9
(60,65] = 5 7
(65,80] = 3 6 8
(80,95] = 1 4 9
(95,100] = 4 6
"""


def test_empty_config_is_defaults():
    assert parse_config("") == ScenarioConfig()
    assert parse_config("# only a comment\n\n") == ScenarioConfig()


def test_global_quota_override():
    cfg = parse_config("q = 3\n")
    assert cfg.q == 3
    assert cfg == ScenarioConfig(q=3)


def test_study_window_rows():
    cfg = parse_config(STUDY_WINDOWS_TEXT)
    assert len(cfg.windows) == 9
    assert cfg.windows == STUDY_WINDOWS


def test_empty_windows_section_means_no_measurements():
    cfg = parse_config("n_robots = 3\nduration = 5\n[windows]\n")
    assert cfg.windows == ()
    assert cfg.observers_at(2.0) == []


def test_robot_sections():
    cfg = parse_config("sigma_rho = 0.2\n[robot 2]\nq = 0\n[robot 4]\nsigma_theta = 0.5  # noisy\n")
    assert cfg.robot_q == {2: 0}
    assert cfg.sensor.sigma_rho == 0.2
    assert cfg.robot_sensors[4].sigma_theta == 0.5
    assert cfg.robot_sensors[4].sigma_rho == 0.2


def test_booleans_and_policy():
    cfg = parse_config("policy = random\ntrack_bound = true\ntruth_heading_noise = False\n")
    assert cfg.policy == "random" and cfg.track_bound and not cfg.truth_heading_noise


@pytest.mark.parametrize("text, line, fragment", [
    ("q = 1\nfoo = 2\n", 2, "unknown key 'foo'"),
    ("q = 1\n\nq = 2\n", 3, "duplicate key"),
    ("q = two\n", 1, "q expects int"),
    ("seed = 1\npolicy = best\n", 2, "unknown policy"),
    ("track_bound = yes\n", 1, "expects bool"),
    ("just words\n", 1, "expected 'key = value'"),
    ("[robot 1]\npolicy = alg1\n", 2, "in [robot 1]"),
    ("[windows]\n(0,10] = 1\n(5,20] = 2\n", 3, "overlaps"),
    ("[windows]\n(0,10 = 1\n", 2, "bad window interval"),
    ("[windows]\n(10,5] = 1\n", 2, "before start"),
    ("n_robots = 3\nduration = 5\n[robot 7]\nq = 1\n", 3, "outside 1..3"),
    ("dt = 0\n", 1, "dt must be > 0"),
    ("sigma_rho = -1\n", 1, ""),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert str(info.value).startswith(f"line {line}:")
    assert fragment in str(info.value)


def test_serialize_round_trip_defaults():
    cfg = ScenarioConfig()
    assert parse_config(serialize_config(cfg)) == cfg


positive = st.floats(1e-3, 1e3, allow_nan=False)


@st.composite
def configs(draw):
    n = draw(st.integers(1, 6))
    dt = draw(st.sampled_from([0.05, 0.1, 0.2]))
    steps = draw(st.integers(1, 400))
    duration = steps * dt
    cuts = sorted(draw(st.lists(st.integers(0, steps), min_size=0, max_size=4, unique=True)))
    windows = []
    for i, (a, b) in enumerate(zip([0] + cuts, cuts + [steps])):
        ids = tuple(draw(st.lists(st.integers(1, n), unique=True, max_size=n)))
        windows.append(Window(a * dt, b * dt, tuple(sorted(ids)), closed_start=i == 0))
    sensor = SensorParams(sigma_rho=draw(positive), sigma_theta=draw(positive))
    robot_ids = draw(st.lists(st.integers(1, n), unique=True, max_size=n))
    robot_q = {r: draw(st.integers(0, 5)) for r in robot_ids}
    robot_sensors = {r: dataclasses.replace(sensor, rho_max=draw(positive))
                     for r in draw(st.lists(st.integers(1, n), unique=True, max_size=n))}
    return ScenarioConfig(
        n_robots=n, dt=dt, duration=duration, spacing=draw(positive), speed=draw(positive),
        q=draw(st.integers(0, 8)), policy=draw(st.sampled_from(["alg1", "random", "take-all"])),
        seed=draw(st.integers(0, 2**32)), runs=draw(st.integers(1, 100)),
        truth_heading_noise=draw(st.booleans()), sensor=sensor, robot_q=robot_q,
        robot_sensors=robot_sensors, windows=tuple(windows),
    )


@given(configs())
def test_serialize_round_trip(cfg):
    assert parse_config(serialize_config(cfg)) == cfg
