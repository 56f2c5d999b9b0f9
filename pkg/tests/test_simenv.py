"""Propagation, LoS model, radio sampling, flight paths, config loading."""

import json
import math

import pytest

from skylog.geo import tangent_inverse
from skylog.records import GeoPosition, validate_serving
from skylog.simenv import (
    BaseStation,
    ConfigError,
    DistanceTooSmall,
    FlightPlan,
    RadioEnvironment,
    SimModemBackend,
    Waypoint,
    flight_position,
    fspl_1m_db,
    load_environment,
    load_flight_plan,
    los_state,
    path_loss_db,
    plan_duration_s,
    radio_sample,
    radio_sample_raw,
    station_distance_m,
    synth_e2e,
)

ANCHOR_LAT, ANCHOR_LON = 40.0, -100.0


def station_at(x_east_m, y_north_m, antenna_m=30.0, eirp=42.0, pci=101,
               earfcn=5230, cell_id=0x1A2B001, tac=12802):
    lat, lon = tangent_inverse(ANCHOR_LAT, ANCHOR_LON, x_east_m, y_north_m)
    pos = GeoPosition(lat_deg=lat, lon_deg=lon, alt_m_amsl=300.0 + antenna_m,
                      alt_m_agl=antenna_m)
    return BaseStation(site_pos=pos, eirp_dbm=eirp, earfcn=earfcn, pci=pci,
                       cell_id=cell_id, tac=tac)


def uav_at(x_east_m, y_north_m, agl_m):
    lat, lon = tangent_inverse(ANCHOR_LAT, ANCHOR_LON, x_east_m, y_north_m)
    return GeoPosition(lat_deg=lat, lon_deg=lon, alt_m_amsl=300.0 + agl_m, alt_m_agl=agl_m)


def env_with(stations, **over):
    return RadioEnvironment(stations=tuple(stations), **over)


def test_fspl_reference_at_2_1_ghz():
    assert round(fspl_1m_db(2.1e9), 1) == 38.9


def test_path_loss_1m_los_no_shadow():
    # tall mast, UAV 1 m away at the same height: agl >= 100 makes LoS certain
    st = station_at(0, 0, antenna_m=120.0)
    env = env_with([st], shadow_sigma_db=0.0)
    pos = uav_at(0, 1.001, 120.0)
    assert los_state(env, st, pos)
    assert path_loss_db(env, st, pos) == pytest.approx(38.9, abs=0.05)


def test_path_loss_1km_exponent_2_2():
    st = station_at(0, 0, antenna_m=30.0)
    env = env_with([st], shadow_sigma_db=0.0)
    pos = uav_at(0, 1000.0, 120.0)  # agl >= 100 -> always LoS
    assert los_state(env, st, pos)
    d = station_distance_m(st, pos)
    expected = fspl_1m_db(2.1e9) + 22.0 * math.log10(d)
    assert path_loss_db(env, st, pos) == pytest.approx(expected, abs=1e-9)
    # and the canonical spot check: exactly 1 km -> 104.9 dB
    assert fspl_1m_db(2.1e9) + 22.0 * math.log10(1000.0) == pytest.approx(104.9, abs=0.05)


def test_path_loss_below_1m_raises():
    st = station_at(0, 0, antenna_m=30.0)
    env = env_with([st])
    with pytest.raises(DistanceTooSmall):
        path_loss_db(env, st, uav_at(0, 0.5, 30.0))


def test_path_loss_deterministic():
    st = station_at(0, 0)
    env = env_with([st], seed=99)
    pos = uav_at(250, 130, 40.0)
    assert path_loss_db(env, st, pos) == path_loss_db(env, st, pos)


def test_los_always_above_100m():
    st = station_at(0, 0)
    env = env_with([st], seed=3)
    for i in range(200):
        assert los_state(env, st, uav_at(17 * i, 13 * i, 100.0 + (i % 23)))


def test_los_ground_rate_near_0_15():
    st = station_at(0, 0)
    env = env_with([st], seed=5)
    hits = sum(los_state(env, st, uav_at(10.0 * i, 10.0 * j, 0.0))
               for i in range(100) for j in range(100))
    assert hits / 10000 == pytest.approx(0.15, abs=0.03)


def test_los_deterministic_within_voxel():
    st = station_at(0, 0)
    env = env_with([st], seed=12)
    a = los_state(env, st, uav_at(101.0, 52.0, 44.0))
    b = los_state(env, st, uav_at(108.9, 57.5, 41.1))  # same 10 m voxel, same band
    assert a == b


def test_shadowing_distribution_moments():
    from skylog.simenv import shadow_db
    st = station_at(0, 0)
    env = env_with([st], seed=8, shadow_sigma_db=6.0)
    draws = [shadow_db(env, st, uav_at(10.0 * i, 10.0 * j, 50.0))
             for i in range(100) for j in range(100)]
    n = len(draws)
    mean = sum(draws) / n
    var = sum((d - mean) ** 2 for d in draws) / (n - 1)
    assert mean == pytest.approx(0.0, abs=0.25)
    assert math.sqrt(var) == pytest.approx(6.0, rel=0.05)


def test_single_station_sinr_and_rssi():
    # One station, received power -90 dBm, noise -104.5:
    # sinr = -90 - (-104.5) = 14.5; rssi = 10*log10(1e-9 + 10^-10.45) dBm (in mW)
    st = station_at(0, 0, antenna_m=30.0, eirp=42.0)
    env = env_with([st], shadow_sigma_db=0.0)
    pos = uav_at(0, 1000.0, 120.0)  # LoS guaranteed
    # tune eirp so received power is exactly -90
    pl = path_loss_db(env, st, pos)
    st2 = station_at(0, 0, antenna_m=30.0, eirp=pl - 90.0)
    env2 = env_with([st2], shadow_sigma_db=0.0)
    raw = radio_sample_raw(env2, pos)
    assert raw.rsrp_dbm == pytest.approx(-90.0, abs=1e-9)
    assert raw.sinr_db == pytest.approx(14.5, abs=1e-9)
    expected_rssi = 10.0 * math.log10(10 ** (-90 / 10) + 10 ** (-104.5 / 10))
    assert raw.rssi_dbm == pytest.approx(expected_rssi, abs=1e-9)
    assert raw.rssi_dbm == pytest.approx(-89.85, abs=0.01)


def test_rsrq_identity_value():
    # rsrp -90, rssi -60, n_prb 50 -> rsrq = 16.99 - 30 = -13.0
    assert 10 * math.log10(50) + (-90.0) - (-60.0) == pytest.approx(-13.0, abs=0.02)
    st = station_at(0, 0)
    env = env_with([st], seed=2)
    raw = radio_sample_raw(env, uav_at(400, 300, 60.0))
    assert raw.rsrq_db == pytest.approx(
        10 * math.log10(env.n_prb) + raw.rsrp_dbm - raw.rssi_dbm, abs=1e-9)


def test_equal_power_tie_serves_lower_pci():
    a = station_at(0, 500.0, pci=77, cell_id=1)
    b = station_at(0, -500.0, pci=42, cell_id=2)
    env = env_with([a, b], shadow_sigma_db=0.0)
    pos = uav_at(0, 0, 120.0)  # equidistant, LoS at both
    report = radio_sample(env, pos)
    assert report.serving.pci == 42


def test_radio_sample_emits_valid_serving():
    stations = [station_at(900, -450, pci=101, cell_id=1),
                station_at(300, 900, pci=205, cell_id=2),
                station_at(-350, 120, pci=47, cell_id=3)]
    env = env_with(stations, seed=11)
    for i in range(50):
        report = radio_sample(env, uav_at(40.0 * i, 11.0 * i, 2.0 + (i % 12) * 10))
        assert validate_serving(report.serving).ok
        assert len(report.neighbors) == 2
        for nbr in report.neighbors:
            assert (nbr.earfcn, nbr.pci) != (report.serving.earfcn, report.serving.pci)


def test_eirp_shift_never_changes_serving():
    stations = [station_at(900, -450, pci=101, cell_id=1, eirp=42.0),
                station_at(300, 900, pci=205, cell_id=2, eirp=40.0),
                station_at(-350, 120, pci=47, cell_id=3, eirp=41.0)]
    env_a = env_with(stations, seed=4)
    shifted = [BaseStation(site_pos=s.site_pos, eirp_dbm=s.eirp_dbm + 5.0,
                           earfcn=s.earfcn, pci=s.pci, cell_id=s.cell_id, tac=s.tac)
               for s in stations]
    env_b = env_with(shifted, seed=4)
    for i in range(40):
        pos = uav_at(45.0 * i, -20.0 * i, 2.0 + (i % 12) * 10)
        assert radio_sample(env_a, pos).serving.pci == radio_sample(env_b, pos).serving.pci


# --- flight path ---

def wp(x, y, agl, speed=10.0, hover=0.0):
    lat, lon = tangent_inverse(ANCHOR_LAT, ANCHOR_LON, x, y)
    return Waypoint(pos=GeoPosition(lat_deg=lat, lon_deg=lon,
                                    alt_m_amsl=300.0 + agl, alt_m_agl=agl),
                    speed_mps=speed, hover_s=hover)


def test_flight_t0_is_first_waypoint():
    plan = FlightPlan(waypoints=(wp(0, 0, 10), wp(100, 0, 10)))
    assert flight_position(plan, 0.0) == plan.waypoints[0].pos


def test_flight_leg_midpoint():
    plan = FlightPlan(waypoints=(wp(0, 0, 10, speed=10.0), wp(100, 0, 10)))
    mid = flight_position(plan, 5.0)
    from skylog.geo import tangent_forward
    x, y = tangent_forward(ANCHOR_LAT, ANCHOR_LON, mid.lat_deg, mid.lon_deg)
    assert x == pytest.approx(50.0, abs=1e-6)
    assert y == pytest.approx(0.0, abs=1e-9)


def test_flight_hover_then_leg():
    plan = FlightPlan(waypoints=(wp(0, 0, 10, speed=10.0, hover=30.0), wp(100, 0, 10)))
    assert flight_position(plan, 15.0) == plan.waypoints[0].pos
    end = flight_position(plan, 30.0 + 10.0)
    assert end == plan.waypoints[1].pos


def test_flight_past_end_holds_final():
    plan = FlightPlan(waypoints=(wp(0, 0, 10), wp(100, 0, 10)))
    assert flight_position(plan, 1e6) == plan.waypoints[1].pos


def test_plan_duration_sums_legs_and_hovers():
    plan = FlightPlan(waypoints=(wp(0, 0, 10, speed=10.0, hover=30.0),
                                 wp(100, 0, 10, speed=5.0, hover=15.0),
                                 wp(100, 50, 10)))
    assert plan_duration_s(plan) == pytest.approx(30.0 + 10.0 + 15.0 + 10.0, abs=1e-9)


def test_flight_interpolates_altitude():
    plan = FlightPlan(waypoints=(wp(0, 0, 10, speed=10.0), wp(0, 60, 20)))
    # leg length = sqrt(60^2 + 10^2) = 60.8276..., midpoint at half duration
    half = (60.8276503 / 10.0) / 2
    mid = flight_position(plan, half)
    assert mid.alt_m_agl == pytest.approx(15.0, abs=1e-3)
    assert mid.alt_m_amsl == pytest.approx(315.0, abs=1e-3)


# --- e2e synthesis ---

def test_synth_e2e_caps():
    st = station_at(0, 0)
    env = env_with([st], seed=6)
    dl, ul, rtt = synth_e2e(env, 40.0)
    assert dl == pytest.approx(36.0)  # 10 MHz * 6 b/s/Hz * 0.6
    assert ul == pytest.approx(15.0)
    for s in (-200.0, -20.0, 0.0, 15.0, 40.0, 100.0):
        dl, ul, rtt = synth_e2e(env, s)
        assert 0.0 <= dl <= 150.0
        assert 0.0 <= ul <= 50.0


def test_synth_e2e_no_signal_limit():
    env = env_with([station_at(0, 0)], seed=6)
    dl, ul, rtt = synth_e2e(env, -200.0)
    assert dl == pytest.approx(0.0, abs=1e-4)
    assert ul == pytest.approx(0.0, abs=1e-4)
    assert rtt >= 40.0 + 2000.0 / 0.5


def test_synth_e2e_rtt_jitter_bounded_and_deterministic():
    env = env_with([station_at(0, 0)], seed=6)
    base = 40.0 + 2000.0 / 36.0
    for salt in range(50):
        dl, ul, rtt = synth_e2e(env, 40.0, salt=salt)
        assert base <= rtt < base + 20.0
        assert synth_e2e(env, 40.0, salt=salt)[2] == rtt


# --- config loading ---

def env_doc():
    def st(x, y, pci, cid, eirp):
        lat, lon = tangent_inverse(ANCHOR_LAT, ANCHOR_LON, x, y)
        return {"site_pos": {"lat_deg": lat, "lon_deg": lon,
                             "alt_m_amsl": 330.0, "alt_m_agl": 30.0},
                "eirp_dbm": eirp, "earfcn": 5230, "pci": pci,
                "cell_id": cid, "tac": 12802}
    return {"stations": [st(900, -450, 101, 1, 42.0), st(300, 900, 205, 2, 40.0)],
            "n_los": 2.2, "n_nlos": 3.5, "shadow_sigma_db": 6.0,
            "n_prb": 50, "noise_dbm": -104.5, "freq_hz": 2.1e9, "seed": 7}


def test_load_environment(tmp_path):
    path = tmp_path / "e.env"
    path.write_text(json.dumps(env_doc()))
    env = load_environment(path)
    assert len(env.stations) == 2
    assert env.seed == 7
    assert env.stations[0].pci == 101


def test_load_environment_defaults(tmp_path):
    doc = env_doc()
    for key in ("n_los", "n_nlos", "shadow_sigma_db", "n_prb", "noise_dbm", "freq_hz", "seed"):
        del doc[key]
    path = tmp_path / "e.env"
    path.write_text(json.dumps(doc))
    env = load_environment(path)
    assert (env.n_los, env.n_nlos, env.shadow_sigma_db) == (2.2, 3.5, 6.0)
    assert (env.n_prb, env.noise_dbm, env.freq_hz, env.seed) == (50, -104.5, 2.1e9, 0)


def test_load_environment_bad_json_has_position(tmp_path):
    path = tmp_path / "e.env"
    path.write_text('{"stations": [,]}')
    with pytest.raises(ConfigError) as exc_info:
        load_environment(path)
    assert exc_info.value.line == 1
    assert exc_info.value.column is not None
    assert str(path) in str(exc_info.value)


def test_load_environment_missing_key_named(tmp_path):
    doc = env_doc()
    del doc["stations"][0]["eirp_dbm"]
    path = tmp_path / "e.env"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match=r"stations\[0\]\.eirp_dbm"):
        load_environment(path)


def test_load_environment_eirp_bounds(tmp_path):
    doc = env_doc()
    doc["stations"][0]["eirp_dbm"] = 70.0
    path = tmp_path / "e.env"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="eirp"):
        load_environment(path)


def plan_doc(levels=3):
    wps = []
    for k in range(levels):
        lat, lon = tangent_inverse(ANCHOR_LAT, ANCHOR_LON, 150.0 * k, 0.0)
        agl = 2.0 + 10.0 * k
        wps.append({"pos": {"lat_deg": lat, "lon_deg": lon,
                            "alt_m_amsl": 300.0 + agl, "alt_m_agl": agl},
                    "speed_mps": 5.0, "hover_s": 30.0})
    return {"waypoints": wps}


def test_load_flight_plan(tmp_path):
    path = tmp_path / "p.plan"
    path.write_text(json.dumps(plan_doc()))
    plan = load_flight_plan(path)
    assert len(plan.waypoints) == 3
    assert plan.waypoints[0].hover_s == 30.0


def test_load_flight_plan_ceiling(tmp_path):
    doc = plan_doc()
    doc["waypoints"][1]["pos"]["alt_m_agl"] = 130.0
    path = tmp_path / "p.plan"
    path.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="ceiling"):
        load_flight_plan(path)


def test_load_flight_plan_empty_rejected(tmp_path):
    path = tmp_path / "p.plan"
    path.write_text(json.dumps({"waypoints": []}))
    with pytest.raises(ConfigError, match="at least one"):
        load_flight_plan(path)


# --- simulated backend ---

def test_sim_backend_polls_position_at_poll_time():
    stations = [station_at(900, -450, pci=101, cell_id=1),
                station_at(-350, 120, pci=47, cell_id=3)]
    env = env_with(stations, seed=9)
    positions = iter([uav_at(0, 0, 2.0), uav_at(1200, 0, 102.0)])
    backend = SimModemBackend(env, lambda: next(positions))
    assert backend.descriptor == "sim"
    first = backend.poll()
    second = backend.poll()
    direct_second = radio_sample(env, uav_at(1200, 0, 102.0))
    assert second == direct_second
    assert first != second
