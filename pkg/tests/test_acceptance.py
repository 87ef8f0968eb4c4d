"""Acceptance gate: every headline requirement, one printed verdict per line.

Each check prints `[PASS]`/`[FAIL] <criterion> (<measured value>)` and then
asserts, so a full `pytest -v` run doubles as the acceptance report. The
three 60 s benchmark runs are module-scoped fixtures shared by the rate,
jitter, scaling, and latency criteria.
"""
from __future__ import annotations

import math
import random
import threading
import time

import numpy as np
import pytest

from beavr.bench import measure_run
from beavr.filters import ComplementaryFilter, MovingAverageFilter, slerp
from beavr.geometry import (
    HomogeneousTransform,
    KeypointFrame,
    Quaternion,
    compose_target,
    hand_basis,
    rotation_log,
    vr_to_robot,
)
from beavr.ik import IkSettings, IkTarget, check_collision, fingertip_targets_from_hand, solve_dls
from beavr.kinematics import JointState, chain_from_dict, load_chain
from beavr.netcore import (
    BULK_QUEUE,
    Endpoint,
    HandshakeToken,
    QueuePolicy,
    TopicFrame,
    decode_frame,
    encode_frame,
    register_publisher,
    subscribe,
)
from beavr.pipeline.config import config_1, config_2, config_3
from beavr.pipeline.hand_template import ScriptedHand
from beavr.pipeline.policy import ScriptedPolicy, think_act_loop
from beavr.pipeline.session import SessionHandle
from beavr.recorder import Dataset, FrameRecord, query_delta_timestamps

from conftest import random_rotation
from oracles import analytic_branch_error, brute_force_min_surface_distance
from test_geometry import random_frame, vr_to_robot_oracle
from test_kinematics import planar_tip, two_link_doc


def criterion(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[{'PASS' if ok else 'FAIL'}] {name}{suffix}", flush=True)
    assert ok, f"{name}{suffix}"


def _bench(make_config, label):
    config = make_config()
    print(
        f"[RUN ] {label}: 60 s benchmark, {len(config.robots)} robots @ {config.rate:g} Hz",
        flush=True,
    )
    return measure_run(config, duration_s=60.0)


@pytest.fixture(scope="module")
def bench1():
    return _bench(config_1, "config 1")


@pytest.fixture(scope="module")
def bench2():
    return _bench(config_2, "config 2")


@pytest.fixture(scope="module")
def bench3():
    return _bench(config_3, "config 3")


# -- timing criteria -----------------------------------------------------------------


def test_rate_fidelity_config1(bench1):
    for r in bench1.robots:
        criterion(
            f"rate fidelity (config 1): {r.robot_id} achieved_hz >= 99% of 30",
            r.achieved_hz >= 0.99 * 30.0,
            f"{r.achieved_hz:.4f} Hz",
        )
    criterion(
        "rate fidelity (config 1): runtime ~= 60 s",
        58.0 <= bench1.duration_s <= 63.0,
        f"{bench1.duration_s:.2f} s",
    )


def test_high_rate_fidelity_config2(bench2):
    for r in bench2.robots:
        criterion(
            f"high-rate fidelity (config 2): {r.robot_id} achieved_hz within 10% of 90",
            abs(r.achieved_hz - 90.0) <= 9.0,
            f"{r.achieved_hz:.4f} Hz",
        )
        criterion(
            f"high-rate fidelity (config 2): {r.robot_id} jitter < 2 ms",
            r.jitter_ms < 2.0,
            f"{r.jitter_ms:.4f} ms",
        )


def test_jitter_bound_all_configs(bench1, bench2, bench3):
    for label, report in (("config 1", bench1), ("config 2", bench2), ("config 3", bench3)):
        for r in report.robots:
            criterion(
                f"jitter bound ({label}): {r.robot_id} jitter_ms < 2.0",
                r.jitter_ms < 2.0,
                f"{r.jitter_ms:.4f} ms",
            )


def test_scaling_config3_vs_config1(bench1, bench3):
    hz1 = {r.robot_id: r.achieved_hz for r in bench1.robots}
    hz3 = {r.robot_id: r.achieved_hz for r in bench3.robots}
    for robot_id in hz1:
        rel = abs(hz3[robot_id] - hz1[robot_id]) / hz1[robot_id]
        criterion(
            f"scaling: {robot_id} rate differs < 1% between config 3 and config 1",
            rel < 0.01,
            f"{hz1[robot_id]:.4f} vs {hz3[robot_id]:.4f} Hz, delta {100 * rel:.3f}%",
        )
    criterion(
        "scaling: config 3 runs all four robot streams",
        len(bench3.robots) == 4,
        ", ".join(sorted(r.robot_id for r in bench3.robots)),
    )


def test_latency_bound(bench1, bench2):
    for label, report in (("30 Hz", bench1), ("90 Hz", bench2)):
        budget = 1000.0 / report.rate_hz + 10.0
        for r in report.robots:
            mean = r.latency_ms["mean"]
            criterion(
                f"latency bound ({label}): {r.robot_id} mean one-way <= {budget:.1f} ms",
                mean <= budget,
                f"{mean:.2f} ms",
            )


# -- geometry suite -------------------------------------------------------------------


def test_geometry_suite():
    start = time.perf_counter()

    rng = np.random.default_rng(101)
    basis_err = 0.0
    for _ in range(300):
        rot = hand_basis(random_frame(rng)).rotation
        basis_err = max(
            basis_err,
            float(np.abs(rot.T @ rot - np.eye(3)).max()),
            abs(float(np.linalg.det(rot)) - 1.0),
        )
    criterion(
        "geometry: Gram-Schmidt hand basis orthonormal to 1e-9",
        basis_err <= 1e-9,
        f"max residual {basis_err:.2e} over 300 frames",
    )

    norm_err = 0.0
    comp_err = 0.0
    for _ in range(1000):
        p = rng.uniform(-5, 5, 3)
        s = rng.uniform(0.5, 2.5)
        out = vr_to_robot(p, s)
        norm_err = max(norm_err, abs(float(np.linalg.norm(out)) - s * float(np.linalg.norm(p))))
        comp_err = max(comp_err, float(np.abs(out - vr_to_robot_oracle(p, s)).max()))
    criterion(
        "geometry: vr_to_robot scales norms exactly to 1e-12",
        norm_err <= 1e-12 and comp_err <= 1e-12,
        f"norm err {norm_err:.2e}, component err {comp_err:.2e} over 1000 inputs",
    )

    compose_err = 0.0
    for _ in range(1000):
        mats = []
        for _ in range(3):
            m = np.eye(4)
            m[:3, :3] = random_rotation(rng)
            m[:3, 3] = rng.uniform(-1, 1, 3)
            mats.append(m)
        ri, rv, ht = mats
        expected = ri @ np.linalg.inv(rv) @ ht @ rv
        got = compose_target(
            HomogeneousTransform(rotation=ri[:3, :3], translation=ri[:3, 3]),
            HomogeneousTransform(rotation=rv[:3, :3], translation=rv[:3, 3]),
            HomogeneousTransform(rotation=ht[:3, :3], translation=ht[:3, 3]),
        ).as_matrix()
        compose_err = max(compose_err, float(np.abs(got - expected).max()))
    criterion(
        "geometry: compose_target matches 4x4 matrix oracle to 1e-9 (1000 inputs)",
        compose_err <= 1e-9,
        f"max |diff| {compose_err:.2e}",
    )

    elapsed = time.perf_counter() - start
    criterion("geometry: suite runtime < 1 s", elapsed < 1.0, f"{elapsed:.3f} s")


# -- IK suite ---------------------------------------------------------------------------


def test_ik_suite():
    two_link = chain_from_dict(two_link_doc())
    tight = IkSettings(tolerance=1e-5, max_iterations=300)
    rng = np.random.default_rng(102)

    # Analytic-oracle agreement on planar targets away from singularities.
    seeds = (np.zeros(2), np.array([0.5, 1.0]), np.array([-0.5, -1.0]))
    worst = 0.0
    solved = 0
    while solved < 100:
        q = rng.uniform(-2.5, 2.5, 2)
        if abs(math.cos(q[1])) > 0.9:
            continue
        target = planar_tip(*q)
        result = None
        for seed in seeds:
            result = solve_dls(
                two_link, JointState(q=seed), [IkTarget(marker="tip", desired=target)], tight
            )
            if result.converged:
                break
        assert result is not None and result.converged, target
        worst = max(worst, analytic_branch_error(result.q.q, target[:2], 0.5, 0.3))
        solved += 1
    criterion(
        "ik: 2-link agrees with the analytic oracle to 1e-3 rad",
        worst <= 1e-3,
        f"worst branch error {worst:.2e} over 100 targets",
    )

    target = planar_tip(0.7, 0.9)
    first = solve_dls(
        two_link, two_link.neutral_state(), [IkTarget(marker="tip", desired=target)], tight
    )
    again = solve_dls(two_link, first.q, [IkTarget(marker="tip", desired=target)], tight)
    criterion(
        "ik: fixed point converges in <= 1 iteration",
        first.converged and again.converged and again.iterations <= 1,
        f"{again.iterations} iterations from the solved pose",
    )

    # Joint-limit audit over a full scripted episode (900 frames = 30 s @ 30 Hz).
    hand = load_chain("sim-hand16")
    lo, hi = hand.lower_limits(), hand.upper_limits()
    session_settings = IkSettings(max_iterations=16)
    scripted = ScriptedHand(seed=11)
    state = hand.neutral_state()
    violations = 0
    for i in range(900):
        frame = scripted.frame(i)
        rel = KeypointFrame(
            timestamp=frame.timestamp, hand=frame.hand, points=frame.points - frame.points[0]
        )
        state = solve_dls(hand, state, fingertip_targets_from_hand(rel), session_settings).q
        if np.any(state.q < lo - 1e-12) or np.any(state.q > hi + 1e-12):
            violations += 1
    criterion(
        "ik: zero joint-limit violations over a 900-frame scripted episode",
        violations == 0,
        f"{violations} violations",
    )

    # Warm starts must beat cold starts over a tracking trajectory.
    steps = 120
    warm_iters, cold_iters = [], []
    seed_state = two_link.neutral_state()
    for i in range(steps):
        t = i / steps * 2 * math.pi
        target = planar_tip(0.8 + 0.3 * math.sin(t), 0.9 + 0.2 * math.cos(t))
        warm = solve_dls(two_link, seed_state, [IkTarget(marker="tip", desired=target)], tight)
        cold = solve_dls(
            two_link, two_link.neutral_state(), [IkTarget(marker="tip", desired=target)], tight
        )
        assert warm.converged and cold.converged
        warm_iters.append(warm.iterations)
        cold_iters.append(cold.iterations)
        seed_state = warm.q
    criterion(
        f"ik: warm-start mean iterations beat cold over {steps} steps",
        float(np.mean(warm_iters)) < float(np.mean(cold_iters)),
        f"warm {np.mean(warm_iters):.2f} vs cold {np.mean(cold_iters):.2f}",
    )

    # Collision gate vs the dense-sampling oracle on 100 random poses.
    margin = 0.005
    disagreements = []
    for _ in range(100):
        q = rng.uniform(lo, hi)
        fast = check_collision(hand, JointState(q=q), margin).collision_free
        oracle = brute_force_min_surface_distance(hand, q)
        if fast != (oracle >= margin):
            disagreements.append(abs(oracle - margin))
    criterion(
        "ik: collision check agrees with brute-force oracle on 100 poses "
        "(any disagreement within 2 mm of the margin)",
        all(d < 0.002 for d in disagreements),
        f"{len(disagreements)} near-margin disagreements"
        + (f", worst offset {max(disagreements) * 1000:.2f} mm" if disagreements else ""),
    )


# -- filter suite ------------------------------------------------------------------------


def test_filter_suite():
    rng = np.random.default_rng(103)

    worst = 0.0
    checked = 0
    while checked < 200:
        q0 = Quaternion.from_matrix(random_rotation(rng))
        q1 = Quaternion.from_matrix(random_rotation(rng))
        total = float(np.linalg.norm(rotation_log(q1.to_matrix() @ q0.to_matrix().T)))
        if total > math.pi - 0.05:
            continue
        t = rng.uniform(0.0, 1.0)
        mid = slerp(q0, q1, t)
        part = float(np.linalg.norm(rotation_log(mid.to_matrix() @ q0.to_matrix().T)))
        worst = max(worst, abs(part - t * total))
        checked += 1
    criterion(
        "filters: slerp geodesic proportionality to 1e-9",
        worst <= 1e-9,
        f"worst |angle(t) - t*angle| {worst:.2e} over 200 pairs",
    )

    worst = 0.0
    for window in (1, 2, 5, 8):
        f = MovingAverageFilter(window=window)
        stream = rng.normal(size=(60, 24, 3))
        for i, sample in enumerate(stream):
            got = f.step(sample)
            lo_i = max(0, i - window + 1)
            worst = max(worst, float(np.abs(got - stream[lo_i : i + 1].mean(axis=0)).max()))
    criterion(
        "filters: moving average equals the brute-force mean",
        worst <= 1e-12,
        f"max |diff| {worst:.2e} across windows 1/2/5/8",
    )

    alpha = 0.35
    p0 = np.array([1.0, -2.0, 0.5])
    target = np.array([0.2, 0.3, -0.1])
    f = ComplementaryFilter(alpha=alpha)
    f.reset(p0, Quaternion.identity())
    worst = 0.0
    for n in range(1, 30):
        got, _ = f.step(target, Quaternion.identity())
        closed = target + (1.0 - alpha) ** n * (p0 - target)
        worst = max(worst, float(np.abs(got - closed).max()))
    angle0 = 1.2
    f2 = ComplementaryFilter(alpha=0.25)
    f2.reset(
        np.zeros(3),
        Quaternion(math.cos(angle0 / 2), 0.0, 0.0, math.sin(angle0 / 2)).canonical(),
    )
    for n in range(1, 25):
        _, got_q = f2.step(np.zeros(3), Quaternion.identity())
        angle = float(np.linalg.norm(rotation_log(got_q.to_matrix())))
        worst = max(worst, abs(angle - angle0 * 0.75**n))
    criterion(
        "filters: complementary filter matches the geometric closed form to 1e-9",
        worst <= 1e-9,
        f"worst deviation {worst:.2e}",
    )


# -- netcore suite -------------------------------------------------------------------------


def test_netcore_suite(free_ports):
    rng = random.Random(104)
    ok = True
    for _ in range(10_000):
        topic = "".join(rng.choices("abcdefghijklmnop/_-0123456789", k=rng.randint(1, 40)))
        frame = TopicFrame(
            topic=topic, payload=rng.randbytes(rng.randint(0, 256)), capture_ts=rng.randint(0, 2**62)
        )
        if decode_frame(encode_frame(frame)) != frame:
            ok = False
            break
    criterion("netcore: frame codec round-trips 10^4 randomized frames", ok)

    # Slow joiner: plain frames may be missed; critical frames never are.
    endpoint = Endpoint("127.0.0.1", free_ports())
    pub = register_publisher(endpoint, BULK_QUEUE)
    for i in range(5):
        pub.publish("early", bytes([i]))
    deadline = time.monotonic() + 5.0
    while len(pub._queue) and time.monotonic() < deadline:
        time.sleep(0.01)

    box = {}

    def late_join():
        time.sleep(0.4)
        stream = subscribe(endpoint, "")
        try:
            frames = [stream.get(timeout=10.0)]
            time.sleep(0.2)
            frames.extend(stream.drain())
            box["frames"] = frames
        finally:
            stream.close()

    joiner = threading.Thread(target=late_join)
    joiner.start()
    report = pub.publish_critical(
        "critical", b"must-arrive", HandshakeToken(message_id=9, required_acks=1, timeout_ms=10000)
    )
    joiner.join(timeout=15.0)
    topics = [f.topic for f in box.get("frames", [])]
    criterion(
        "netcore: slow joiner misses plain frames but publish_critical always lands",
        report.acks >= 1 and topics == ["critical"],
        f"{report.acks} ack(s), received topics {topics}",
    )

    # High-water mark bounds memory while the sink is stalled.
    endpoint2 = Endpoint("127.0.0.1", free_ports())
    pub2 = register_publisher(endpoint2, QueuePolicy(high_water_mark=2))
    stream = subscribe(endpoint2, "")
    assert stream.wait_connected(5.0)
    deadline = time.monotonic() + 5.0
    while pub2.sink_count() < 1 and time.monotonic() < deadline:
        time.sleep(0.01)
    # Park the sender at the gate on a marker frame so the flood below is
    # atomic with respect to the send loop (nothing else gets popped early).
    pub2._send_gate.clear()
    try:
        pub2.publish("marker", b"\xff")
        deadline = time.monotonic() + 5.0
        while len(pub2._queue) and time.monotonic() < deadline:
            time.sleep(0.01)
        statuses = [pub2.publish("t", bytes([i])) for i in range(100)]
    finally:
        pub2._send_gate.set()
    marker = stream.get(timeout=5.0)
    survivors = [stream.get(timeout=5.0).payload[0] for _ in range(2)]
    timed_out = False
    try:
        stream.get(timeout=0.2)
    except TimeoutError:
        timed_out = True
    stream.close()
    criterion(
        "netcore: HWM keeps the queue bounded under a stalled sink (drop-oldest)",
        max(s.queued for s in statuses) <= 2
        and statuses[-1].dropped_total == 98
        and survivors == [98, 99]
        and timed_out,
        f"max queued {max(s.queued for s in statuses)}, dropped {statuses[-1].dropped_total}, "
        f"survivors {survivors}",
    )

    # Singleton registry under concurrent registration.
    endpoint3 = Endpoint("127.0.0.1", free_ports())
    results = []
    barrier = threading.Barrier(8)

    def worker():
        barrier.wait()
        p = register_publisher(endpoint3, BULK_QUEUE)
        for k in range(50):
            p.publish("stress", bytes([k]))
        results.append(id(p))

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    criterion(
        "netcore: registry stays a singleton under 8-thread registration stress",
        len(set(results)) == 1,
        f"{len(results)} registrations, {len(set(results))} distinct publisher(s)",
    )


# -- recorder suite ------------------------------------------------------------------------


def test_recorder_suite(tmp_path):
    rng = np.random.default_rng(105)

    # Bit-exact write/read round trip in both episode formats.
    exact = True
    for fmt in ("parquet", "jsonl"):
        ds = Dataset(tmp_path / fmt, fps=30, state_dim=5, action_dim=4, fmt=fmt)
        writer = ds.new_episode(task="demo")
        rows = []
        for i in range(40):
            rec = FrameRecord(
                state=rng.normal(size=5), action=rng.normal(size=4), timestamp=i / 30.0
            )
            rows.append(rec)
            writer.append_frame(rec)
        writer.finalize()
        for got, sent in zip(ds.read_episode(0), rows):
            if not (
                np.array_equal(got.state, sent.state)
                and np.array_equal(got.action, sent.action)
                and got.timestamp == sent.timestamp
            ):
                exact = False
    criterion("recorder: write/read round trip is bit-exact (parquet and jsonl)", exact)

    # Delta-timestamp queries vs a linear-scan oracle, 1000 random queries.
    ds = Dataset(tmp_path / "query", fps=30, state_dim=2, action_dim=2)
    t0 = 0.0
    for n in (17, 23, 11):
        writer = ds.new_episode()
        for i in range(n):
            writer.append_frame(
                FrameRecord(state=np.zeros(2), action=np.zeros(2), timestamp=t0 + i / ds.fps)
            )
        writer.finalize()
        t0 += 10.0
    episodes = {m.episode_index: ds.read_episode(m.episode_index) for m in ds.episodes()}
    by_index = {r.index: r for records in episodes.values() for r in records}
    tolerance = 0.5 / ds.fps
    mismatches = 0
    for _ in range(1000):
        anchor = by_index[int(rng.integers(0, 51))]
        delta = float(rng.uniform(-1.5, 1.5))
        (record, pad), = query_delta_timestamps(ds, anchor.index, [delta])
        want = anchor.timestamp + delta
        best = min(episodes[anchor.episode_index], key=lambda r: abs(r.timestamp - want))
        if record.index != best.index or pad != (abs(best.timestamp - want) > tolerance):
            mismatches += 1
    criterion(
        "recorder: delta-timestamp query matches the linear-scan oracle on 1000 queries",
        mismatches == 0,
        f"{mismatches} mismatches",
    )

    # Crash injection: an unfinalized episode and stray temp files must not
    # poison the dataset.
    ds2 = Dataset(tmp_path / "crash", fps=30, state_dim=2, action_dim=2)
    writer = ds2.new_episode()
    for i in range(9):
        writer.append_frame(FrameRecord(state=np.zeros(2), action=np.zeros(2), timestamp=i / 30.0))
    writer.finalize()
    half = ds2.new_episode()
    half.append_frame(FrameRecord(state=np.zeros(2), action=np.zeros(2), timestamp=0.0))
    (ds2.root / "data" / "episode_000001.parquet.tmp").write_bytes(b"\x00garbage")
    reopened = Dataset(ds2.root, create=False)
    recovered = len(reopened.all_records())
    writer = reopened.new_episode()
    writer.append_frame(FrameRecord(state=np.zeros(2), action=np.zeros(2), timestamp=99.0))
    appended = writer.finalize().length
    criterion(
        "recorder: crash injection leaves the dataset readable and writable",
        [m.episode_index for m in Dataset(ds2.root, create=False).episodes()] == [0, 1]
        and recovered == 9
        and appended == 1,
        f"recovered {recovered} frames, appended episode of {appended}",
    )


def test_recorder_fault_isolation():
    handle = SessionHandle(config_1())
    restarts = 0
    try:
        assert handle.wait_for_states(timeout_s=30.0)
        time.sleep(1.0)
        handle.kill_detector()
        time.sleep(1.0)
        alive = handle.operators_alive() and handle.interfaces_alive()
        n0 = len(handle.samples("arm_right"))
        time.sleep(1.0)
        flowing = len(handle.samples("arm_right")) - n0
        criterion(
            "fault isolation: killing the detector leaves operator and interface alive",
            alive and not handle.detector_alive(),
            f"operators+interfaces alive, {flowing} states flowed in the next second",
        )
        criterion(
            "fault isolation: robot_state keeps streaming without the detector",
            flowing > 15,
            f"{flowing} states in 1 s",
        )
        q_before = handle.latest_state("arm_right").q
        handle.restart_detector()
        time.sleep(2.5)
        q_after = handle.latest_state("arm_right").q
        criterion(
            "fault isolation: session survives a detector restart and motion resumes",
            handle.detector_alive() and not np.array_equal(q_before, q_after),
        )
    finally:
        restarts = handle.stop().detector_restarts
    assert restarts == 1


# -- think-act suite -------------------------------------------------------------------------


def test_think_act_suite():
    config = config_1()
    arm = load_chain("sim-xarm7")
    # Interfaces only: the loop below owns the command streams that the
    # operator processes would otherwise publish.
    handle = SessionHandle(config, start_detector=False, start_operators=False)
    try:
        assert handle.wait_for_states(timeout_s=30.0)
        q_start = handle.latest_state("arm_right").q

        report = think_act_loop(
            ScriptedPolicy(arm, chunk_size=10, delay_s=0.0, rate_hz=30.0),
            config,
            robot_id="arm_right",
            duration_s=10.0,
            rate_hz=30.0,
        )
        criterion(
            "think-act: 0 ms inference delay runs with zero underruns",
            report.underruns == 0 and not report.policy_failed,
            f"{report.underruns} underruns over {report.ticks} ticks",
        )
        criterion(
            "think-act: cadence >= 99% of 30 Hz (0 ms delay)",
            report.achieved_hz >= 0.99 * 30.0,
            f"{report.achieved_hz:.3f} Hz",
        )
        time.sleep(0.3)
        q_moved = handle.latest_state("arm_right").q
        criterion(
            "think-act: the act side drives a live interface",
            not np.array_equal(q_start, q_moved),
        )

        report = think_act_loop(
            ScriptedPolicy(arm, chunk_size=10, delay_s=0.1, rate_hz=30.0),
            config,
            robot_id="arm_right",
            duration_s=10.0,
            rate_hz=30.0,
        )
        criterion(
            "think-act: 100 ms delay with chunk 10 @ 30 Hz keeps zero underruns",
            report.underruns == 0 and not report.policy_failed,
            f"{report.underruns} underruns, {report.chunks} chunks",
        )
        criterion(
            "think-act: cadence >= 99% of 30 Hz (100 ms delay)",
            report.achieved_hz >= 0.99 * 30.0,
            f"{report.achieved_hz:.3f} Hz",
        )

        report = think_act_loop(
            ScriptedPolicy(arm, chunk_size=5, delay_s=0.5, rate_hz=30.0),
            config,
            robot_id="arm_right",
            duration_s=10.0,
            rate_hz=30.0,
        )
        criterion(
            "think-act: 500 ms delay with chunk 5 @ 30 Hz starves the queue",
            report.underruns > 0 and not report.policy_failed,
            f"{report.underruns} underruns over {report.ticks} ticks",
        )
        criterion(
            "think-act: cadence >= 99% of 30 Hz even while starved",
            report.achieved_hz >= 0.99 * 30.0,
            f"{report.achieved_hz:.3f} Hz",
        )
    finally:
        handle.stop()
