"""Dataset round-trips, schema enforcement, and the delta-timestamp oracle."""
from __future__ import annotations

import json

import numpy as np
import pytest

from beavr.recorder import (
    ACTION_COL,
    CODEBASE_VERSION,
    IMAGE_SHAPE,
    STATE_COL,
    Dataset,
    EmptyEpisodeError,
    FrameRecord,
    SchemaError,
    query_delta_timestamps,
)


def make_dataset(tmp_path, fmt="parquet", image_column=False, fps=30):
    return Dataset(
        tmp_path / "ds",
        fps=fps,
        state_dim=3,
        action_dim=2,
        fmt=fmt,
        robots=("arm_right",),
        image_column=image_column,
    )


def write_episode(ds, n, task="pick", task_index=0, t0=0.0):
    writer = ds.new_episode(task=task, task_index=task_index)
    rng = np.random.default_rng(1000 + n)
    rows = []
    for i in range(n):
        record = FrameRecord(
            state=rng.normal(size=3),
            action=rng.normal(size=2),
            timestamp=t0 + i / ds.fps,
        )
        rows.append(record)
        writer.append_frame(record)
    meta = writer.finalize()
    return meta, rows


# -- lifecycle -------------------------------------------------------------------


def test_create_writes_info(tmp_path):
    ds = make_dataset(tmp_path)
    info = json.loads((ds.root / "meta" / "info.json").read_text())
    assert info["codebase_version"] == CODEBASE_VERSION
    assert info["fps"] == 30
    assert STATE_COL in info["features"]
    assert ACTION_COL in info["features"]
    assert info["features"][STATE_COL]["shape"] == [3]


def test_round_trip_is_exact(tmp_path):
    for fmt in ("parquet", "jsonl"):
        ds = make_dataset(tmp_path / fmt, fmt=fmt)
        meta, rows = write_episode(ds, 25)
        back = ds.read_episode(meta.episode_index)
        assert len(back) == 25
        for got, sent in zip(back, rows):
            assert np.array_equal(got.state, sent.state)  # bit-exact
            assert np.array_equal(got.action, sent.action)
            assert got.timestamp == sent.timestamp
        assert [r.frame_index for r in back] == list(range(25))
        assert all(r.episode_index == meta.episode_index for r in back)


def test_global_index_continues_across_episodes(tmp_path):
    ds = make_dataset(tmp_path)
    write_episode(ds, 10)
    write_episode(ds, 15, t0=100.0)
    records = ds.all_records()
    assert [r.index for r in records] == list(range(25))
    assert [m.episode_index for m in ds.episodes()] == [0, 1]
    assert [m.length for m in ds.episodes()] == [10, 15]


def test_reopen_existing_dataset(tmp_path):
    ds = make_dataset(tmp_path)
    write_episode(ds, 8)
    again = Dataset(ds.root, create=False)
    assert again.fps == 30
    assert len(again.read_episode(0)) == 8
    meta, _ = write_episode(again, 4, t0=50.0)
    assert meta.episode_index == 1


def test_open_missing_dataset_fails(tmp_path):
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path / "absent", create=False)


# -- schema enforcement ------------------------------------------------------------


def test_wrong_dims_name_the_column(tmp_path):
    ds = make_dataset(tmp_path)
    writer = ds.new_episode()
    with pytest.raises(SchemaError, match=STATE_COL):
        writer.append_frame(FrameRecord(state=np.zeros(5), action=np.zeros(2), timestamp=0.0))
    with pytest.raises(SchemaError, match=ACTION_COL):
        writer.append_frame(FrameRecord(state=np.zeros(3), action=np.zeros(9), timestamp=0.0))


def test_timestamps_must_not_decrease(tmp_path):
    ds = make_dataset(tmp_path)
    writer = ds.new_episode()
    writer.append_frame(FrameRecord(state=np.zeros(3), action=np.zeros(2), timestamp=1.0))
    with pytest.raises(SchemaError):
        writer.append_frame(FrameRecord(state=np.zeros(3), action=np.zeros(2), timestamp=0.5))


def test_empty_episode_rejected(tmp_path):
    ds = make_dataset(tmp_path)
    writer = ds.new_episode()
    with pytest.raises(EmptyEpisodeError):
        writer.finalize()


def test_image_column_synthetic_pattern(tmp_path):
    ds = make_dataset(tmp_path, image_column=True)
    meta, _ = write_episode(ds, 3)
    back = ds.read_episode(meta.episode_index)
    for r in back:
        assert r.image.shape == IMAGE_SHAPE
        expected = ((np.arange(64) * 3 + r.frame_index * 7) % 256).astype(np.uint8)
        assert np.array_equal(r.image.reshape(-1), expected)


# -- crash injection ---------------------------------------------------------------


def test_abandoned_episode_leaves_dataset_readable(tmp_path):
    ds = make_dataset(tmp_path)
    write_episode(ds, 12)

    # Crash mid-episode: frames appended but never finalized, plus a stray
    # half-written temp file of the kind an interrupted rename leaves behind.
    writer = ds.new_episode()
    writer.append_frame(FrameRecord(state=np.zeros(3), action=np.zeros(2), timestamp=0.0))
    (ds.root / "data" / "episode_000001.parquet.tmp").write_bytes(b"\x00garbage")

    reopened = Dataset(ds.root, create=False)
    assert [m.episode_index for m in reopened.episodes()] == [0]
    assert len(reopened.all_records()) == 12
    meta, _ = write_episode(reopened, 5, t0=10.0)
    assert len(reopened.read_episode(meta.episode_index)) == 5


# -- delta-timestamp queries ----------------------------------------------------------


def test_delta_query_exact_and_padded(tmp_path):
    ds = make_dataset(tmp_path, fps=10)
    write_episode(ds, 10)  # timestamps 0.0 .. 0.9
    # Anchor at frame 5 (t=0.5): -0.2 and +0.3 are exact grid hits.
    out = query_delta_timestamps(ds, 5, [-0.2, 0.0, 0.3])
    assert [(r.frame_index, pad) for r, pad in out] == [(3, False), (5, False), (8, False)]
    # Past the end: clamps to the boundary frame and marks padding.
    out = query_delta_timestamps(ds, 5, [2.0])
    assert [(r.frame_index, pad) for r, pad in out] == [(9, True)]
    out = query_delta_timestamps(ds, 5, [-2.0])
    assert [(r.frame_index, pad) for r, pad in out] == [(0, True)]


def test_delta_query_never_crosses_episodes(tmp_path):
    ds = make_dataset(tmp_path, fps=10)
    write_episode(ds, 5)              # global 0-4, t 0.0-0.4
    write_episode(ds, 5, t0=0.5)      # global 5-9, t 0.5-0.9 (contiguous times!)
    out = query_delta_timestamps(ds, 4, [0.1, 1.0])
    for record, pad in out:
        assert record.episode_index == 0  # stays home even though ep1 is closer
        assert pad is True


def test_delta_query_unknown_index(tmp_path):
    ds = make_dataset(tmp_path)
    write_episode(ds, 3)
    with pytest.raises(KeyError):
        query_delta_timestamps(ds, 99, [0.0])


def test_delta_query_matches_linear_scan_oracle(tmp_path):
    ds = make_dataset(tmp_path, fps=30)
    lengths = [17, 23, 11]
    t0 = 0.0
    for n in lengths:
        write_episode(ds, n, t0=t0)
        t0 += 10.0

    episodes = {m.episode_index: ds.read_episode(m.episode_index) for m in ds.episodes()}
    by_index = {r.index: r for records in episodes.values() for r in records}
    tolerance = 0.5 / ds.fps
    rng = np.random.default_rng(60)

    for _ in range(1000):
        anchor = by_index[int(rng.integers(0, sum(lengths)))]
        delta = float(rng.uniform(-1.5, 1.5))
        (record, pad), = query_delta_timestamps(ds, anchor.index, [delta])
        # Oracle: linear scan within the anchor's episode only.
        want = anchor.timestamp + delta
        candidates = episodes[anchor.episode_index]
        best = min(candidates, key=lambda r: abs(r.timestamp - want))
        assert record.index == best.index
        assert pad == (abs(best.timestamp - want) > tolerance)
