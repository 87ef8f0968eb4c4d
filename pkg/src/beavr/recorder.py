"""Episode dataset recorder: Parquet (or JSONL) episodes + JSON metadata.

Layout:
    <root>/meta/info.json            dataset schema, fps, robot layout, totals
    <root>/meta/episodes.jsonl       one EpisodeMeta per line
    <root>/data/episode_000000.parquet|jsonl

Column names are exactly: observation.state, action, timestamp, frame_index,
episode_index, index, task_index (plus optional observation.images.front).
All metadata updates are write-temp-then-rename so a crash mid-finalize
leaves the previous dataset state readable.
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CODEBASE_VERSION = "v2.0"
STATE_COL = "observation.state"
ACTION_COL = "action"
IMAGE_COL = "observation.images.front"
REQUIRED_COLUMNS = (STATE_COL, ACTION_COL, "timestamp", "frame_index",
                    "episode_index", "index", "task_index")
IMAGE_SHAPE = (8, 8)


class SchemaError(ValueError):
    """Record does not match the dataset schema; message names the column."""


class EmptyEpisodeError(ValueError):
    """finalize_episode called with zero frames appended."""


@dataclass(frozen=True)
class FrameRecord:
    """One control tick: observed joint vector, commanded joint vector, indices.

    Negative indices mean "assign on append".
    """

    state: np.ndarray
    action: np.ndarray
    timestamp: float
    frame_index: int = -1
    episode_index: int = -1
    index: int = -1
    task_index: int = 0
    image: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "action", np.asarray(self.action, dtype=np.float64).reshape(-1))
        if self.image is not None:
            img = np.asarray(self.image, dtype=np.uint8)
            if img.shape != IMAGE_SHAPE:
                raise SchemaError(f"{IMAGE_COL}: expected shape {IMAGE_SHAPE}, got {img.shape}")
            object.__setattr__(self, "image", img)


@dataclass(frozen=True)
class EpisodeMeta:
    episode_index: int
    length: int
    fps: float
    task: str = ""

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("episode length must be >= 1")
        if self.fps <= 0:
            raise ValueError("fps must be positive")


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _synthetic_image(frame_index: int) -> np.ndarray:
    """Deterministic 8x8 grayscale placeholder keyed by frame index."""
    base = np.arange(64, dtype=np.uint16).reshape(IMAGE_SHAPE)
    return ((base * 3 + frame_index * 7) % 256).astype(np.uint8)


class Dataset:
    """Dataset root handle: owns global indices and metadata files.

    One writer per episode; interleaved episode writers share the global
    frame index under a lock. Readers may open concurrently with no writer.
    """

    def __init__(
        self,
        root: str | Path,
        fps: float = 30.0,
        state_dim: int | None = None,
        action_dim: int | None = None,
        fmt: str = "parquet",
        robots: list[dict] | None = None,
        image_column: bool = False,
        create: bool = True,
    ):
        self.root = Path(root)
        self._lock = threading.Lock()
        info_path = self.root / "meta" / "info.json"
        if info_path.exists():
            info = json.loads(info_path.read_text())
            self.fps = float(info["fps"])
            self.fmt = info["format"]
            self.state_dim = int(info["features"][STATE_COL]["shape"][0])
            self.action_dim = int(info["features"][ACTION_COL]["shape"][0])
            self.image_column = IMAGE_COL in info["features"]
            self.robots = info.get("robots", [])
            self._total_episodes = int(info["total_episodes"])
            self._total_frames = int(info["total_frames"])
        else:
            if not create:
                raise FileNotFoundError(f"no dataset at {self.root}")
            if fmt not in ("parquet", "jsonl"):
                raise ValueError(f"unknown episode format {fmt!r}")
            if state_dim is None or action_dim is None:
                raise ValueError("state_dim and action_dim are required for a new dataset")
            self.fps = float(fps)
            self.fmt = fmt
            self.state_dim = int(state_dim)
            self.action_dim = int(action_dim)
            self.image_column = image_column
            self.robots = robots or []
            self._total_episodes = 0
            self._total_frames = 0
            (self.root / "meta").mkdir(parents=True, exist_ok=True)
            (self.root / "data").mkdir(parents=True, exist_ok=True)
            self._write_info()
            _atomic_write_text(self.root / "meta" / "episodes.jsonl", "")
        self._next_episode = self._total_episodes
        self._next_index = self._total_frames

    # -- metadata ---------------------------------------------------------

    def _features(self) -> dict:
        features = {
            STATE_COL: {"dtype": "float64", "shape": [self.state_dim]},
            ACTION_COL: {"dtype": "float64", "shape": [self.action_dim]},
            "timestamp": {"dtype": "float64", "shape": [1]},
            "frame_index": {"dtype": "int64", "shape": [1]},
            "episode_index": {"dtype": "int64", "shape": [1]},
            "index": {"dtype": "int64", "shape": [1]},
            "task_index": {"dtype": "int64", "shape": [1]},
        }
        if self.image_column:
            features[IMAGE_COL] = {"dtype": "uint8", "shape": list(IMAGE_SHAPE)}
        return features

    def _write_info(self):
        info = {
            "codebase_version": CODEBASE_VERSION,
            "fps": self.fps,
            "format": self.fmt,
            "robots": self.robots,
            "features": self._features(),
            "total_episodes": self._total_episodes,
            "total_frames": self._total_frames,
        }
        _atomic_write_text(self.root / "meta" / "info.json", json.dumps(info, indent=2) + "\n")

    def episodes(self) -> list[EpisodeMeta]:
        path = self.root / "meta" / "episodes.jsonl"
        metas = []
        if path.exists():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                doc = json.loads(line)
                metas.append(
                    EpisodeMeta(
                        episode_index=doc["episode_index"],
                        length=doc["length"],
                        fps=doc["fps"],
                        task=doc.get("task", ""),
                    )
                )
        return metas

    # -- writing ----------------------------------------------------------

    def new_episode(self, task: str = "", task_index: int = 0) -> "EpisodeWriter":
        with self._lock:
            episode_index = self._next_episode
            self._next_episode += 1
        return EpisodeWriter(self, episode_index, task, task_index)

    def _claim_global_index(self) -> int:
        with self._lock:
            idx = self._next_index
            self._next_index += 1
            return idx

    def _episode_path(self, episode_index: int) -> Path:
        return self.root / "data" / f"episode_{episode_index:06d}.{self.fmt}"

    def _commit_episode(self, meta: EpisodeMeta):
        """Append the episode to the dataset-level metadata, atomically."""
        with self._lock:
            episodes_path = self.root / "meta" / "episodes.jsonl"
            existing = episodes_path.read_text() if episodes_path.exists() else ""
            line = json.dumps(
                {
                    "episode_index": meta.episode_index,
                    "length": meta.length,
                    "fps": meta.fps,
                    "task": meta.task,
                }
            )
            _atomic_write_text(episodes_path, existing + line + "\n")
            self._total_episodes += 1
            self._total_frames += meta.length
            self._write_info()

    # -- reading ----------------------------------------------------------

    def read_episode(self, episode_index: int) -> list[FrameRecord]:
        path = self._episode_path(episode_index)
        if not path.exists():
            raise FileNotFoundError(f"no episode file {path}")
        if self.fmt == "parquet":
            return _read_parquet(path, self.image_column)
        return _read_jsonl(path, self.image_column)

    def all_records(self) -> list[FrameRecord]:
        records = []
        for meta in self.episodes():
            records.extend(self.read_episode(meta.episode_index))
        return records


class EpisodeWriter:
    """Buffers one episode's frames, then flushes them in a single atomic write."""

    def __init__(self, dataset: Dataset, episode_index: int, task: str, task_index: int):
        self._dataset = dataset
        self.episode_index = episode_index
        self.task = task
        self.task_index = task_index
        self._records: list[FrameRecord] = []
        self._finalized = False

    def append_frame(self, record: FrameRecord):
        if self._finalized:
            raise RuntimeError("episode already finalized")
        ds = self._dataset
        if record.state.size != ds.state_dim:
            raise SchemaError(
                f"{STATE_COL}: expected dim {ds.state_dim}, got {record.state.size}"
            )
        if record.action.size != ds.action_dim:
            raise SchemaError(
                f"{ACTION_COL}: expected dim {ds.action_dim}, got {record.action.size}"
            )
        if self._records and record.timestamp < self._records[-1].timestamp - 1e-12:
            raise SchemaError("timestamp: must be non-decreasing within an episode")
        frame_index = record.frame_index if record.frame_index >= 0 else len(self._records)
        index = record.index if record.index >= 0 else ds._claim_global_index()
        image = record.image
        if ds.image_column and image is None:
            image = _synthetic_image(frame_index)
        self._records.append(
            FrameRecord(
                state=record.state,
                action=record.action,
                timestamp=record.timestamp,
                frame_index=frame_index,
                episode_index=self.episode_index,
                index=index,
                task_index=record.task_index if record.task_index >= 0 else self.task_index,
                image=image if ds.image_column else None,
            )
        )

    def __len__(self) -> int:
        return len(self._records)

    def finalize(self) -> EpisodeMeta:
        if self._finalized:
            raise RuntimeError("episode already finalized")
        if not self._records:
            raise EmptyEpisodeError("episode has zero frames")
        ds = self._dataset
        path = ds._episode_path(self.episode_index)
        tmp = path.with_suffix(path.suffix + ".tmp")
        if ds.fmt == "parquet":
            _write_parquet(tmp, self._records, ds.image_column)
        else:
            _write_jsonl(tmp, self._records, ds.image_column)
        os.replace(tmp, path)
        meta = EpisodeMeta(
            episode_index=self.episode_index,
            length=len(self._records),
            fps=ds.fps,
            task=self.task,
        )
        ds._commit_episode(meta)
        self._finalized = True
        return meta


# -- episode file codecs ----------------------------------------------------


def _write_parquet(path: Path, records: list[FrameRecord], image_column: bool):
    import pyarrow as pa
    import pyarrow.parquet as pq

    columns = {
        STATE_COL: pa.array([r.state.tolist() for r in records], type=pa.list_(pa.float64())),
        ACTION_COL: pa.array([r.action.tolist() for r in records], type=pa.list_(pa.float64())),
        "timestamp": pa.array([r.timestamp for r in records], type=pa.float64()),
        "frame_index": pa.array([r.frame_index for r in records], type=pa.int64()),
        "episode_index": pa.array([r.episode_index for r in records], type=pa.int64()),
        "index": pa.array([r.index for r in records], type=pa.int64()),
        "task_index": pa.array([r.task_index for r in records], type=pa.int64()),
    }
    if image_column:
        columns[IMAGE_COL] = pa.array(
            [r.image.reshape(-1).tolist() for r in records], type=pa.list_(pa.uint8())
        )
    pq.write_table(pa.table(columns), path)


def _read_parquet(path: Path, image_column: bool) -> list[FrameRecord]:
    import pyarrow.parquet as pq

    table = pq.read_table(path)
    cols = {name: table.column(name).to_pylist() for name in table.column_names}
    for required in REQUIRED_COLUMNS:
        if required not in cols:
            raise SchemaError(f"{required}: missing from {path.name}")
    n = table.num_rows
    return [
        FrameRecord(
            state=np.array(cols[STATE_COL][i]),
            action=np.array(cols[ACTION_COL][i]),
            timestamp=cols["timestamp"][i],
            frame_index=cols["frame_index"][i],
            episode_index=cols["episode_index"][i],
            index=cols["index"][i],
            task_index=cols["task_index"][i],
            image=(
                np.array(cols[IMAGE_COL][i], dtype=np.uint8).reshape(IMAGE_SHAPE)
                if image_column and IMAGE_COL in cols
                else None
            ),
        )
        for i in range(n)
    ]


def _write_jsonl(path: Path, records: list[FrameRecord], image_column: bool):
    lines = []
    for r in records:
        doc = {
            STATE_COL: r.state.tolist(),
            ACTION_COL: r.action.tolist(),
            "timestamp": r.timestamp,
            "frame_index": r.frame_index,
            "episode_index": r.episode_index,
            "index": r.index,
            "task_index": r.task_index,
        }
        if image_column:
            doc[IMAGE_COL] = r.image.reshape(-1).tolist()
        lines.append(json.dumps(doc))
    path.write_text("\n".join(lines) + "\n")


def _read_jsonl(path: Path, image_column: bool) -> list[FrameRecord]:
    records = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        for required in REQUIRED_COLUMNS:
            if required not in doc:
                raise SchemaError(f"{required}: missing from {path.name}")
        records.append(
            FrameRecord(
                state=np.array(doc[STATE_COL]),
                action=np.array(doc[ACTION_COL]),
                timestamp=doc["timestamp"],
                frame_index=doc["frame_index"],
                episode_index=doc["episode_index"],
                index=doc["index"],
                task_index=doc["task_index"],
                image=(
                    np.array(doc[IMAGE_COL], dtype=np.uint8).reshape(IMAGE_SHAPE)
                    if image_column and IMAGE_COL in doc
                    else None
                ),
            )
        )
    return records


# -- queries -----------------------------------------------------------------


def query_delta_timestamps(
    dataset: Dataset, global_index: int, deltas: list[float]
) -> list[tuple[FrameRecord, bool]]:
    """Frames at t_anchor + delta within the anchor's episode.

    Tolerance is half a frame period; a requested time outside the episode
    returns the nearest boundary frame with is_pad = True. Queries never
    cross episode boundaries.
    """
    anchor = None
    episode_records = None
    for meta in dataset.episodes():
        records = dataset.read_episode(meta.episode_index)
        for r in records:
            if r.index == global_index:
                anchor = r
                episode_records = records
                break
        if anchor is not None:
            break
    if anchor is None:
        raise KeyError(f"no frame with global index {global_index}")

    tolerance = (1.0 / dataset.fps) / 2.0
    times = np.array([r.timestamp for r in episode_records])
    out = []
    for delta in deltas:
        want = anchor.timestamp + delta
        nearest = int(np.argmin(np.abs(times - want)))
        is_pad = bool(abs(times[nearest] - want) > tolerance)
        out.append((episode_records[nearest], is_pad))
    return out
