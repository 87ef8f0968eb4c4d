"""Kinematic chain models: YAML descriptions, forward kinematics, Jacobians.

Chains are trees of revolute joints (a hand is four serial fingers off one
base). Chains are immutable after load; FK and Jacobians are pure functions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .geometry import HomogeneousTransform, rotation_about_axis, rpy_matrix

BASE_LINK = "base"
UNIT_AXIS_TOL = 1e-6
BUNDLED_MODELS = ("sim-xarm7", "sim-hand16")


class ChainParseError(ValueError):
    """Schema violation in a chain description; message carries the field path."""


@dataclass(frozen=True)
class Joint:
    """Revolute joint: rotates its child link about `axis` in the joint frame."""

    name: str
    parent_link: str
    child_link: str
    parent_offset: HomogeneousTransform
    axis: np.ndarray
    limits: tuple[float, float]

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_AXIS_TOL:
            raise ChainParseError(f"joint {self.name}: axis not unit-norm")
        if not self.limits[0] < self.limits[1]:
            raise ChainParseError(f"joint {self.name}: limits min must be < max")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "limits", (float(self.limits[0]), float(self.limits[1])))


@dataclass(frozen=True)
class Marker:
    """Named point fixed to a link, in that link's local frame."""

    name: str
    link: str
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class JointState:
    """Joint angle vector with a capture timestamp (monotonic ns)."""

    q: np.ndarray
    timestamp: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(-1)
        if q.size == 0:
            raise ValueError("joint state is empty")
        if not np.all(np.isfinite(q)):
            raise ValueError("joint state contains non-finite values")
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class KinematicChain:
    """Immutable joint tree with named links and marker points."""

    name: str
    joints: tuple[Joint, ...]
    markers: tuple[Marker, ...]
    capsule_radius: float = 0.01
    # Derived lookups, filled in __post_init__.
    joint_index: dict = field(default_factory=dict, repr=False)
    link_parent_joint: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.joints:
            raise ChainParseError("chain must have at least one joint")
        if self.capsule_radius <= 0:
            raise ChainParseError("capsule_radius must be positive")
        joint_index: dict[str, int] = {}
        link_parent: dict[str, int | None] = {BASE_LINK: None}
        for i, joint in enumerate(self.joints):
            if joint.name in joint_index:
                raise ChainParseError(f"duplicate joint name {joint.name}")
            if joint.child_link in link_parent:
                raise ChainParseError(f"duplicate link name {joint.child_link}")
            if joint.parent_link not in link_parent:
                raise ChainParseError(
                    f"joint {joint.name}: parent link {joint.parent_link!r} not defined yet"
                )
            joint_index[joint.name] = i
            link_parent[joint.child_link] = i
        seen_markers = set()
        for marker in self.markers:
            if marker.name in seen_markers:
                raise ChainParseError(f"duplicate marker name {marker.name}")
            seen_markers.add(marker.name)
            if marker.link not in link_parent:
                raise ChainParseError(f"marker {marker.name}: unknown link {marker.link!r}")
        object.__setattr__(self, "joint_index", joint_index)
        object.__setattr__(self, "link_parent_joint", link_parent)

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    @property
    def marker_names(self) -> tuple[str, ...]:
        return tuple(m.name for m in self.markers)

    def marker(self, name: str) -> Marker:
        for m in self.markers:
            if m.name == name:
                return m
        raise KeyError(f"unknown marker {name!r} on chain {self.name}")

    def lower_limits(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    def upper_limits(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.lower_limits(), self.upper_limits())

    def neutral_state(self) -> JointState:
        """All-zero pose, clamped into limits for joints whose range excludes zero."""
        return JointState(q=self.clamp(np.zeros(self.joint_count)))

    def ancestor_joints(self, link: str) -> list[int]:
        """Joint indices on the path base → link, in chain order."""
        path = []
        idx = self.link_parent_joint[link]
        while idx is not None:
            path.append(idx)
            idx = self.link_parent_joint[self.joints[idx].parent_link]
        return path[::-1]


# -- description parsing --------------------------------------------------


def _require(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ChainParseError(f"{path}: missing required field {key!r}")
    return mapping[key]


def _vec3(value, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64).reshape(3)
    except Exception as exc:
        raise ChainParseError(f"{path}: expected 3 numbers") from exc
    if not np.all(np.isfinite(arr)):
        raise ChainParseError(f"{path}: values must be finite")
    return arr


def chain_from_dict(doc: dict) -> KinematicChain:
    if not isinstance(doc, dict):
        raise ChainParseError("top level: expected a mapping")
    name = _require(doc, "name", "top level")
    joints_doc = _require(doc, "joints", "top level")
    if not isinstance(joints_doc, list) or not joints_doc:
        raise ChainParseError("joints: expected a non-empty list")

    joints = []
    previous_link = BASE_LINK
    for i, jd in enumerate(joints_doc):
        path = f"joints[{i}]"
        if not isinstance(jd, dict):
            raise ChainParseError(f"{path}: expected a mapping")
        jname = _require(jd, "name", path)
        offset_doc = jd.get("offset", {})
        translation = _vec3(offset_doc.get("translation", (0, 0, 0)), f"{path}.offset.translation")
        rpy = _vec3(offset_doc.get("rpy", (0, 0, 0)), f"{path}.offset.rpy")
        axis = _vec3(_require(jd, "axis", path), f"{path}.axis")
        if abs(np.linalg.norm(axis) - 1.0) > UNIT_AXIS_TOL:
            raise ChainParseError(f"{path}.axis: axis not unit-norm")
        limits = _require(jd, "limits", path)
        if not isinstance(limits, (list, tuple)) or len(limits) != 2:
            raise ChainParseError(f"{path}.limits: expected [min, max]")
        joints.append(
            Joint(
                name=str(jname),
                parent_link=str(jd.get("parent", previous_link)),
                child_link=str(jd.get("link", f"{jname}_link")),
                parent_offset=HomogeneousTransform(
                    rotation=rpy_matrix(*rpy), translation=translation
                ),
                axis=axis,
                limits=(float(limits[0]), float(limits[1])),
            )
        )
        previous_link = joints[-1].child_link

    markers = []
    for i, md in enumerate(doc.get("markers", [])):
        path = f"markers[{i}]"
        if not isinstance(md, dict):
            raise ChainParseError(f"{path}: expected a mapping")
        markers.append(
            Marker(
                name=str(_require(md, "name", path)),
                link=str(_require(md, "link", path)),
                offset=_vec3(md.get("offset", (0, 0, 0)), f"{path}.offset"),
            )
        )

    return KinematicChain(
        name=str(name),
        joints=tuple(joints),
        markers=tuple(markers),
        capsule_radius=float(doc.get("capsule_radius", 0.01)),
    )


def load_chain(source: str | Path) -> KinematicChain:
    """Load a chain description from a YAML file path or a bundled model name."""
    if isinstance(source, str) and source in BUNDLED_MODELS:
        text = (
            resources.files("beavr").joinpath(f"models/{source.replace('-', '_')}.yaml")
        ).read_text()
    else:
        text = Path(source).read_text()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ChainParseError(f"invalid YAML: {exc}") from exc
    return chain_from_dict(doc)


# -- forward kinematics ----------------------------------------------------


_EYE3 = np.eye(3)
_ZERO3 = np.zeros(3)


def _fk_cache(chain: KinematicChain):
    """Per-chain constants for the FK recurrence: parent rows, offsets, the
    constant skew matrices that make Rodrigues two scalar blends, and joint
    indices grouped by tree depth so each level evaluates as one batch."""
    cached = getattr(chain, "_fk_consts", None)
    if cached is None:
        n = chain.joint_count
        parent_row = np.empty(n, dtype=np.intp)
        off_rot = np.empty((n, 3, 3))
        off_tra = np.empty((n, 3))
        axes = np.empty((n, 3))
        skew = np.empty((n, 3, 3))
        skew2 = np.empty((n, 3, 3))
        depth = np.empty(n, dtype=np.intp)
        for i, joint in enumerate(chain.joints):
            parent = chain.link_parent_joint[joint.parent_link]
            parent_row[i] = n if parent is None else parent  # row n = base frame
            depth[i] = 0 if parent is None else depth[parent] + 1
            off_rot[i] = joint.parent_offset.rotation
            off_tra[i] = joint.parent_offset.translation
            axes[i] = joint.axis
            ax, ay, az = joint.axis
            skew[i] = [[0.0, -az, ay], [az, 0.0, -ax], [-ay, ax, 0.0]]
            skew2[i] = skew[i] @ skew[i]
        levels = tuple(
            np.nonzero(depth == d)[0] for d in range(int(depth.max()) + 1)
        )
        cached = (parent_row, off_rot, off_tra, axes, skew, skew2, levels)
        object.__setattr__(chain, "_fk_consts", cached)
    return cached


def _fk_arrays(chain: KinematicChain, q: np.ndarray):
    """Array-form FK: per-joint child-link rotation/translation plus world
    joint origins and axes. Row i corresponds to chain.joints[i].

    Results are memoized for the most recent configuration (iterative solvers
    evaluate the same iterate several times) and must be treated as
    read-only by callers.
    """
    memo = getattr(chain, "_fk_memo", None)
    key = q.tobytes()
    if memo is not None and memo[0] == key:
        return memo[1]
    parent_row, off_rot, off_tra, axes, skew, skew2, levels = _fk_cache(chain)
    n = chain.joint_count
    # Row n holds the base frame so parent gathers never need a branch.
    link_rot = np.empty((n + 1, 3, 3))
    link_tra = np.empty((n + 1, 3))
    link_rot[n] = _EYE3
    link_tra[n] = _ZERO3
    joint_origin = np.empty((n, 3))
    joint_axis = np.empty((n, 3))
    sin_q = np.sin(q)[:, None, None]
    cos_q = np.cos(q)[:, None, None]
    spin = _EYE3 + sin_q * skew + (1.0 - cos_q) * skew2
    for idx in levels:
        rows = parent_row[idx]
        parent_rot = link_rot[rows]
        origin_rot = parent_rot @ off_rot[idx]
        origin_t = (parent_rot @ off_tra[idx, :, None])[:, :, 0] + link_tra[rows]
        joint_origin[idx] = origin_t
        joint_axis[idx] = (origin_rot @ axes[idx, :, None])[:, :, 0]
        link_rot[idx] = origin_rot @ spin[idx]
        link_tra[idx] = origin_t
    out = (link_rot[:n], link_tra[:n], joint_origin, joint_axis)
    object.__setattr__(chain, "_fk_memo", (key, out))
    return out


def _fk_matrices(chain: KinematicChain, q: np.ndarray):
    """Rotations/translations per link plus per-joint world origin and axis."""
    link_rot, link_tra, joint_origin, joint_axis = _fk_arrays(chain, q)
    rots = {BASE_LINK: _EYE3.copy()}
    trans = {BASE_LINK: _ZERO3.copy()}
    for i, joint in enumerate(chain.joints):
        rots[joint.child_link] = link_rot[i]
        trans[joint.child_link] = link_tra[i]
    return rots, trans, joint_origin, joint_axis


def forward_kinematics(chain: KinematicChain, state: JointState) -> dict[str, HomogeneousTransform]:
    """World transform of every link frame; base link at identity."""
    q = state.q
    if q.size != chain.joint_count:
        raise ValueError(f"joint state has {q.size} values, chain has {chain.joint_count} joints")
    rots, trans, _, _ = _fk_matrices(chain, q)
    return {
        link: HomogeneousTransform(rotation=rots[link], translation=trans[link])
        for link in rots
    }


def marker_positions(chain: KinematicChain, state: JointState) -> dict[str, np.ndarray]:
    """World position of every marker at the given configuration."""
    fk = forward_kinematics(chain, state)
    return {m.name: fk[m.link].apply(m.offset) for m in chain.markers}


def _ancestor_mask(chain: KinematicChain, link: str) -> np.ndarray:
    """(N,) 0/1 mask selecting the joints on the path base -> link (cached)."""
    cache = getattr(chain, "_mask_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(chain, "_mask_cache", cache)
    mask = cache.get(link)
    if mask is None:
        mask = np.zeros(chain.joint_count)
        mask[chain.ancestor_joints(link)] = 1.0
        cache[link] = mask
    return mask


def point_jacobian(chain: KinematicChain, state: JointState, marker: str) -> np.ndarray:
    """3xN positional Jacobian of a marker: column j = axis_j x (p - origin_j).

    Joints off the marker's ancestor path contribute zero columns.
    """
    q = state.q
    if q.size != chain.joint_count:
        raise ValueError(f"joint state has {q.size} values, chain has {chain.joint_count} joints")
    m = chain.marker(marker)
    link_rot, link_tra, joint_origin, joint_axis = _fk_arrays(chain, q)
    ji = chain.link_parent_joint[m.link]
    p = m.offset if ji is None else link_rot[ji] @ m.offset + link_tra[ji]
    cols = np.cross(joint_axis, p - joint_origin) * _ancestor_mask(chain, m.link)[:, None]
    return cols.T


def link_jacobian(chain: KinematicChain, state: JointState, link: str) -> np.ndarray:
    """6xN spatial Jacobian of a link frame: rows 0-2 positional, 3-5 rotational."""
    q = state.q
    if q.size != chain.joint_count:
        raise ValueError(f"joint state has {q.size} values, chain has {chain.joint_count} joints")
    if link not in chain.link_parent_joint:
        raise KeyError(f"unknown link {link!r} on chain {chain.name}")
    link_rot, link_tra, joint_origin, joint_axis = _fk_arrays(chain, q)
    ji = chain.link_parent_joint[link]
    p = _ZERO3 if ji is None else link_tra[ji]
    mask = _ancestor_mask(chain, link)[:, None]
    jac = np.empty((6, chain.joint_count))
    jac[:3] = (np.cross(joint_axis, p - joint_origin) * mask).T
    jac[3:] = (joint_axis * mask).T
    return jac
