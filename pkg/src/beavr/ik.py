"""Damped-least-squares inverse kinematics with self-collision gating.

The fingertip solver stacks all eight position targets into one 3k-row
system and iterates dq = J^T (J J^T + lambda^2 I)^-1 e with per-iteration
step limiting, joint-limit clamping, capsule self-collision rejection, and
warm starts from the previous solution. A 6-row variant tracks a full pose
for the arm.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    FINGERTIP_LANDMARKS,
    HomogeneousTransform,
    KeypointFrame,
    ScaleProfile,
    rotation_log,
    vr_to_robot,
)
from .kinematics import (
    JointState,
    KinematicChain,
    _ancestor_mask,
    _fk_arrays,
)


@dataclass(frozen=True)
class IkTarget:
    """Desired world position for one chain marker."""

    marker: str
    desired: np.ndarray
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0:
            raise ValueError("target weight must be positive")
        object.__setattr__(
            self, "desired", np.asarray(self.desired, dtype=np.float64).reshape(3)
        )


@dataclass(frozen=True)
class IkSettings:
    damping: float = 0.05
    max_iterations: int = 100
    tolerance: float = 1e-3
    step_clamp: float = 0.2
    collision_margin: float = 0.005

    def __post_init__(self):
        for name in ("damping", "max_iterations", "tolerance", "step_clamp", "collision_margin"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class IkResult:
    q: JointState
    residual: float
    iterations: int
    converged: bool
    collision_blocked: bool = False


@dataclass(frozen=True)
class CollisionPair:
    link_a: str
    link_b: str
    distance: float


@dataclass(frozen=True)
class CollisionReport:
    pairs: tuple[CollisionPair, ...] = ()

    @property
    def collision_free(self) -> bool:
        return not self.pairs


# -- capsule model ---------------------------------------------------------


@dataclass(frozen=True)
class _CapsuleSpec:
    """One physical link segment: joint-origin endpoints plus shared radius.

    Endpoints reference world points by id so adjacency survives coincident
    joint origins (zero-length offsets are contracted into one node).
    """

    link: str
    node_a: tuple
    node_b: tuple


def _capsule_specs(chain: KinematicChain) -> tuple[_CapsuleSpec, ...]:
    cached = getattr(chain, "_capsule_cache", None)
    if cached is not None:
        return cached
    # Union-find over joints: joints separated by a zero-length offset share
    # one world point and must count as the same attachment node.
    parent = list(range(chain.joint_count))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    parent_joint = []
    for joint in chain.joints:
        pj = chain.link_parent_joint[joint.parent_link]
        parent_joint.append(pj)
    for i, joint in enumerate(chain.joints):
        pj = parent_joint[i]
        if pj is not None and np.linalg.norm(joint.parent_offset.translation) < 1e-9:
            parent[find(i)] = find(pj)

    specs = []
    for i, joint in enumerate(chain.joints):
        pj = parent_joint[i]
        if pj is None:
            continue  # base plate segments are structure, not a moving link
        if np.linalg.norm(joint.parent_offset.translation) < 1e-9:
            continue
        specs.append(
            _CapsuleSpec(
                link=joint.parent_link,
                node_a=("j", find(pj)),
                node_b=("j", find(i)),
            )
        )
    # Terminal pads: a marker offset from its leaf link origin extends the
    # last physical segment out to the fingertip.
    for marker in chain.markers:
        if np.linalg.norm(marker.offset) < 1e-9:
            continue
        pj = chain.link_parent_joint[marker.link]
        if pj is None:
            continue
        specs.append(
            _CapsuleSpec(
                link=marker.link,
                node_a=("j", find(pj)),
                node_b=("m", marker.name),
            )
        )
    specs = tuple(specs)
    object.__setattr__(chain, "_capsule_cache", specs)  # chain is immutable
    return specs


def _capsule_consts(chain: KinematicChain):
    """Index arrays resolving capsule endpoints from FK output (cached)."""
    cached = getattr(chain, "_capsule_node_cache", None)
    if cached is not None:
        return cached
    specs = _capsule_specs(chain)
    a_idx = np.array([s.node_a[1] for s in specs], dtype=np.intp)
    b_idx = np.array(
        [s.node_b[1] if s.node_b[0] == "j" else 0 for s in specs], dtype=np.intp
    )
    marker_rows = tuple(
        (row, chain.link_parent_joint[chain.marker(s.node_b[1]).link],
         chain.marker(s.node_b[1]).offset)
        for row, s in enumerate(specs)
        if s.node_b[0] == "m"
    )
    cached = (specs, a_idx, b_idx, marker_rows)
    object.__setattr__(chain, "_capsule_node_cache", cached)
    return cached


def _capsule_endpoints(
    chain: KinematicChain, q: np.ndarray
) -> tuple[tuple[_CapsuleSpec, ...], np.ndarray, np.ndarray]:
    """Capsule specs plus (S, 3) world start/end point arrays."""
    specs, a_idx, b_idx, marker_rows = _capsule_consts(chain)
    link_rot, link_tra, joint_origin, _ = _fk_arrays(chain, q)
    starts = joint_origin[a_idx]
    ends = joint_origin[b_idx]
    for row, ji, offset in marker_rows:
        ends[row] = link_rot[ji] @ offset + link_tra[ji]
    return specs, starts, ends


def segment_distance(p1, q1, p2, q2, eps: float = 1e-12) -> float:
    """Minimum distance between segments [p1,q1] and [p2,q2]."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s, t = 0.0, min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t, s = 0.0, min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t, s = 0.0, min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t, s = 1.0, min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm((p1 + s * d1) - (p2 + t * d2)))


def _nonadjacent_pairs(chain: KinematicChain) -> np.ndarray:
    """(M, 2) capsule index pairs that do not share an attachment node."""
    cached = getattr(chain, "_capsule_pair_cache", None)
    if cached is not None:
        return cached
    specs = _capsule_specs(chain)
    pairs = [
        (i, k)
        for i in range(len(specs))
        for k in range(i + 1, len(specs))
        if not ({specs[i].node_a, specs[i].node_b} & {specs[k].node_a, specs[k].node_b})
    ]
    arr = np.array(pairs, dtype=np.intp).reshape(-1, 2)
    object.__setattr__(chain, "_capsule_pair_cache", arr)
    return arr


def _batch_segment_distances(p1, q1, p2, q2, eps: float = 1e-12) -> np.ndarray:
    """Vectorized segment-segment distances; all segments have length > 0."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)
    denom = a * e - b * b
    s = np.where(denom > eps, np.clip((b * f - c * e) / np.where(denom > eps, denom, 1.0), 0, 1), 0.0)
    t0 = (b * s + f) / e
    t = np.clip(t0, 0.0, 1.0)
    clamped = (t0 < 0.0) | (t0 > 1.0)
    s = np.where(clamped, np.clip((t * b - c) / a, 0.0, 1.0), s)
    gap = (p1 + s[:, None] * d1) - (p2 + t[:, None] * d2)
    return np.sqrt(np.einsum("ij,ij->i", gap, gap))


def check_collision(chain: KinematicChain, state: JointState, margin: float) -> CollisionReport:
    """Capsule-vs-capsule self-collision over all non-adjacent link pairs.

    Adjacent means sharing an attachment node (consecutive links, or links
    joined through zero-length offsets). Pair distance is surface distance:
    segment distance minus both radii.
    """
    if state.q.size != chain.joint_count:
        raise ValueError(
            f"joint state has {state.q.size} values, chain has {chain.joint_count} joints"
        )
    specs, starts, ends = _capsule_endpoints(chain, state.q)
    pair_idx = _nonadjacent_pairs(chain)
    if pair_idx.size == 0:
        return CollisionReport()
    distances = (
        _batch_segment_distances(
            starts[pair_idx[:, 0]], ends[pair_idx[:, 0]],
            starts[pair_idx[:, 1]], ends[pair_idx[:, 1]],
        )
        - 2.0 * chain.capsule_radius
    )
    hits = np.nonzero(distances < margin)[0]
    pairs = tuple(
        CollisionPair(specs[pair_idx[h, 0]].link, specs[pair_idx[h, 1]].link,
                      float(distances[h]))
        for h in hits
    )
    return CollisionReport(pairs=pairs)


# -- solvers ---------------------------------------------------------------


def _marker_consts(chain: KinematicChain, name: str):
    """(parent joint index or -1, offset, ancestor mask) for a marker, cached."""
    cache = getattr(chain, "_marker_consts", None)
    if cache is None:
        cache = {}
        object.__setattr__(chain, "_marker_consts", cache)
    entry = cache.get(name)
    if entry is None:
        m = chain.marker(name)
        ji = chain.link_parent_joint[m.link]
        entry = (-1 if ji is None else ji, m.offset, _ancestor_mask(chain, m.link))
        cache[name] = entry
    return entry


def _marker_eval(chain: KinematicChain, q: np.ndarray, targets, with_jacobian: bool):
    link_rot, link_tra, joint_origin, joint_axis = _fk_arrays(chain, q)
    count = len(targets)
    points = np.empty((count, 3))
    desired = np.empty((count, 3))
    weights = np.empty(count)
    masks = np.empty((count, chain.joint_count))
    for t_i, target in enumerate(targets):
        ji, offset, mask = _marker_consts(chain, target.marker)
        points[t_i] = offset if ji < 0 else link_rot[ji] @ offset + link_tra[ji]
        desired[t_i] = target.desired
        weights[t_i] = target.weight
        masks[t_i] = mask
    errors = desired - points
    worst = float(np.sqrt((errors * errors).sum(axis=1).max()))
    if not with_jacobian:
        return None, None, worst
    err = (weights[:, None] * errors).reshape(-1)
    # (T, N, 3) column blocks: axis_j x (p_t - origin_j), zeroed off-path.
    cols = np.cross(
        joint_axis[None, :, :], points[:, None, :] - joint_origin[None, :, :]
    ) * (weights[:, None] * masks)[:, :, None]
    jac = cols.transpose(0, 2, 1).reshape(3 * count, chain.joint_count)
    return err, jac, worst


def _marker_rows(chain: KinematicChain, q: np.ndarray, targets):
    """Stacked weighted error vector and Jacobian, plus the max target error."""
    return _marker_eval(chain, q, targets, with_jacobian=True)


# A DLS step this small (radians) means the damped gradient has vanished:
# the iterate sits at a least-squares optimum and further probing cannot
# move it, so solvers exit instead of spending probes to rediscover it.
_STATIONARY_STEP = 1e-5


def _dls_step(jac: np.ndarray, err: np.ndarray, damping: float) -> np.ndarray:
    jjt = jac @ jac.T
    jjt[np.diag_indices_from(jjt)] += damping * damping
    return jac.T @ np.linalg.solve(jjt, err)


def _limit_step(dq: np.ndarray, clamp: float) -> np.ndarray:
    # Uniform rescale, not per-component clipping: clipping can rotate the
    # step off the descent direction near singular configurations.
    peak = np.abs(dq).max()
    if peak > clamp:
        dq = dq * (clamp / peak)
    return dq


def solve_dls(
    chain: KinematicChain,
    q_seed: JointState,
    targets: list[IkTarget],
    settings: IkSettings = IkSettings(),
) -> IkResult:
    """Multi-target position IK. Accepted iterations never increase the residual."""
    if not targets:
        raise ValueError("targets must be non-empty")
    q = chain.clamp(q_seed.q.copy())
    if q.size != chain.joint_count:
        raise ValueError(f"seed has {q.size} values, chain has {chain.joint_count} joints")

    err, jac, worst = _marker_rows(chain, q, targets)
    eps = max(1e-7, settings.tolerance * 1e-3)
    iterations = 0
    collision_blocked = False
    for _ in range(settings.max_iterations):
        if worst < settings.tolerance:
            break
        dq = _limit_step(_dls_step(jac, err, settings.damping), settings.step_clamp)
        if np.abs(dq).max() < _STATIONARY_STEP:
            break  # first-order optimum: more targets than freedoms left

        # Probe the DLS step with up to three halvings; fall back to the raw
        # gradient only after a genuine ascent (near-singular seed). Accept
        # only a real improvement so the residual is monotone and a stalled
        # solve (unreachable target) exits after a few probes. Probes score
        # on the error alone; the Jacobian is built once a probe is accepted.
        accepted = None
        worse = False
        for phase in ("dls", "gradient"):
            if phase == "gradient":
                if not worse:
                    break
                direction = _limit_step(jac.T @ err, settings.step_clamp)
            else:
                direction = dq
            scale = 1.0
            for _ in range(3):
                q_try = chain.clamp(q + scale * direction)
                _, _, worst_try = _marker_eval(chain, q_try, targets, with_jacobian=False)
                if worst_try < worst - eps:
                    accepted = (q_try, worst_try)
                    break
                if worst_try > worst + eps:
                    worse = True
                scale *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            break  # no direction improves (stall, limits, or singularity)

        q_try, worst_try = accepted
        report = check_collision(chain, JointState(q=q_try), settings.collision_margin)
        if not report.collision_free:
            collision_blocked = True
            break  # roll back to the previous iterate and stop
        err, jac, _ = _marker_rows(chain, q_try, targets)
        q, worst = q_try, worst_try
        iterations += 1

    return IkResult(
        q=JointState(q=q, timestamp=q_seed.timestamp),
        residual=worst,
        iterations=iterations,
        converged=worst < settings.tolerance,
        collision_blocked=collision_blocked,
    )


def solve_pose(
    chain: KinematicChain,
    q_seed: JointState,
    link: str,
    target: HomogeneousTransform,
    settings: IkSettings = IkSettings(),
    orientation_weight: float = 0.5,
    check_collisions: bool = True,
) -> IkResult:
    """Full-pose IK for one link frame (6 error rows: position + axis-angle).

    Residual reports the position error; convergence additionally requires
    the orientation error below 0.05 rad.
    """
    from .kinematics import link_jacobian  # local import avoids cycle noise

    if link not in chain.link_parent_joint:
        raise KeyError(f"unknown link {link!r} on chain {chain.name}")
    ji = chain.link_parent_joint[link]
    q = chain.clamp(q_seed.q.copy())

    def evaluate(qv):
        link_rot, link_tra, _, _ = _fk_arrays(chain, qv)
        rot = np.eye(3) if ji is None else link_rot[ji]
        tra = np.zeros(3) if ji is None else link_tra[ji]
        pos_err = target.translation - tra
        rot_err = rotation_log(target.rotation @ rot.T)
        err6 = np.concatenate([pos_err, orientation_weight * rot_err])
        return err6, float(np.linalg.norm(pos_err)), float(np.linalg.norm(rot_err))

    err, pos_err, rot_err = evaluate(q)
    eps = max(1e-7, settings.tolerance * 1e-3)
    iterations = 0
    collision_blocked = False
    for _ in range(settings.max_iterations):
        if pos_err < settings.tolerance and rot_err < 0.05:
            break
        jac = link_jacobian(chain, JointState(q=q), link)
        jac = jac * np.concatenate([np.ones(3), np.full(3, orientation_weight)])[:, None]
        dq = _limit_step(_dls_step(jac, err, settings.damping), settings.step_clamp)
        if np.abs(dq).max() < _STATIONARY_STEP:
            break  # first-order optimum for this pose

        # Same probe scheme as solve_dls: halve only after the step made the
        # cost worse; gradient fallback only after a genuine ascent.
        accepted = None
        worse = False
        cost = float(np.linalg.norm(err))
        for phase in ("dls", "gradient"):
            if phase == "gradient":
                if not worse:
                    break
                direction = _limit_step(jac.T @ err, settings.step_clamp)
            else:
                direction = dq
            scale = 1.0
            for _ in range(3):
                q_try = chain.clamp(q + scale * direction)
                err_try, pos_try, rot_try = evaluate(q_try)
                cost_try = float(np.linalg.norm(err_try))
                if cost_try < cost - eps:
                    accepted = (q_try, err_try, pos_try, rot_try)
                    break
                if cost_try > cost + eps:
                    worse = True
                scale *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            break

        q_try, err_try, pos_try, rot_try = accepted
        if check_collisions:
            report = check_collision(chain, JointState(q=q_try), settings.collision_margin)
            if not report.collision_free:
                collision_blocked = True
                break
        q, err, pos_err, rot_err = q_try, err_try, pos_try, rot_try
        iterations += 1

    return IkResult(
        q=JointState(q=q, timestamp=q_seed.timestamp),
        residual=pos_err,
        iterations=iterations,
        converged=pos_err < settings.tolerance and rot_err < 0.05,
        collision_blocked=collision_blocked,
    )


def fingertip_targets_from_hand(
    frame: KeypointFrame, profile: ScaleProfile = ScaleProfile()
) -> list[IkTarget]:
    """Eight IK targets (distal + tip for thumb/index/middle/ring); pinky unused.

    Expects a wrist-relative frame; each point maps through vr_to_robot with
    the finger's scale factor onto the <finger>_distal / <finger>_tip markers.
    """
    targets = []
    for finger, (distal_idx, tip_idx) in FINGERTIP_LANDMARKS.items():
        s_f = profile.for_finger(finger)
        for suffix, idx in (("distal", distal_idx), ("tip", tip_idx)):
            targets.append(
                IkTarget(
                    marker=f"{finger}_{suffix}",
                    desired=vr_to_robot(frame.points[idx], s_f),
                )
            )
    return targets
