"""Robot instances: an assembly placed at a base pose.

Precomputes the kinematic chain (fixed transforms between joints), the
per-segment rigid-body parameters and the collision capsules, then provides
forward kinematics, recursive Newton-Euler inverse dynamics and a forward
dynamics built from the same recursion.

Conventions:
  - segment i is the rigid body between joint i and joint i+1 (segment 0 is
    fixed to the world through the base pose);
  - a module's mass is carried by the segment holding its proximal flange;
  - joint capsules are split at the motor point so both halves stay fixed in
    their segment frames for any joint axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .catalog import Assembly, JointSpec, ModuleCatalog, ModuleKind
from .spatial import Pose, rotation_about

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class JointState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        self.qdd = np.asarray(self.qdd, dtype=float)
        if not (self.q.shape == self.qd.shape == self.qdd.shape):
            raise ValueError("joint state vectors must share one length")

    @staticmethod
    def rest(q: np.ndarray) -> "JointState":
        q = np.asarray(q, dtype=float)
        return JointState(q, np.zeros_like(q), np.zeros_like(q))


@dataclass
class LimitCheck:
    """Per-joint violation flags; all False means the state is admissible."""

    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    torque: np.ndarray

    @property
    def ok(self) -> bool:
        return not (self.position.any() or self.velocity.any()
                    or self.acceleration.any() or self.torque.any())


@dataclass(frozen=True)
class _Capsule:
    segment: int
    p0: np.ndarray
    p1: np.ndarray
    radius: float


@dataclass(frozen=True)
class _Body:
    mass: float
    com: np.ndarray       # in segment frame
    inertia: np.ndarray   # about com, in segment frame


def _shift_inertia(inertia: np.ndarray, mass: float, offset: np.ndarray) -> np.ndarray:
    """Parallel-axis shift of an inertia tensor by `offset` away from the com."""
    d = np.asarray(offset, dtype=float)
    return inertia + mass * (np.dot(d, d) * np.eye(3) - np.outer(d, d))


class RobotInstance:
    """Immutable kinematic/dynamic model of one assembly at one base pose."""

    def __init__(self, assembly: Assembly, catalog: ModuleCatalog,
                 base: Optional[Pose] = None):
        self.assembly = assembly
        self.catalog = catalog
        self.base = base if base is not None else Pose.identity()
        self._build_chain()

    def _build_chain(self):
        pre: List[Pose] = []          # fixed transform frame_{i-1} -> motor_i
        axes: List[np.ndarray] = []
        specs: List[JointSpec] = []
        capsules: List[_Capsule] = []
        seg_parts: List[List[Tuple[float, np.ndarray, np.ndarray]]] = [[]]

        seg = 0
        rel = Pose.identity()       # transform segment frame -> current flange

        for mid in self.assembly:
            module = self.catalog[mid]
            body = rel  # module proximal flange in segment frame
            if module.kind is ModuleKind.JOINT:
                spec = module.joint
                to_motor = module.proximal_frame.inverse() @ spec.motor_frame
                # proximal half of the module stays with the current segment
                seg_parts[seg].append((module.mass, body.apply(module.com),
                                       body.r @ module.inertia @ body.r.T))
                capsules.append(_Capsule(seg, body.t.copy(),
                                         body.apply(to_motor.t), module.body_radius))
                # switch to the child segment rooted at the motor frame
                pre.append(rel @ to_motor)
                axes.append(np.asarray(spec.axis, dtype=float))
                specs.append(spec)
                seg += 1
                seg_parts.append([])
                motor_to_distal = spec.motor_frame.inverse() @ module.distal_frame
                capsules.append(_Capsule(seg, np.zeros(3),
                                         motor_to_distal.t.copy(), module.body_radius))
                rel = motor_to_distal
            else:
                seg_parts[seg].append((module.mass, body.apply(module.com),
                                       body.r @ module.inertia @ body.r.T))
                span = module.flange_transform()
                if module.capsule_ends is not None:
                    p0 = body.apply(module.proximal_frame.inverse().apply(
                        module.capsule_ends[0]))
                    p1 = body.apply(module.proximal_frame.inverse().apply(
                        module.capsule_ends[1]))
                else:
                    p0, p1 = body.t.copy(), body.apply(span.t)
                capsules.append(_Capsule(seg, p0, p1, module.body_radius))
                rel = rel @ span

        self.n_dof = len(axes)
        self._pre = pre
        self._axes = axes
        self._specs = specs
        self._tail = rel            # last segment frame -> eef tool frame
        self._capsules = capsules
        self._bodies = [self._aggregate(parts) for parts in seg_parts]

        self.q_min = np.array([s.q_min for s in specs])
        self.q_max = np.array([s.q_max for s in specs])
        self.v_max = np.array([s.v_max for s in specs])
        self.a_max = np.array([s.a_max for s in specs])
        self.tau_max = np.array([s.tau_max for s in specs])

        self._cap_segments = np.array([c.segment for c in capsules], dtype=int)
        self._cap_p0 = np.vstack([c.p0 for c in capsules]) if capsules else np.zeros((0, 3))
        self._cap_p1 = np.vstack([c.p1 for c in capsules]) if capsules else np.zeros((0, 3))
        self._cap_radii = np.array([c.radius for c in capsules])
        ii, jj = np.triu_indices(len(capsules), k=1)
        keep = np.abs(self._cap_segments[ii] - self._cap_segments[jj]) >= 2
        if keep.any():
            # bodies that already touch at the zero configuration are joined
            # by construction (stacked modules); exempt those pairs for good
            p0, p1, radii = self.capsules_world(np.zeros((1, self.n_dof)))
            from .collision import segment_segment_distance
            d0 = segment_segment_distance(p0[0, ii[keep]], p1[0, ii[keep]],
                                          p0[0, jj[keep]], p1[0, jj[keep]])
            sep0 = d0 - radii[ii[keep]] - radii[jj[keep]]
            alive = np.ones(len(ii), dtype=bool)
            alive[np.nonzero(keep)[0][sep0 < 0.04]] = False
            keep &= alive
        self._self_pairs = (ii[keep], jj[keep])

    @staticmethod
    def _aggregate(parts: Sequence[Tuple[float, np.ndarray, np.ndarray]]) -> _Body:
        mass = sum(p[0] for p in parts)
        if mass <= 0.0:
            return _Body(0.0, np.zeros(3), np.zeros((3, 3)))
        com = sum(p[0] * p[1] for p in parts) / mass
        inertia = np.zeros((3, 3))
        for m, c, i in parts:
            inertia += _shift_inertia(i, m, c - com)
        return _Body(mass, com, inertia)

    # ------------------------------------------------------------------
    # kinematics

    def _check_dim(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_dof,):
            raise ValueError(f"expected {self.n_dof} joint values, got shape {q.shape}")
        return q

    def frames(self, q: np.ndarray) -> List[Pose]:
        """World poses of all segment frames (index 0 = base flange) plus eef."""
        q = self._check_dim(q)
        out = [self.base]
        walk = self.base
        for i in range(self.n_dof):
            walk = walk @ self._pre[i] @ Pose(rotation_about(self._axes[i], q[i]))
            out.append(walk)
        out.append(walk @ self._tail)
        return out

    def eef_world(self, q: np.ndarray) -> Pose:
        return self.frames(q)[-1]

    def fk(self, q: np.ndarray) -> Pose:
        """End-effector pose relative to the base pose."""
        return self.base.inverse() @ self.eef_world(q)

    def fk_batch(self, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Segment frames for a batch of configurations.

        Returns rotations (b, n_dof+1, 3, 3) and translations (b, n_dof+1, 3),
        segment 0 first.
        """
        qs = np.asarray(qs, dtype=float)
        if qs.ndim == 1:
            qs = qs[None, :]
        b = qs.shape[0]
        rs = np.empty((b, self.n_dof + 1, 3, 3))
        ts = np.empty((b, self.n_dof + 1, 3))
        rs[:, 0] = self.base.r
        ts[:, 0] = self.base.t
        r_acc = np.broadcast_to(self.base.r, (b, 3, 3))
        t_acc = np.broadcast_to(self.base.t, (b, 3))
        for i in range(self.n_dof):
            pre = self._pre[i]
            t_acc = np.einsum("bij,j->bi", r_acc, pre.t) + t_acc
            r_acc = np.einsum("bij,jk->bik", r_acc, pre.r)
            rot = _batch_rotation(self._axes[i], qs[:, i])
            r_acc = np.einsum("bij,bjk->bik", r_acc, rot)
            rs[:, i + 1] = r_acc
            ts[:, i + 1] = t_acc
        return rs, ts

    def capsules_world(self, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Capsule endpoints (b, n_caps, 3) x2 and radii for a batch of q."""
        rs, ts = self.fk_batch(qs)
        segs = self.capsule_segments
        r_g = rs[:, segs]                    # (b, n_caps, 3, 3)
        t_g = ts[:, segs]
        p0 = np.einsum("bkij,kj->bki", r_g, self._cap_p0) + t_g
        p1 = np.einsum("bkij,kj->bki", r_g, self._cap_p1) + t_g
        return p0, p1, self.capsule_radii

    @property
    def capsule_radii(self) -> np.ndarray:
        return self._cap_radii

    @property
    def capsule_segments(self) -> np.ndarray:
        """Owning segment index per capsule (for self-collision adjacency)."""
        return self._cap_segments

    @property
    def self_collision_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """Capsule index pairs subject to self-collision (non-adjacent bodies)."""
        return self._self_pairs

    def fk_query(self, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """World joint axes (n, 3), joint origins (n, 3) and the eef pose as
        raw arrays; the hot path for iterative IK."""
        rs, ts = self.fk_batch(np.asarray(q, dtype=float)[None, :])
        rs, ts = rs[0], ts[0]
        n = self.n_dof
        axes = np.empty((n, 3))
        for i in range(n):
            axes[i] = rs[i + 1] @ self._axes[i]
        eef_r = rs[n] @ self._tail.r
        eef_t = rs[n] @ self._tail.t + ts[n]
        return axes, ts[1:], eef_r, eef_t

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        """Geometric Jacobian of the eef origin, world frame, 6 x n_dof."""
        fr = self.frames(q)
        p_e = fr[-1].t
        jac = np.zeros((6, self.n_dof))
        for i in range(self.n_dof):
            a = fr[i + 1].r @ self._axes[i]
            jac[:3, i] = np.cross(a, p_e - fr[i + 1].t)
            jac[3:, i] = a
        return jac

    # ------------------------------------------------------------------
    # dynamics

    def inverse_dynamics(self, state: JointState,
                         f_ext: Optional[np.ndarray] = None,
                         gravity: Optional[np.ndarray] = None) -> np.ndarray:
        """Joint torques for the given state under gravity and an eef wrench.

        f_ext is the wrench (force, moment, world frame) the environment
        applies to the end effector.
        """
        q, qd, qdd = state.q, state.qd, state.qdd
        if len(q) != self.n_dof:
            raise ValueError("state dimension mismatch")
        g = GRAVITY if gravity is None else np.asarray(gravity, dtype=float)
        wrench = np.zeros(6) if f_ext is None else np.asarray(f_ext, dtype=float)

        fr = self.frames(q)
        n = self.n_dof
        axes_w = [fr[i + 1].r @ self._axes[i] for i in range(n)]
        joints_w = [fr[i + 1].t for i in range(n)]

        # forward pass: angular velocity/acceleration and com accelerations
        w = np.zeros(3)
        dw = np.zeros(3)
        a_point = np.zeros(3)
        p_prev = fr[0].t
        body_force = []
        body_moment = []
        coms_w = []
        for i in range(n):
            dp = joints_w[i] - p_prev
            a_point = a_point + np.cross(dw, dp) + np.cross(w, np.cross(w, dp))
            dw = dw + axes_w[i] * qdd[i] + np.cross(w, axes_w[i]) * qd[i]
            w = w + axes_w[i] * qd[i]
            body = self._bodies[i + 1]
            c_w = fr[i + 1].apply(body.com)
            rc = c_w - joints_w[i]
            a_com = a_point + np.cross(dw, rc) + np.cross(w, np.cross(w, rc))
            i_w = fr[i + 1].r @ body.inertia @ fr[i + 1].r.T
            body_force.append(body.mass * (a_com - g))
            body_moment.append(i_w @ dw + np.cross(w, i_w @ w))
            coms_w.append(c_w)
            p_prev = joints_w[i]

        # backward pass: propagate interaction wrenches toward the base
        tau = np.zeros(n)
        f_next = -wrench[:3]
        n_next = -wrench[3:]
        p_next = fr[-1].t
        for i in range(n - 1, -1, -1):
            f_i = body_force[i] + f_next
            n_i = (body_moment[i]
                   + np.cross(coms_w[i] - joints_w[i], body_force[i])
                   + n_next + np.cross(p_next - joints_w[i], f_next))
            tau[i] = float(np.dot(axes_w[i], n_i))
            f_next, n_next, p_next = f_i, n_i, joints_w[i]
        return tau

    def inverse_dynamics_batch(self, qs: np.ndarray, qds: np.ndarray,
                               qdds: np.ndarray,
                               f_ext: Optional[np.ndarray] = None,
                               gravity: Optional[np.ndarray] = None) -> np.ndarray:
        """Vectorized inverse dynamics over a batch of states, (b, n_dof)."""
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        qds = np.atleast_2d(np.asarray(qds, dtype=float))
        qdds = np.atleast_2d(np.asarray(qdds, dtype=float))
        b, n = qs.shape
        g = GRAVITY if gravity is None else np.asarray(gravity, dtype=float)
        wrench = np.zeros(6) if f_ext is None else np.asarray(f_ext, dtype=float)

        rs, ts = self.fk_batch(qs)
        axes_w = np.empty((b, n, 3))
        for i in range(n):
            axes_w[:, i] = np.einsum("bij,j->bi", rs[:, i + 1], self._axes[i])
        joints_w = ts[:, 1:]

        w = np.zeros((b, 3))
        dw = np.zeros((b, 3))
        a_point = np.zeros((b, 3))
        p_prev = np.broadcast_to(self.base.t, (b, 3))
        body_force = np.empty((b, n, 3))
        body_moment = np.empty((b, n, 3))
        coms_w = np.empty((b, n, 3))
        for i in range(n):
            dp = joints_w[:, i] - p_prev
            a_point = a_point + np.cross(dw, dp) + np.cross(w, np.cross(w, dp))
            ai = axes_w[:, i]
            dw = dw + ai * qdds[:, i:i + 1] + np.cross(w, ai) * qds[:, i:i + 1]
            w = w + ai * qds[:, i:i + 1]
            body = self._bodies[i + 1]
            c_w = np.einsum("bij,j->bi", rs[:, i + 1], body.com) + ts[:, i + 1]
            rc = c_w - joints_w[:, i]
            a_com = a_point + np.cross(dw, rc) + np.cross(w, np.cross(w, rc))
            i_w = np.einsum("bij,jk,blk->bil", rs[:, i + 1], body.inertia, rs[:, i + 1])
            body_force[:, i] = body.mass * (a_com - g)
            body_moment[:, i] = (np.einsum("bij,bj->bi", i_w, dw)
                                 + np.cross(w, np.einsum("bij,bj->bi", i_w, w)))
            coms_w[:, i] = c_w
            p_prev = joints_w[:, i]

        tau = np.zeros((b, n))
        f_next = np.broadcast_to(-wrench[:3], (b, 3)).copy()
        n_next = np.broadcast_to(-wrench[3:], (b, 3)).copy()
        eef_t = (np.einsum("bij,j->bi", rs[:, n], self._tail.t) + ts[:, n]
                 if n > 0 else ts[:, 0])
        p_next = eef_t
        for i in range(n - 1, -1, -1):
            f_i = body_force[:, i] + f_next
            n_i = (body_moment[:, i]
                   + np.cross(coms_w[:, i] - joints_w[:, i], body_force[:, i])
                   + n_next + np.cross(p_next - joints_w[:, i], f_next))
            tau[:, i] = np.einsum("bi,bi->b", axes_w[:, i], n_i)
            f_next, n_next, p_next = f_i, n_i, joints_w[:, i]
        return tau

    def eef_batch(self, qs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World eef rotations (b, 3, 3) and translations (b, 3)."""
        rs, ts = self.fk_batch(qs)
        r_last, t_last = rs[:, -1], ts[:, -1]
        r = np.einsum("bij,jk->bik", r_last, self._tail.r)
        t = np.einsum("bij,j->bi", r_last, self._tail.t) + t_last
        return r, t

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        n = self.n_dof
        h = np.zeros((n, n))
        zeros = np.zeros(n)
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            h[:, j] = self.inverse_dynamics(JointState(q, zeros, e),
                                            gravity=np.zeros(3))
        return 0.5 * (h + h.T)

    def forward_dynamics(self, q: np.ndarray, qd: np.ndarray, tau: np.ndarray,
                         f_ext: Optional[np.ndarray] = None,
                         gravity: Optional[np.ndarray] = None) -> np.ndarray:
        q = self._check_dim(q)
        bias = self.inverse_dynamics(JointState(q, qd, np.zeros_like(q)),
                                     f_ext=f_ext, gravity=gravity)
        h = self.mass_matrix(q)
        try:
            return np.linalg.solve(h, np.asarray(tau, dtype=float) - bias)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular mass matrix (corrupt inertia data?)") from exc

    def kinetic_energy(self, q: np.ndarray, qd: np.ndarray) -> float:
        qd = np.asarray(qd, dtype=float)
        return 0.5 * float(qd @ self.mass_matrix(q) @ qd)

    # ------------------------------------------------------------------
    # limits

    def clip_to_limits(self, q: np.ndarray) -> np.ndarray:
        return np.clip(q, self.q_min, self.q_max)

    def within_limits(self, state: JointState, tau: np.ndarray) -> LimitCheck:
        tau = np.asarray(tau, dtype=float)
        return LimitCheck(
            position=(state.q < self.q_min) | (state.q > self.q_max),
            velocity=np.abs(state.qd) > self.v_max,
            acceleration=np.abs(state.qdd) > self.a_max,
            torque=np.abs(tau) > self.tau_max,
        )


def _batch_rotation(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues formula for one axis and a vector of angles: (b, 3, 3)."""
    x, y, z = axis / np.linalg.norm(axis)
    c = np.cos(angles)
    s = np.sin(angles)
    cc = 1.0 - c
    out = np.empty((len(angles), 3, 3))
    out[:, 0, 0] = c + x * x * cc
    out[:, 0, 1] = x * y * cc - z * s
    out[:, 0, 2] = x * z * cc + y * s
    out[:, 1, 0] = y * x * cc + z * s
    out[:, 1, 1] = c + y * y * cc
    out[:, 1, 2] = y * z * cc - x * s
    out[:, 2, 0] = z * x * cc - y * s
    out[:, 2, 1] = z * y * cc + x * s
    out[:, 2, 2] = c + z * z * cc
    return out
