"""Time parameterization of joint paths under kinematic and torque limits.

Classic numerical time-optimal parameterization over the squared path
velocity b = (ds/dt)^2: per grid point the velocity/acceleration/torque
limits yield affine bounds in (s_ddot, b); a backward controllable-set pass
and a forward max-acceleration pass produce the profile. Corners of the
polyline either force zero path velocity (deviation delta = 0) or are
rounded with quadratic blends staying within delta of the corner.

Torque enters through tau = A(s) s_ddot + B(s) b + C(s), whose coefficient
vectors come from three batched inverse-dynamics sweeps over the grid.
Constraint rows are collocated at interval-start knots; a small internal
limit shave absorbs the O(grid) excursions, a final verification sweep
checks the profile against the unshaved limits at both interval ends, and
the grid is refined once or twice when that sweep fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .meter import Counters
from .planner import JointPath, path_time_lower_bound
from .robot import RobotInstance

_SAFETY = 1.0 - 1e-2     # internal limit shave absorbing grid excursions
_EPS = 1e-10


@dataclass
class Trajectory:
    """Uniformly sampled joint trajectory starting and ending at rest."""

    dt: float
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    goal_times: List[float] = field(default_factory=list)

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.qd = np.atleast_2d(np.asarray(self.qd, dtype=float))
        self.qdd = np.atleast_2d(np.asarray(self.qdd, dtype=float))

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def to_json(self) -> dict:
        return {"dt": self.dt,
                "q": self.q.tolist(), "qd": self.qd.tolist(),
                "qdd": self.qdd.tolist(),
                "goal_times": [float(t) for t in self.goal_times]}

    @staticmethod
    def from_json(obj: dict) -> "Trajectory":
        return Trajectory(float(obj["dt"]), np.asarray(obj["q"], dtype=float),
                          np.asarray(obj["qd"], dtype=float),
                          np.asarray(obj["qdd"], dtype=float),
                          [float(t) for t in obj.get("goal_times", [])])

    def to_csv(self, robot: RobotInstance, f_ext: Optional[np.ndarray] = None,
               gravity: Optional[np.ndarray] = None) -> str:
        tau = robot.inverse_dynamics_batch(self.q, self.qd, self.qdd,
                                           f_ext=f_ext, gravity=gravity)
        n = self.q.shape[1]
        header = (["t"] + [f"q{j}" for j in range(n)] + [f"qd{j}" for j in range(n)]
                  + [f"qdd{j}" for j in range(n)] + [f"tau{j}" for j in range(n)])
        lines = [",".join(header)]
        for k, t in enumerate(self.times):
            row = np.concatenate([[t], self.q[k], self.qd[k], self.qdd[k], tau[k]])
            lines.append(",".join(f"{v:.9g}" for v in row))
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------
# geometric path pieces

@dataclass
class _Piece:
    kind: str                 # "linear" | "blend"
    span: float               # parameter length
    data: tuple

    def eval(self, u: np.ndarray):
        """Position, first and second parameter derivatives at u in [0, 1]."""
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            q0, tangent = self.data
            q = q0[None, :] + (u * self.span)[:, None] * tangent[None, :]
            qp = np.broadcast_to(tangent, q.shape)
            qpp = np.zeros_like(q)
            return q, qp, qpp
        # circular fillet: unit-speed arc in the plane of the two tangents
        p_in, e_t, e_n, radius, angle = self.data
        theta = (u * angle)[:, None]
        q = p_in + radius * (np.sin(theta) * e_t + (1 - np.cos(theta)) * e_n)
        qp = np.cos(theta) * e_t + np.sin(theta) * e_n
        qpp = (-np.sin(theta) * e_t + np.cos(theta) * e_n) / radius
        return q, qp, qpp


def _build_pieces(waypoints: np.ndarray, delta: float) -> Tuple[List[_Piece], List[bool]]:
    """Split the polyline into linear pieces and corner blends.

    Returns pieces plus a stop flag per junction between consecutive pieces
    (True forces zero path velocity there). Path start/end always stop.
    """
    m = len(waypoints)
    segs = [waypoints[i + 1] - waypoints[i] for i in range(m - 1)]
    lengths = [float(np.linalg.norm(s)) for s in segs]
    tangents = [s / l for s, l in zip(segs, lengths)]

    # fillet distance per interior corner, sharing each segment between its
    # ends; corners sharper than 120 deg keep their full stop (a reversal
    # cannot be rounded at bounded curvature)
    blend = []
    for i in range(1, m - 1):
        d = min(delta, 0.5 * lengths[i - 1], 0.5 * lengths[i])
        cos_phi = float(np.clip(np.dot(tangents[i - 1], tangents[i]), -1.0, 1.0))
        phi = math.acos(cos_phi)
        if d < 1e-9 or phi < 1e-6 or phi > 2.0 * math.pi / 3.0:
            blend.append((0.0, 0.0))
        else:
            blend.append((d, phi))

    def entry_tangent(piece: _Piece) -> np.ndarray:
        if piece.kind == "linear":
            return piece.data[1]
        return piece.data[1]  # arc starts along e_t

    def exit_tangent(piece: _Piece) -> np.ndarray:
        if piece.kind == "linear":
            return piece.data[1]
        _, e_t, e_n, _, phi = piece.data
        return math.cos(phi) * e_t + math.sin(phi) * e_n

    pieces: List[_Piece] = []
    stops: List[bool] = []

    def push(piece: _Piece) -> None:
        if pieces:
            cont = float(np.linalg.norm(exit_tangent(pieces[-1])
                                        - entry_tangent(piece))) < 1e-9
            stops.append(not cont)
        pieces.append(piece)

    for i in range(m - 1):
        d_start = blend[i - 1][0] if i > 0 else 0.0
        d_end, phi = blend[i] if i < m - 2 else (0.0, 0.0)
        a = waypoints[i] + d_start * tangents[i]
        b = waypoints[i + 1] - d_end * tangents[i]
        lin_len = float(np.linalg.norm(b - a))
        if lin_len > 1e-9:
            push(_Piece("linear", lin_len, (a, tangents[i])))
        if d_end > 0.0:
            e_t = tangents[i]
            e_n = tangents[i + 1] - math.cos(phi) * e_t
            e_n = e_n / np.linalg.norm(e_n)
            radius = d_end / math.tan(phi / 2.0)
            push(_Piece("arc", radius * phi, (b.copy(), e_t, e_n, radius, phi)))
    return pieces, stops


# ----------------------------------------------------------------------
# the parameterization itself

def parameterize(robot: RobotInstance, path: JointPath, delta: float = 0.05,
                 dt: float = 0.004,
                 gravity: Optional[np.ndarray] = None,
                 f_ext: Optional[np.ndarray] = None,
                 counters: Optional[Counters] = None,
                 grid_per_segment: int = 64,
                 grid_per_blend: int = 16) -> Optional[Trajectory]:
    """Time-parameterize a joint path; None when no feasible profile exists."""
    waypoints = path.waypoints
    if len(waypoints) < 2:
        q0 = waypoints[0]
        zero = np.zeros_like(q0)
        return Trajectory(dt, q0[None, :], zero[None, :], zero[None, :])

    pieces, junction_stops = _build_pieces(waypoints, delta)
    for refine in (1, 2, 4):
        result = _parameterize_on_grid(robot, pieces, junction_stops, dt,
                                       gravity, f_ext, counters,
                                       grid_per_segment * refine,
                                       grid_per_blend * refine)
        if result is None:
            continue  # over-tight shaving can stall a grid; retry finer
        traj, verified = result
        if verified:
            floor = path_time_lower_bound(path, robot.v_max)
            return _apply_time_floor(traj, floor, pieces, dt)
    return None


def _apply_time_floor(traj: Trajectory, floor: float, pieces, dt) -> Trajectory:
    # corner rounding may undercut the declared polyline lower bound by a
    # sliver; stretch uniformly so the bound stays an underapproximation
    if traj.duration >= floor or traj.duration <= 0:
        return traj
    scale = floor / traj.duration
    n_new = int(math.ceil(traj.duration * scale / dt - 1e-9)) + 1
    old_t = traj.times * scale
    new_t = np.minimum(np.arange(n_new) * dt, old_t[-1])
    q = np.stack([np.interp(new_t, old_t, traj.q[:, j])
                  for j in range(traj.q.shape[1])], axis=1)
    qd = np.zeros_like(q)
    qdd = np.zeros_like(q)
    if n_new > 2:
        qd[1:-1] = (q[2:] - q[:-2]) / (2 * dt)
        qdd[1:-1] = (qd[2:] - qd[:-2]) / (2 * dt)
    return Trajectory(dt, q, qd, qdd)


def _parameterize_on_grid(robot, pieces, junction_stops, dt, gravity, f_ext,
                          counters, grid_per_segment, grid_per_blend):
    """One grid resolution attempt: (trajectory, verified) or None = infeasible."""
    qs, qps, qpps, ds_list, stop_flags = [], [], [], [], []
    mid_us = []
    for p_idx, piece in enumerate(pieces):
        if piece.kind == "linear":
            # resolve the acceleration ramps: a grid interval larger than the
            # ramp length loses first-order time around the bang-bang switch
            tangent = piece.data[1]
            scale = np.abs(tangent) + 1e-12
            bv = float(((robot.v_max / scale) ** 2).min())
            u_max = float((robot.a_max / scale).min())
            s_ramp = bv / (2.0 * u_max)
            n_int = int(math.ceil(4.0 * piece.span / max(s_ramp, 1e-9)))
            n_pts = min(max(grid_per_segment, n_int), 768) + 1
        else:
            n_pts = grid_per_blend + 1
        u = np.linspace(0.0, 1.0, n_pts)
        q, qp, qpp = piece.eval(u)
        if p_idx > 0:
            ds_list.append(0.0)  # duplicate junction knot
            mid_us.append((None, 0.0))
            stop_flags.append(junction_stops[p_idx - 1])
            stop_flags.extend([False] * (n_pts - 1))
        else:
            stop_flags.extend([True] + [False] * (n_pts - 1))
        qs.append(q)
        qps.append(qp)
        qpps.append(qpp)
        ds_list.extend(np.full(n_pts - 1, piece.span / (n_pts - 1)).tolist())
        mid_us.extend((p_idx, float(um)) for um in (u[:-1] + u[1:]) / 2.0)
    stop_flags[-1] = True
    q_grid = np.vstack(qs)
    qp_grid = np.vstack(qps)
    qpp_grid = np.vstack(qpps)
    ds = np.asarray(ds_list)
    stops = np.asarray(stop_flags, dtype=bool)
    k_total = len(q_grid)
    for k in np.nonzero(ds == 0.0)[0]:
        if stops[k] or stops[k + 1]:
            stops[k] = stops[k + 1] = True

    # constraint rows are collocated at interval midpoints (2nd order accurate)
    mid_rows = [(p, u) for p, u in mid_us if p is not None]
    q_mid = np.empty((len(mid_rows), q_grid.shape[1]))
    qp_mid = np.empty_like(q_mid)
    qpp_mid = np.empty_like(q_mid)
    cursor = 0
    for p_idx, piece in enumerate(pieces):
        us = np.array([u for p, u in mid_rows if p == p_idx])
        if len(us):
            q_m, qp_m, qpp_m = piece.eval(us)
            q_mid[cursor:cursor + len(us)] = q_m
            qp_mid[cursor:cursor + len(us)] = qp_m
            qpp_mid[cursor:cursor + len(us)] = qpp_m
            cursor += len(us)

    if counters is not None:
        counters.topp_grid_points += k_total
        counters.id_calls += 3 * (k_total + len(q_mid))

    zeros_k = np.zeros_like(q_grid)
    no_g = np.zeros(3)
    tau_lim = robot.tau_max * _SAFETY
    # static feasibility where the robot actually rests (path start/end)
    c_static = robot.inverse_dynamics_batch(q_grid[[0, -1]], zeros_k[[0, -1]],
                                            zeros_k[[0, -1]],
                                            f_ext=f_ext, gravity=gravity)
    if (np.abs(c_static) > tau_lim).any():
        return None

    # knot-level rows: velocity cap plus rows with vanishing s_ddot coefficient
    a_knot = robot.inverse_dynamics_batch(q_grid, zeros_k, qp_grid, gravity=no_g)
    b_knot = robot.inverse_dynamics_batch(q_grid, qp_grid, qpp_grid, gravity=no_g)
    c_knot = robot.inverse_dynamics_batch(q_grid, zeros_k, zeros_k,
                                          f_ext=f_ext, gravity=gravity)
    coef_a = np.concatenate([qp_grid, a_knot], axis=1)
    coef_b = np.concatenate([qpp_grid, b_knot], axis=1)
    coef_c = np.concatenate([np.zeros_like(qpp_grid), c_knot], axis=1)
    lims = np.concatenate([np.broadcast_to(robot.a_max * _SAFETY, qp_grid.shape),
                           np.broadcast_to(tau_lim, a_knot.shape)], axis=1)
    pure = np.abs(coef_a) <= 1e-7 * np.maximum(1.0, np.abs(coef_b))

    b_cap, b_floor = _pure_b_bounds(pure, coef_b, coef_c, lims)
    vel_cap = _velocity_cap(qp_grid, robot.v_max * _SAFETY)
    # tangent direction drifts between knots (arcs): cap with adjacent
    # midpoint values so sampled velocities stay inside the raw limit
    vel_cap_mid = _velocity_cap(qp_mid, robot.v_max * _SAFETY)
    nz_positions = np.nonzero(ds > 0.0)[0]
    for pos, mid in zip(nz_positions, vel_cap_mid):
        vel_cap[pos] = min(vel_cap[pos], mid)
        vel_cap[pos + 1] = min(vel_cap[pos + 1], mid)
    b_cap = np.minimum(b_cap, vel_cap)
    if (b_floor > b_cap + 1e-12).any() or (b_floor[stops] > 1e-12).any():
        return None

    alpha_k, beta_k, gamma_k, delta_k = _sdd_bound_coeffs(pure, coef_a, coef_b,
                                                          coef_c, lims)
    b_mvc = _mvc(alpha_k, beta_k, gamma_k, delta_k, b_cap)
    if (b_mvc < -1e-12).any():
        return None
    b_mvc = np.maximum(b_mvc, 0.0)
    b_mvc[stops] = 0.0

    # interval rows from midpoints: with s_ddot = (b_next - b_i)/(2 ds) and
    # b_mid = (b_i + b_next)/2 the row value is w_i b_i + w_n b_next + mc,
    # an affine form in the two endpoint values with bounded weights
    zeros_m = np.zeros_like(q_mid)
    a_tm = robot.inverse_dynamics_batch(q_mid, zeros_m, qp_mid, gravity=no_g)
    b_tm = robot.inverse_dynamics_batch(q_mid, qp_mid, qpp_mid, gravity=no_g)
    c_tm = robot.inverse_dynamics_batch(q_mid, zeros_m, zeros_m,
                                        f_ext=f_ext, gravity=gravity)
    ma = np.concatenate([qp_mid, a_tm], axis=1)
    mb = np.concatenate([qpp_mid, b_tm], axis=1)
    mc = np.concatenate([np.zeros_like(qpp_mid), c_tm], axis=1)
    mlims = np.concatenate([np.broadcast_to(robot.a_max * _SAFETY, qp_mid.shape),
                            np.broadcast_to(tau_lim, a_tm.shape)], axis=1)
    nz_ds = ds[ds > 0.0]
    half_inv = 1.0 / (2.0 * nz_ds)[:, None]
    w_i_nz = -ma * half_inv + mb / 2.0
    w_n_nz = ma * half_inv + mb / 2.0
    n_rows = ma.shape[1]
    n_int = k_total - 1
    w_i = np.zeros((n_int, n_rows))
    w_n = np.zeros((n_int, n_rows))
    w_c = np.zeros((n_int, n_rows))
    w_lim = np.full((n_int, n_rows), np.inf)
    nz_idx = np.nonzero(ds > 0.0)[0]
    w_i[nz_idx] = w_i_nz
    w_n[nz_idx] = w_n_nz
    w_c[nz_idx] = mc
    w_lim[nz_idx] = mlims

    # collocation leaves first-order excursions at knots between midpoints;
    # shave the offending rows by the observed excess and re-run the passes
    raw_lims = lims / _SAFETY
    b_prof = None
    verified = False
    for _ in range(6):
        b_back = _backward_pass(b_mvc, ds, w_i, w_n, w_c, w_lim)
        if b_back is None:
            return None
        b_prof = _forward_pass(b_back, ds, w_i, w_n, w_c, w_lim)
        if b_prof is None:
            return None
        excess = _profile_excess(b_prof, ds, coef_a, coef_b, coef_c, raw_lims)
        verified = bool((excess <= 1e-9).all())
        if verified:
            break
        shave = np.maximum(excess, 0.0) * 1.25 + np.where(excess > 1e-9,
                                                          0.002 * w_lim, 0.0)
        w_lim = np.maximum(w_lim - shave, 0.05 * mlims.min())

    # knot times
    sqrt_b = np.sqrt(np.maximum(b_prof, 0.0))
    t_knots = np.zeros(k_total)
    for k in range(k_total - 1):
        if ds[k] == 0.0:
            t_knots[k + 1] = t_knots[k]
            continue
        denom = sqrt_b[k] + sqrt_b[k + 1]
        if denom < 1e-12:
            return None  # grid interval cannot be traversed
        t_knots[k + 1] = t_knots[k] + 2.0 * ds[k] / denom

    traj = _sample_output(pieces, ds, t_knots, b_prof, sqrt_b, dt,
                          float(t_knots[-1]))
    return traj, verified


def _velocity_cap(qp: np.ndarray, v_max: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        per_joint = np.where(np.abs(qp) > _EPS, v_max / np.abs(qp), np.inf)
    return (per_joint.min(axis=1)) ** 2


def _pure_b_bounds(pure, coef_b, coef_c, lims):
    """Bounds on b from rows whose s_ddot coefficient vanishes."""
    k = coef_b.shape[0]
    cap = np.full(k, np.inf)
    floor = np.zeros(k)
    pos = pure & (coef_b > _EPS)
    neg = pure & (coef_b < -_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = np.where(pos, (lims - coef_c) / coef_b,
                      np.where(neg, (-lims - coef_c) / coef_b, np.inf))
        lo = np.where(pos, (-lims - coef_c) / coef_b,
                      np.where(neg, (lims - coef_c) / coef_b, -np.inf))
    cap = np.minimum(cap, hi.min(axis=1))
    floor = np.maximum(floor, lo.max(axis=1))
    # rows with both coefficients ~0 must hold outright
    degenerate = pure & (np.abs(coef_b) <= _EPS)
    bad = degenerate & (np.abs(coef_c) > lims)
    cap = np.where(bad.any(axis=1), -np.inf, cap)
    return cap, floor


def _sdd_bound_coeffs(pure, coef_a, coef_b, coef_c, lims):
    """Per-row affine bounds on s_ddot: lower alpha - beta*b, upper gamma - delta*b."""
    act = ~pure
    sign_pos = act & (coef_a > 0)
    sign_neg = act & (coef_a < 0)
    safe_a = np.where(act, np.where(coef_a == 0.0, 1.0, coef_a), 1.0)
    up_pos = (lims - coef_c) / safe_a
    lo_pos = (-lims - coef_c) / safe_a
    slope = coef_b / safe_a
    # rows with positive a: upper = up_pos - slope b, lower = lo_pos - slope b
    # rows with negative a: bounds swap
    gamma = np.where(sign_pos, up_pos, np.where(sign_neg, lo_pos, np.inf))
    alpha = np.where(sign_pos, lo_pos, np.where(sign_neg, up_pos, -np.inf))
    delta_u = np.where(act, slope, 0.0)
    beta = np.where(act, slope, 0.0)
    return alpha, beta, gamma, delta_u


def _mvc(alpha, beta, gamma, delta_u, b_cap) -> np.ndarray:
    """Max b with a nonempty s_ddot interval, per grid point (pairwise bounds)."""
    k, r = alpha.shape
    # lower_i(b) <= upper_j(b): b * (delta_j - beta_i) <= gamma_j - alpha_i
    slope = delta_u[:, None, :] - beta[:, :, None]        # (k, r_i, r_j)
    offset = gamma[:, None, :] - alpha[:, :, None]
    finite = np.isfinite(offset)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = np.where(finite & (slope > _EPS),
                         offset / np.where(slope > _EPS, slope, 1.0), np.inf)
        infeasible = finite & (np.abs(slope) <= _EPS) & (offset < 0)
    b_pairs = bound.reshape(k, -1).min(axis=1)
    bad = infeasible.reshape(k, -1).any(axis=1)
    out = np.minimum(b_cap, b_pairs)
    out[bad] = -np.inf
    return out


def _free_endpoint_bounds(w_free, rest, w_lim, significant):
    """[lo, hi] for the free endpoint from rows w_free * b + rest in ±w_lim."""
    pos = significant & (w_free > 0)
    neg = significant & (w_free < 0)
    lo, hi = 0.0, math.inf
    if pos.any():
        hi = min(hi, float(((w_lim[pos] - rest[pos]) / w_free[pos]).min()))
        lo = max(lo, float(((-w_lim[pos] - rest[pos]) / w_free[pos]).max()))
    if neg.any():
        hi = min(hi, float(((-w_lim[neg] - rest[neg]) / w_free[neg]).min()))
        lo = max(lo, float(((w_lim[neg] - rest[neg]) / w_free[neg]).max()))
    return lo, hi


def _significant(w_free, w_other):
    scale = np.maximum(np.abs(w_other), 1.0)
    return np.abs(w_free) > 1e-12 * scale


def _backward_pass(b_mvc, ds, w_i, w_n, w_c, w_lim) -> Optional[np.ndarray]:
    """Upper envelope: maximum-deceleration integration from the final stop.

    Rows that barely involve b_i bound the arrival value b_next instead and
    tighten the envelope before propagation.
    """
    k = len(b_mvc)
    out = np.empty(k)
    out[-1] = b_mvc[-1]
    for i in range(k - 2, -1, -1):
        cap = b_mvc[i]
        if ds[i] == 0.0:
            out[i] = min(cap, out[i + 1])
            continue
        sig_i = _significant(w_i[i], w_n[i]) & np.isfinite(w_lim[i])
        only_next = ~sig_i & _significant(w_n[i], w_i[i]) & np.isfinite(w_lim[i])
        b_next = out[i + 1]
        if only_next.any():
            _, hi_next = _free_endpoint_bounds(w_n[i], w_c[i], w_lim[i], only_next)
            b_next = min(b_next, hi_next)
        rest = w_n[i] * b_next + w_c[i]
        _, hi = _free_endpoint_bounds(w_i[i], rest, w_lim[i], sig_i)
        out[i] = max(min(cap, hi), 0.0)
    return out


def _forward_pass(b_back, ds, w_i, w_n, w_c, w_lim) -> Optional[np.ndarray]:
    """Greedy max-velocity integration under the interval rows."""
    k = len(b_back)
    out = np.empty(k)
    out[0] = 0.0
    for i in range(k - 1):
        if ds[i] == 0.0:
            out[i + 1] = min(out[i], b_back[i + 1])
            continue
        active = np.isfinite(w_lim[i])
        sig_n = _significant(w_n[i], w_i[i]) & active
        checked = active & ~sig_n
        rest = w_i[i] * out[i] + w_c[i]
        if (np.abs(rest[checked]) > w_lim[i][checked] + 1e-9).any():
            return None
        lo, hi = _free_endpoint_bounds(w_n[i], rest, w_lim[i], sig_n)
        nxt = min(b_back[i + 1], hi)
        if nxt < lo - 1e-12 or nxt < -1e-12:
            return None
        out[i + 1] = max(nxt, 0.0)
    return out


def _profile_excess(b_prof, ds, coef_a, coef_b, coef_c, raw_lims) -> np.ndarray:
    """Per-(interval, row) excess of knot-row values over the raw limits,
    evaluated with the interval acceleration at both interval ends."""
    k = len(b_prof)
    sdd = np.zeros(k - 1)
    nz = ds > 0.0
    sdd[nz] = (b_prof[1:] - b_prof[:-1])[nz] / (2.0 * ds[nz])
    excess = np.full((k - 1, coef_a.shape[1]), -np.inf)
    for side in (0, 1):
        idx = np.arange(k - 1) + side
        rows = (coef_a[idx] * sdd[:, None] + coef_b[idx] * b_prof[idx, None]
                + coef_c[idx])
        excess = np.maximum(excess, np.abs(rows) - raw_lims[idx])
    excess[~nz] = -np.inf   # duplicate-knot intervals carry no motion
    return excess


def _sample_output(pieces, ds, t_knots, b_prof, sqrt_b, dt, duration) -> Trajectory:
    """Sample q at uniform dt, then publish finite-difference derivatives."""
    n_out = max(int(math.ceil(duration / dt - 1e-9)), 1)
    k_total = len(t_knots)

    # piece-local coordinates of every knot (duplicate knots start a new piece)
    piece_idx = np.empty(k_total, dtype=int)
    local_s = np.empty(k_total)
    p_idx = 0
    s_in_piece = 0.0
    for k in range(k_total):
        piece_idx[k] = p_idx
        local_s[k] = s_in_piece
        if k < k_total - 1:
            if ds[k] == 0.0:
                p_idx += 1
                s_in_piece = 0.0
            else:
                s_in_piece += ds[k]

    n_joints = pieces[0].eval(np.array([0.0]))[0].shape[1]
    qs_out = np.empty((n_out + 1, n_joints))
    sdd = np.zeros(k_total - 1)
    for k in range(k_total - 1):
        if ds[k] > 0.0:
            sdd[k] = (b_prof[k + 1] - b_prof[k]) / (2.0 * ds[k])

    for m in range(n_out + 1):
        t = min(m * dt, duration)
        k = int(np.searchsorted(t_knots, t, side="right") - 1)
        k = min(max(k, 0), k_total - 2)
        while ds[k] == 0.0 and k < k_total - 2:
            k += 1
        tau = t - t_knots[k]
        tau = max(0.0, min(tau, t_knots[k + 1] - t_knots[k]))
        s_loc = local_s[k] + sqrt_b[k] * tau + 0.5 * sdd[k] * tau * tau
        piece = pieces[piece_idx[k]]
        s_loc = max(0.0, min(s_loc, piece.span))
        u = s_loc / piece.span if piece.span > 0 else 0.0
        q, _, _ = piece.eval(np.array([u]))
        qs_out[m] = q[0]
    qs_out[-1] = pieces[-1].eval(np.array([1.0]))[0][0]

    qd_out = np.zeros_like(qs_out)
    if n_out >= 2:
        qd_out[1:-1] = (qs_out[2:] - qs_out[:-2]) / (2.0 * dt)
    qdd_out = np.zeros_like(qs_out)
    if n_out >= 2:
        qdd_out[1:-1] = (qd_out[2:] - qd_out[:-2]) / (2.0 * dt)

    return Trajectory(dt, qs_out, qd_out, qdd_out)


def concatenate(legs: Sequence[Trajectory]) -> Trajectory:
    """Join per-leg trajectories; junction configurations must match."""
    if not legs:
        raise ValueError("nothing to concatenate")
    dt = legs[0].dt
    for leg in legs:
        if abs(leg.dt - dt) > 1e-12:
            raise ValueError("legs must share the sampling step")
    parts_q = [legs[0].q]
    parts_qd = [legs[0].qd]
    parts_qdd = [legs[0].qdd]
    goal_times = [0.0, legs[0].duration]
    for prev, leg in zip(legs, legs[1:]):
        if np.max(np.abs(prev.q[-1] - leg.q[0])) > 1e-9:
            raise ValueError("consecutive legs disagree at the junction")
        parts_q.append(leg.q[1:])
        parts_qd.append(leg.qd[1:])
        parts_qdd.append(leg.qdd[1:])
        goal_times.append(goal_times[-1] + leg.duration)
    return Trajectory(dt, np.vstack(parts_q), np.vstack(parts_qd),
                      np.vstack(parts_qdd), goal_times)
