"""Closed-loop simulation: guidance, receding-horizon planner and double-track plant."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import NoFallbackAvailable, PlanningError
from .geometry import wrap_angle
from .guidance import (Corridor, RelaxationLevel, ReferencePath, TacticalParameters, assemble_tactical,
                       build_corridor, build_reference, project_to_frenet, reference_disturbance, relax_corridor)
from .mpc import FallbackBuffer, PlannedTrajectory, RelaxationMonitor, RelaxationRequest, plan_step
from .qp import SolveStatus
from .scenario import Scenario
from .vehicle import PlantState, contour_collides, plant_step
from .world import Pose2, build_visibility_graph, shortest_heading_path

log = logging.getLogger(__name__)

CYCLE_COLUMNS = ("t", "status", "objective", "iterations", "slackMax", "relaxationLevel", "s", "e", "dPsi",
                 "beta", "yawRate", "v", "deltaF", "deltaR", "eMin", "eMax", "fallback", "emergencyStop")
PLANT_COLUMNS = ("t", "x", "y", "psi", "vx", "vy", "yawRate", "deltaF", "deltaR", "cmdDeltaF", "cmdDeltaR",
                 "collision")
TIMING_COLUMNS = ("t", "solveTime", "cycleTime")


@dataclass(frozen=True)
class RelaxationRecord:
    """One corridor escalation: the Normal-level attempt and the Emergency re-solve of the same cycle."""

    request: RelaxationRequest
    normal_status: SolveStatus
    emergency_status: SolveStatus
    normal_corridor: Corridor
    relaxed_corridor: Corridor


@dataclass
class RunResult:
    name: str
    status: str  # "ok", "collision" or "planning_failure"
    collision: bool
    final_pose: Pose2
    final_pose_error: tuple[float, float]
    max_slack: float
    infeasible_cycles: int
    emergency_stops: int
    relaxation_requests: int
    mean_solve_time: float
    max_solve_time: float
    mean_cycle_time: float
    cycles: list[dict] = field(default_factory=list)
    plant: list[dict] = field(default_factory=list)
    timing: list[dict] = field(default_factory=list)
    plans: list[PlannedTrajectory | None] = field(default_factory=list)
    relaxations: list[RelaxationRecord] = field(default_factory=list)
    message: str = ""
    reference: ReferencePath | None = None
    scenario: Scenario | None = None

    @property
    def succeeded(self) -> bool:
        return self.status == "ok"


def reference_for(sc: Scenario) -> tuple[ReferencePath, float]:
    """Reference polyline (graph search or explicit) extended past the goal; returns it with the goal station."""
    if sc.reference is not None:
        pts = [np.asarray(p, float) for p in sc.reference]
    else:
        inflation = sc.vehicle.half_width + sc.guidance.inflation_margin
        graph = build_visibility_graph(sc.world, sc.start, sc.goal, inflation)
        pts = list(shortest_heading_path(graph, sc.start, sc.goal, sc.guidance.w_start, sc.guidance.w_end).points)
    s_goal = float(np.sum(np.hypot(*np.diff(np.asarray(pts, float), axis=0).T)))
    ext = sc.guidance.goal_extension
    h = sc.goal.heading
    pts.append(np.asarray(pts[-1], float) + max(ext, 1e-3) * np.array([math.cos(h), math.sin(h)]))
    return build_reference(pts), s_goal


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_trace(rows: list[dict], columns, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_traces(result: RunResult, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "cycles.csv", out / "plant.csv", out / "timing.csv"]
    write_trace(result.cycles, CYCLE_COLUMNS, files[0])
    write_trace(result.plant, PLANT_COLUMNS, files[1])
    write_trace(result.timing, TIMING_COLUMNS, files[2])
    return files


class _Loop:
    """Mutable state of one closed-loop run."""

    def __init__(self, sc: Scenario, path: ReferencePath, s_goal: float):
        self.sc = sc
        self.path = path
        self.s_goal = s_goal
        p = sc.vehicle
        self.state = PlantState(sc.start.x, sc.start.y, sc.start.heading, 0.0, 0.0, 0.0)
        v0 = sc.speed.target(0.0)
        self.state = replace(self.state, vx=v0)
        self.buffer = FallbackBuffer()
        self.monitor = RelaxationMonitor()
        self.level = RelaxationLevel.NORMAL
        self.u_cmd = np.zeros(2)
        self.active: PlannedTrajectory | None = None
        self.emergency = False
        self.forced_until = -1.0
        self.counts = dict(infeasible=0, emergency=0, relax=0)
        self.max_slack = 0.0
        self.relaxations: list[RelaxationRecord] = []
        self.params = p

    # -- helpers -----------------------------------------------------------------
    def frenet_state(self):
        st = self.state
        fr = project_to_frenet(self.path, (st.x, st.y))
        beta = st.side_slip
        return fr, np.array([beta, st.yaw_rate, wrap_angle(st.psi - fr.heading_ref), fr.e])

    def target_speed(self, t: float, s: float) -> float:
        if self.emergency:
            return 0.0
        return self.sc.speed.limited(t, self.s_goal - s)

    def stations(self, t: float, s0: float, v0: float) -> np.ndarray:
        sc = self.sc
        p, Ts = sc.mpc.horizon, sc.mpc.Ts
        prev = self.active
        out = [s0]
        for i in range(p):
            ti = t + i * Ts
            vt = self.target_speed(ti, out[-1])
            v = vt + (v0 - vt) * math.exp(-sc.speed.gain * i * Ts)
            factor = 1.0
            if prev is not None and not prev.emergency_stop and i + 1 < len(prev.states):
                b, _, dpsi, _ = prev.states[i + 1]
                factor = math.cos(b + dpsi)
            out.append(min(out[-1] + max(v, 0.0) * Ts * factor, self.path.length))
        return np.asarray(out)

    def goal_alignment(self, stations) -> np.ndarray:
        """Heading-error targets that rotate the vehicle to the goal heading on the final approach."""
        d = self.sc.guidance.goal_align_distance
        out = np.zeros(len(stations))
        if d <= 0.0:
            return out
        for i, s in enumerate(stations):
            w = 1.0 if self.s_goal - s <= d else 0.0
            out[i] = w * wrap_angle(self.sc.goal.heading - self.path.heading_at(min(s, self.s_goal - 1e-9)))
        return out

    def tactical(self, t: float) -> TacticalParameters:
        reps = [e.report for e in self.sc.events if e.kind == "degradation" and e.time <= t + 1e-9]
        return assemble_tactical(self.sc.guidance.comfort_profile, reps, self.sc.mpc.tactical)

    def corridor(self, stations):
        sc, g = self.sc, self.sc.guidance
        vp = sc.vehicle
        c = build_corridor(self.path, sc.world, g.e_default_min, g.e_default_max, stations, vp.l_f, vp.l_r,
                           vp.half_width + g.margin, vp.half_width + g.legal_margin, strict=False)
        if self.level is RelaxationLevel.EMERGENCY:
            c = relax_corridor(c, (g.emergency_e_min, g.emergency_e_max))
        return c

    def forced(self, t: float) -> bool:
        Ts = self.sc.mpc.Ts
        for e in self.sc.events:
            if e.kind == "infeasible" and e.time - 1e-9 <= t < e.time + e.cycles * Ts - 1e-9:
                return True
        return False

    # -- one MPC cycle -------------------------------------------------------------
    def cycle(self, k: int):
        sc = self.sc
        t = k * sc.mpc.Ts
        t_start = time.perf_counter()
        fr, x0 = self.frenet_state()
        v = self.state.speed
        stations = self.stations(t, fr.s, v)
        tactical = self.tactical(t)
        dist = reference_disturbance(self.path, stations)
        refs = np.zeros((sc.mpc.horizon, 6))
        refs[:, 1] = dist[1:] / sc.mpc.Ts
        refs[:, 2] = self.goal_alignment(stations[1:])
        forced = self.forced(t)

        def solve(corr):
            if forced:
                corr = corr.with_hard_collapse(1)
            return plan_step(x0, corr, tactical, refs, self.u_cmd, v, sc.mpc, sc.vehicle, dist, t)

        corridor = self.corridor(stations)
        traj, report = solve(corridor)
        solve_time = report.solve_time
        if not forced:
            req = self.monitor.observe(report, corridor, t)
            if req is not None:
                self.counts["relax"] += 1
                log.info("t=%.2f corridor relaxation requested (steps %s)", t, req.collapsed_steps)
                self.level = RelaxationLevel.EMERGENCY
                normal, normal_status = corridor, report.status
                corridor = self.corridor(stations)
                traj, report = solve(corridor)
                solve_time += report.solve_time
                self.relaxations.append(RelaxationRecord(req, normal_status, report.status, normal, corridor))
                self.monitor.observe(report, corridor, t)
        active = self.buffer.select(report, traj, t)  # may raise NoFallbackAvailable
        ok = report.status is SolveStatus.OPTIMAL
        if not ok:
            self.counts["infeasible"] += 1
        if active.emergency_stop and not self.emergency:
            self.counts["emergency"] += 1
        self.emergency = active.emergency_stop
        if ok:
            self.max_slack = max(self.max_slack, traj.slack_max)
        self.active = active
        self.u_cmd = np.array(active.first_input, dtype=float)
        cycle_time = time.perf_counter() - t_start
        row = dict(t=t, status=report.status.value, objective=traj.objective if ok else float("nan"),
                   iterations=report.iterations, slackMax=traj.slack_max if ok else float("nan"),
                   relaxationLevel=corridor.level.value, s=fr.s, e=fr.e, dPsi=x0[2], beta=x0[0], yawRate=x0[1],
                   v=v, deltaF=self.u_cmd[0], deltaR=self.u_cmd[1], eMin=corridor.e_min[1],
                   eMax=corridor.e_max[1], fallback=not ok, emergencyStop=self.emergency)
        return row, dict(t=t, solveTime=solve_time, cycleTime=cycle_time), active

    # -- one plant step --------------------------------------------------------------
    def plant(self, t: float):
        sc, vp = self.sc, self.sc.vehicle
        fr_s = project_to_frenet(self.path, (self.state.x, self.state.y)).s if self.sc.speed.stop_at_goal else 0.0
        vt = self.target_speed(t, fr_s)
        force = vp.m * sc.speed.gain * (vt - self.state.vx)
        torque = 0.25 * force * vp.wheel_radius
        self.state = plant_step(self.state, (self.u_cmd[0], self.u_cmd[1], (torque,) * 4), sc.plant_dt, vp)
        return contour_collides(self.state, vp, sc.world)


def _failed(sc: Scenario, message: str, **kw) -> RunResult:
    pose = Pose2(sc.start.x, sc.start.y, sc.start.heading)
    return RunResult(sc.name, "planning_failure", False, pose, _pose_error(pose, sc.goal), 0.0, 0, 0, 0,
                     float("nan"), float("nan"), float("nan"), message=message, scenario=sc, **kw)


def _pose_error(pose: Pose2, goal: Pose2) -> tuple[float, float]:
    return float(math.hypot(pose.x - goal.x, pose.y - goal.y)), float(abs(wrap_angle(pose.heading - goal.heading)))


def run_scenario(sc: Scenario) -> RunResult:
    """Run guidance once, then the planner every ``Ts`` and the plant every ``plant_dt``."""
    try:
        path, s_goal = reference_for(sc)
    except PlanningError as exc:
        return _failed(sc, f"{type(exc).__name__}: {exc}")

    loop = _Loop(sc, path, s_goal)
    collision = contour_collides(loop.state, sc.vehicle, sc.world)
    cycles, plant_rows, timing, plans = [], [], [], []
    n_sub, n_cycles = sc.substeps, sc.cycles
    message, failed = "", False
    for j in range(sc.plant_steps):
        if j % n_sub == 0 and j // n_sub < n_cycles:
            try:
                row, trow, active = loop.cycle(j // n_sub)
            except NoFallbackAvailable as exc:
                message, failed = f"NoFallbackAvailable at t={j * sc.plant_dt:.3f}: {exc}", True
                break
            cycles.append(row)
            timing.append(trow)
            plans.append(active)
        hit = loop.plant(j * sc.plant_dt)
        collision = collision or hit
        st = loop.state
        plant_rows.append(dict(t=(j + 1) * sc.plant_dt, x=st.x, y=st.y, psi=st.psi, vx=st.vx, vy=st.vy,
                               yawRate=st.yaw_rate, deltaF=st.wheel_angles[0], deltaR=st.wheel_angles[2],
                               cmdDeltaF=loop.u_cmd[0], cmdDeltaR=loop.u_cmd[1], collision=hit))

    st = loop.state
    pose = Pose2(st.x, st.y, st.psi)
    solve = np.array([r["solveTime"] for r in timing]) if timing else np.array([np.nan])
    cyc = np.array([r["cycleTime"] for r in timing]) if timing else np.array([np.nan])
    status = "planning_failure" if failed else ("collision" if collision else "ok")
    return RunResult(
        name=sc.name, status=status, collision=bool(collision), final_pose=pose,
        final_pose_error=_pose_error(pose, sc.goal), max_slack=loop.max_slack,
        infeasible_cycles=loop.counts["infeasible"], emergency_stops=loop.counts["emergency"],
        relaxation_requests=loop.counts["relax"], mean_solve_time=float(np.mean(solve)),
        max_solve_time=float(np.max(solve)), mean_cycle_time=float(np.mean(cyc)), cycles=cycles,
        plant=plant_rows, timing=timing, plans=plans, relaxations=loop.relaxations, message=message, reference=path, scenario=sc,
    )


@dataclass(frozen=True)
class ProfileRow:
    name: str
    status: str
    max_delta_f: float
    max_delta_r: float
    sign_agreement: float
    max_yaw_rate: float
    max_beta: float


def sign_agreement(delta_f, delta_r, threshold: float = 1e-3) -> float:
    """Share of samples with both axles steered where front and rear signs agree."""
    df, dr = np.asarray(delta_f, float), np.asarray(delta_r, float)
    both = (np.abs(df) > threshold) & (np.abs(dr) > threshold)
    if not np.any(both):
        return float("nan")
    return float(np.mean(np.sign(df[both]) == np.sign(dr[both])))


def profile_row(name: str, r: RunResult) -> ProfileRow:
    df = np.array([c["deltaF"] for c in r.cycles]) if r.cycles else np.zeros(1)
    dr = np.array([c["deltaR"] for c in r.cycles]) if r.cycles else np.zeros(1)
    yaw = np.array([p["yawRate"] for p in r.plant]) if r.plant else np.zeros(1)
    beta = np.array([math.atan2(p["vy"], p["vx"]) if math.hypot(p["vx"], p["vy"]) > 1e-9 else 0.0
                     for p in r.plant]) if r.plant else np.zeros(1)
    return ProfileRow(name, r.status, float(np.max(np.abs(df))), float(np.max(np.abs(dr))),
                      sign_agreement(df, dr), float(np.max(np.abs(yaw))), float(np.max(np.abs(beta))))


def compare_weight_profiles(sc: Scenario, profiles) -> list[ProfileRow]:
    """Run ``sc`` once per ``(name, TacticalParameters | dict of overrides)`` profile."""
    profiles = list(profiles)
    if len(profiles) < 2:
        raise ValueError("need at least two profiles")
    rows = []
    for name, prof in profiles:
        tac = prof if isinstance(prof, TacticalParameters) else replace(sc.mpc.tactical, **prof)
        try:
            r = run_scenario(replace(sc, mpc=replace(sc.mpc, tactical=tac)))
            rows.append(profile_row(name, r))
        except (PlanningError, ValueError) as exc:
            log.warning("profile %s failed: %s", name, exc)
            nan = float("nan")
            rows.append(ProfileRow(name, "error", nan, nan, nan, nan, nan))
    return rows


def format_table(rows: list[ProfileRow]) -> str:
    head = f"{'profile':<16}{'status':<18}{'max|df|':>10}{'max|dr|':>10}{'agree':>8}{'max|r|':>9}{'max|b|':>9}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.name:<16}{r.status:<18}{r.max_delta_f:>10.4f}{r.max_delta_r:>10.4f}"
                     f"{r.sign_agreement:>8.3f}{r.max_yaw_rate:>9.4f}{r.max_beta:>9.4f}")
    return "\n".join(lines)
