"""Training, closed-loop evaluation, baselines, studies, and reports.

Evaluation is chunked: the policy predicts once, the simulator executes the
whole action chunk (or a receding-horizon prefix), and prediction repeats
until success or the horizon. Paired comparisons (learned decoder vs the
hardcoded geometric pipeline) consume identical episode seeds and identical
perturbation draws, both derived from the root seed by counter-based
splitting.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import datasets as ds
from . import geometry as geo
from . import policy as pol
from . import simworld as sw
from . import tensornet as tn
from .seeding import derive_seed

log = logging.getLogger(__name__)

WILSON_Z = 1.95996


class HarnessError(ValueError):
    pass


class TrainDiverged(RuntimeError):
    """Numeric fault during training; a last-good checkpoint was kept."""


def wilson_interval(k: int, n: int, z: float = WILSON_Z):
    """Wilson score interval for k successes in n trials, clamped to [0, 1]."""
    if n < 1:
        raise HarnessError("wilson_interval needs n >= 1")
    if not 0 <= k <= n:
        raise HarnessError(f"need 0 <= k <= n, got k={k}, n={n}")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# --- training ---


@dataclass
class TrainConfig:
    policy: pol.PolicyConfig
    steps: int = 3000
    batch_size: int = 16
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 1e-4
    warmup_steps: int = 100
    seed: int = 0
    log_every: int = 100
    dataset_path: str | None = None
    # Zero-mean Gaussian jitter added to observation tokens and state vectors
    # per training batch: smooths the learned map over the observation
    # neighborhoods the policy visits when it drifts off the expert manifold.
    feature_noise: float = 0.0

    def __post_init__(self):
        if self.steps != 0 and self.steps <= self.warmup_steps:
            raise HarnessError("steps must exceed warmup_steps")
        if self.batch_size < 1:
            raise HarnessError("batch_size must be >= 1")


def train(dataset: ds.DemoDataset, cfg: TrainConfig, ckpt_path: str | None = None,
          curve_path: str | None = None):
    """Behavior-clone a policy on a demonstration dataset.

    Returns (policy, curve) where curve rows are (step, loss_traj, loss_act,
    loss_total, lr). Deterministic per cfg.seed. On a numeric fault the last
    logged parameters are written to ckpt_path and TrainDiverged is raised.
    """
    policy_cfg = replace(cfg.policy, seed=derive_seed(cfg.seed, "init"))
    policy = pol.build_variant(policy_cfg)
    variant = policy_cfg.variant

    windows = [w for demo in dataset.demos for w in ds.make_windows(demo, policy_cfg.horizon)]
    if cfg.steps > 0 and not windows:
        raise HarnessError("dataset has no training windows")
    full = pol.collate(windows, variant, dataset.camera, dataset.scene) if windows else None

    opt = tn.OptimizerState(
        tn.OptimizerConfig(
            lr=cfg.lr, betas=cfg.betas, eps=cfg.eps, weight_decay=cfg.weight_decay,
            warmup_steps=cfg.warmup_steps, total_steps=max(cfg.steps, 1),
        )
    )
    shuffle_rng = np.random.default_rng(derive_seed(cfg.seed, "shuffle"))
    order = np.array([], dtype=int)
    curve = []
    last_good = _param_snapshot(policy)
    n = len(windows)

    for step in range(1, cfg.steps + 1):
        while order.size < cfg.batch_size:
            order = np.concatenate([order, shuffle_rng.permutation(n)])
        idx, order = order[: cfg.batch_size], order[cfg.batch_size :]
        batch = {k: (v[idx] if v is not None else None) for k, v in full.items()}
        if cfg.feature_noise > 0.0:
            for key in ("lang", "visual", "depth", "state"):
                if batch[key] is not None:
                    batch[key] = batch[key] + shuffle_rng.normal(
                        0.0, cfg.feature_noise, size=batch[key].shape
                    )
        try:
            with tn.GradientTape() as tape:
                total, traj, act = policy.loss(batch)
            grads = policy.params.grads_by_name(tn.backward(tape, total))
            tn.adamw_step(policy.params, grads, opt)
        except tn.NumericFaultError as e:
            _restore_snapshot(policy, last_good)
            if ckpt_path:
                tn.save_checkpoint(ckpt_path, policy.params, policy_cfg.config_hash(),
                                   step - 1, extra={"policy_cfg": policy_cfg.to_json()})
            raise TrainDiverged(f"numeric fault at step {step}: {e}") from e
        if step == 1 or step % cfg.log_every == 0 or step == cfg.steps:
            row = (step, float(traj.data), float(act.data), float(total.data),
                   tn.lr_at(opt.config, step))
            curve.append(row)
            last_good = _param_snapshot(policy)
            log.debug("step %d traj %.4f act %.4f total %.4f lr %.2e", *row)

    if ckpt_path:
        tn.save_checkpoint(ckpt_path, policy.params, policy_cfg.config_hash(), cfg.steps,
                           extra={"policy_cfg": policy_cfg.to_json()})
    if curve_path:
        with open(curve_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "loss_traj", "loss_act", "loss_total", "lr"])
            writer.writerows(curve)
    return policy, curve


def _param_snapshot(policy):
    return {name: t.data.copy() for name, t in policy.params.items()}


def _restore_snapshot(policy, snapshot):
    for name, data in snapshot.items():
        policy.params[name].data = data.copy()


def load_policy(path: str) -> pol.Policy:
    """Rebuild a policy from a ckpt_v1 checkpoint written by train()."""
    manifest, _ = tn.load_checkpoint(path)
    extra = manifest.get("extra") or {}
    if "policy_cfg" not in extra:
        raise HarnessError("checkpoint manifest lacks a policy config")
    policy = pol.build_variant(pol.PolicyConfig.from_json(extra["policy_cfg"]))
    tn.load_into(policy.params, path)
    return policy


# --- evaluation ---


@dataclass
class EvalReport:
    successes: int
    episodes: int
    success_rate: float
    wilson_lo: float
    wilson_hi: float
    chart_violation_rate: float
    mean_traj_error: float | None
    episode_lengths: list = field(default_factory=list)
    traces: list | None = None

    def to_json(self) -> dict:
        return {
            "successes": self.successes,
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "wilson_lo": self.wilson_lo,
            "wilson_hi": self.wilson_hi,
            "chart_violation_rate": self.chart_violation_rate,
            "mean_traj_error": self.mean_traj_error,
            "episode_lengths": list(self.episode_lengths),
        }


def _depth_mode_of(policy) -> str:
    cfg = getattr(policy, "cfg", None)
    return cfg.variant.depth_mode if cfg is not None else "metric"


def _tracks_camera_pose(policy) -> bool:
    cfg = getattr(policy, "cfg", None)
    return (
        cfg is not None
        and cfg.variant.target == "traj_camera_se3"
        and cfg.variant.rotation_param == "axis_angle"
    )


def rollout(
    policy,
    scene: sw.SceneSpec,
    task: sw.TaskSpec,
    episodes: int,
    seed: int,
    sim_cfg: sw.SimConfig | None = None,
    camera: sw.CameraModel | None = None,
    chunk_steps: int | None = None,
    collect_traces: bool = False,
) -> EvalReport:
    """Closed-loop evaluation: predict a chunk, execute, repeat.

    chunk_steps < H gives receding-horizon execution (diagnostics); the
    default executes the full chunk before re-predicting. The policy object
    needs .act(features, state_vec) -> PolicyOutput; objects exposing
    .act_on_state(sim_state) (the expert wrapper) are driven from the raw
    state instead.
    """
    camera = camera or sw.default_camera()
    sim = sw.Simulator(scene, task, sim_cfg)
    depth_mode = _depth_mode_of(policy)
    track_tau = _tracks_camera_pose(policy)
    t_wc = geo.se3_inverse(camera.extrinsic)

    successes = 0
    total_pred_rows = 0
    violating_rows = 0
    traj_err_sum, traj_err_n = 0.0, 0
    lengths = []
    traces = [] if collect_traces else None

    for i in range(episodes):
        state = sim.reset(derive_seed(seed, "episode", i))
        if hasattr(policy, "reset_episode"):
            policy.reset_episode(i)
        success = False
        cam_history = [geo.se3_to_pose(t_wc @ state.ee_pose)]
        pending = []
        while not success and state.step_count < task.horizon_limit:
            if hasattr(policy, "act_on_state"):
                out = policy.act_on_state(state)
            else:
                features = sw.featurize(state, task, scene, camera, depth_mode)
                out = policy.act(features, state.state_vec())
            if out.tau is not None:
                total_pred_rows += out.tau.shape[0]
                violating_rows += out.chart_violations
                if track_tau:
                    pending.append((state.step_count, out.tau.copy()))
            n_exec = chunk_steps or out.chunk.shape[0]
            for h in range(min(n_exec, out.chunk.shape[0])):
                row = out.chunk[h]
                action = geo.RelativeAction(row[:3], row[3:6], 1.0 if row[6] > 0.5 else 0.0)
                state = sim.step(state, action)
                cam_history.append(geo.se3_to_pose(t_wc @ state.ee_pose))
                if sim.check_success(state):
                    success = True
                    break
                if state.step_count >= task.horizon_limit:
                    break
        for t0, tau in pending:
            for h in range(tau.shape[0]):
                idx = t0 + h + 1
                if idx < len(cam_history):
                    traj_err_sum += float(np.abs(tau[h] - cam_history[idx]).sum())
                    traj_err_n += 1
        successes += int(success)
        lengths.append(state.step_count)
        if collect_traces:
            traces.append({"episode": i, "success": success, "steps": state.step_count})

    lo, hi = wilson_interval(successes, episodes)
    return EvalReport(
        successes=successes,
        episodes=episodes,
        success_rate=successes / episodes,
        wilson_lo=lo,
        wilson_hi=hi,
        chart_violation_rate=(violating_rows / total_pred_rows) if total_pred_rows else 0.0,
        mean_traj_error=(traj_err_sum / traj_err_n) if traj_err_n else None,
        episode_lengths=lengths,
        traces=traces,
    )


class ExpertPolicy:
    """Oracle policy adapter: one expert action per prediction."""

    def __init__(self, scene: sw.SceneSpec, task: sw.TaskSpec,
                 expert_cfg: sw.ExpertConfig | None = None):
        self._expert = sw.ScriptedExpert(scene, task, expert_cfg)

    def reset_episode(self, episode_index: int):
        self._expert.reset()

    def act_on_state(self, state: sw.SimState) -> pol.PolicyOutput:
        a = self._expert.action(state)
        chunk = np.concatenate([a.dp, a.dtheta, [a.gripper]]).reshape(1, 7)
        return pol.PolicyOutput(chunk=chunk, tau=None, h_traj=None, chart_violations=0)


# --- perturbed-predictor protocol ---


@dataclass
class PerturbSpec:
    """Noise injected at the predictor output, plus execution-side gripper lag.

    Translation noise is per position dimension (meters), rotation noise per
    axis-angle dimension (radians). The same draws corrupt both the learned
    decoder's conditioning stream and the hardcoded pipeline's poses.
    """

    sigma_p: float = 0.005
    sigma_theta: float = math.radians(2.0)
    gripper_latency: int = 2


def _perturbation(spec: PerturbSpec, root_seed: int, episode: int, chunk: int, horizon: int):
    rng = np.random.default_rng(derive_seed(root_seed, "perturb", episode, chunk))
    eps = np.zeros((horizon, 6))
    eps[:, :3] = rng.normal(0.0, spec.sigma_p, size=(horizon, 3))
    eps[:, 3:] = rng.normal(0.0, spec.sigma_theta, size=(horizon, 3))
    return eps


class PerturbedTrajectoryPolicy:
    """Wraps a camera-frame SE(3) policy; corrupts the predictor output.

    The pose-space noise eps is mapped into the hidden states through the
    linear head's pseudo-inverse, so head(h_traj + dh) = tau + eps exactly:
    the decoder conditions on hidden states that decode to the same
    corrupted trajectory the hardcoded pipeline reads. Gripper commands are
    additionally delayed by the spec's latency (queue persists across chunks
    within an episode).
    """

    def __init__(self, policy: pol.Policy, perturb: PerturbSpec, root_seed: int):
        if not _tracks_camera_pose(policy):
            raise HarnessError("perturbed protocol needs a camera-frame axis-angle policy")
        self._policy = policy
        self._perturb = perturb
        self._root_seed = root_seed
        self.cfg = policy.cfg
        self._head_pinv = np.linalg.pinv(policy.params["pred.head.w"].data)  # (6, D)
        self._episode = 0
        self._chunk = 0
        self._queue = deque()

    def reset_episode(self, episode_index: int):
        self._episode = episode_index
        self._chunk = 0
        self._queue = deque([0.0] * self._perturb.gripper_latency)

    def act(self, features, state_vec) -> pol.PolicyOutput:
        p = self._policy
        h3d = p.encode_features(features)
        h_traj, _ = p.predict_trajectory(h3d)
        eps = _perturbation(self._perturb, self._root_seed, self._episode, self._chunk,
                            p.cfg.horizon)
        self._chunk += 1
        h_noisy = tn.Tensor(h_traj.data + eps @ self._head_pinv)
        tau = p.trajectory_head(h_noisy).data.copy()
        chunk = p.decode_actions(h_noisy, np.asarray(state_vec, dtype=float).reshape(1, 7)).data.copy()
        for h in range(chunk.shape[0]):
            self._queue.append(chunk[h, 6])
            chunk[h, 6] = self._queue.popleft()
        violations = int(np.sum(np.linalg.norm(tau[:, 3:6], axis=1) >= math.pi))
        return pol.PolicyOutput(chunk=chunk, tau=tau, h_traj=h_noisy.data.copy(),
                                chart_violations=violations)


# --- hardcoded geometric pipeline (the decoder ablation) ---


def _privileged_gripper(state: sw.SimState, scene: sw.SceneSpec, task: sw.TaskSpec,
                        prev: float) -> float:
    """Simulator-state gripper rule unavailable to the learned policy."""
    ee = state.ee_pose[:3, 3]
    cont = scene.container(task.target_container_id)
    if np.linalg.norm(ee - cont.center) <= cont.accept_radius:
        return 0.0
    obj = scene.object(task.target_object_id)
    if np.linalg.norm(ee - state.object_poses[task.target_object_id]) <= obj.grasp_radius:
        return 1.0
    return prev


class _OracleTrajectory:
    """Ground-truth camera-frame lookahead from a synced scripted expert."""

    def __init__(self, scene, task, camera, horizon):
        self.scene, self.task, self.camera, self.horizon = scene, task, camera, horizon
        self._shadow = sw.Simulator(scene, task)  # noiseless lookahead world
        self._expert = sw.ScriptedExpert(scene, task, sw.ExpertConfig(gripper_latency_steps=0))
        self._t_wc = geo.se3_inverse(camera.extrinsic)

    def reset_episode(self):
        self._expert.reset()
        self._shadow.reset(0)  # reseed the shadow noise stream (unused: noiseless)

    def observe(self, state: sw.SimState):
        """Advance the expert's phase along the executed trajectory."""
        self._expert.action(state)

    def lookahead(self, state: sw.SimState):
        clone_expert = copy.deepcopy(self._expert)
        s = state.copy()
        rows = np.zeros((self.horizon, 6))
        for h in range(self.horizon):
            if s.step_count < self.task.horizon_limit:
                s = self._shadow.step(s, clone_expert.action(s))
            rows[h] = geo.se3_to_pose(self._t_wc @ s.ee_pose)
        return rows


def closed_form_baseline(
    policy: pol.Policy | None,
    scene: sw.SceneSpec,
    task: sw.TaskSpec,
    episodes: int,
    seed: int,
    sim_cfg: sw.SimConfig | None = None,
    camera: sw.CameraModel | None = None,
    perturb: PerturbSpec | None = None,
    oracle: bool = False,
) -> EvalReport:
    """Execute predicted camera-frame poses through closed-form geometry.

    Ignores the learned decoder: each predicted pose row is lifted to the
    world frame via the known extrinsic and converted to relative actions by
    chaining the exact recovery map; gripper open/close comes from
    privileged simulator proximity. With oracle=True the trajectory comes
    from an expert lookahead instead of the policy. Episode seeds and
    perturbation draws match rollout()'s, so comparisons are paired.
    """
    if not oracle:
        if policy is None or not _tracks_camera_pose(policy):
            raise HarnessError("closed-form baseline needs a camera-frame axis-angle checkpoint")
    camera = camera or sw.default_camera()
    sim = sw.Simulator(scene, task, sim_cfg)
    oracle_traj = _OracleTrajectory(scene, task, camera, _horizon_of(policy, oracle)) if oracle else None
    depth_mode = _depth_mode_of(policy) if policy is not None else "metric"
    latency = perturb.gripper_latency if perturb else 0

    successes = 0
    lengths = []
    for i in range(episodes):
        state = sim.reset(derive_seed(seed, "episode", i))
        if oracle:
            oracle_traj.reset_episode()
        queue = deque([0.0] * latency)
        prev_g = 0.0
        success = False
        chunk_idx = 0
        while not success and state.step_count < task.horizon_limit:
            if oracle:
                tau = oracle_traj.lookahead(state)
            else:
                features = sw.featurize(state, task, scene, camera, depth_mode)
                tau = policy.act(features, state.state_vec()).tau
            if perturb is not None:
                tau = tau + _perturbation(perturb, seed, i, chunk_idx, tau.shape[0])
            chunk_idx += 1

            world_poses = [geo.camera_to_world(geo.pose_to_se3(row), camera.extrinsic) for row in tau]
            prev_pose = state.ee_pose
            actions = []
            for w in world_poses:
                actions.append(geo.relative_action(prev_pose, w))
                prev_pose = w
            for a in actions:
                g_raw = _privileged_gripper(state, scene, task, prev_g)
                prev_g = g_raw
                queue.append(g_raw)
                g = queue.popleft()
                state = sim.step(state, geo.RelativeAction(a.dp, a.dtheta, g))
                if oracle:
                    oracle_traj.observe(state)
                if sim.check_success(state):
                    success = True
                    break
                if state.step_count >= task.horizon_limit:
                    break
        successes += int(success)
        lengths.append(state.step_count)

    lo, hi = wilson_interval(successes, episodes)
    return EvalReport(
        successes=successes,
        episodes=episodes,
        success_rate=successes / episodes,
        wilson_lo=lo,
        wilson_hi=hi,
        chart_violation_rate=0.0,
        mean_traj_error=None,
        episode_lengths=lengths,
    )


def _horizon_of(policy, oracle: bool) -> int:
    if policy is not None:
        return policy.cfg.horizon
    if not oracle:
        raise HarnessError("need a policy or oracle=True")
    return 8


# --- studies ---


STUDY_KINDS = ("ladder", "rotation", "depth", "scaling", "closed_form")

LADDER_TARGETS = ("no_traj", "aux_traj", "traj_2d", "traj_3d_pos", "traj_world_se3", "traj_camera_se3")


@dataclass
class StudySpec:
    kind: str
    family: str = "goal"
    seeds: tuple = (0, 1, 2)
    episodes: int = 50
    demos: int = 50
    steps: int = 3000
    batch_size: int = 16
    sigma_p: float = 0.0
    root_seed: int = 0
    perturb: PerturbSpec | None = None

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise HarnessError(f"unknown study kind {self.kind!r}")
        if not self.seeds:
            raise HarnessError("study needs at least one seed")
        if self.kind == "closed_form" and self.perturb is None:
            self.perturb = PerturbSpec()

    @classmethod
    def from_json(cls, doc: dict) -> "StudySpec":
        doc = dict(doc)
        if "perturb" in doc and doc["perturb"] is not None:
            doc["perturb"] = PerturbSpec(**doc["perturb"])
        if "seeds" in doc:
            doc["seeds"] = tuple(doc["seeds"])
        return cls(**doc)


def study_cells(spec: StudySpec):
    """(cell name, variant, demo count) grid for a study kind."""
    base = ds.SupervisionVariant("traj_camera_se3")
    if spec.kind == "ladder":
        return [(t, ds.SupervisionVariant(t), spec.demos) for t in LADDER_TARGETS]
    if spec.kind == "rotation":
        return [
            (r, ds.SupervisionVariant("traj_camera_se3", rotation_param=r), spec.demos)
            for r in ds.ROTATION_PARAMS
        ]
    if spec.kind == "depth":
        return [
            (m, ds.SupervisionVariant("traj_camera_se3", depth_mode=m), spec.demos)
            for m in sw.DEPTH_MODES
        ]
    if spec.kind == "scaling":
        return [(f"demos_{n}", base, n) for n in (10, 25, 50)]
    # closed_form: one trained policy feeds three evaluation arms
    return [("closed_form", base, spec.demos)]


def run_study(spec: StudySpec):
    """Train and evaluate every (cell, seed); returns {"rows", "summary"}.

    Within a seed, all cells share the recorded dataset (matched data) and
    evaluation episode seeds (paired comparisons). Cell failures are
    recorded and the study continues.
    """
    scene, task = sw.default_scene(spec.family)
    camera = sw.default_camera()
    sim_cfg = sw.SimConfig(sigma_p=spec.sigma_p)
    rows = []
    dataset_cache = {}

    for seed in spec.seeds:
        eval_seed = derive_seed(spec.root_seed, "eval", seed)
        for cell, variant, demos in study_cells(spec):
            try:
                data_key = (demos, seed)
                if data_key not in dataset_cache:
                    dataset_cache[data_key] = ds.record_demonstrations(
                        scene, task, demos, derive_seed(spec.root_seed, "data", seed),
                        sim_cfg=sim_cfg, camera=camera,
                    )
                data = dataset_cache[data_key]
                policy_cfg = pol.PolicyConfig(
                    token_dim=sw.feature_dims(scene)[0], variant=variant,
                )
                tcfg = TrainConfig(
                    policy=policy_cfg, steps=spec.steps, batch_size=spec.batch_size,
                    seed=derive_seed(spec.root_seed, "train", cell, seed),
                )
                policy, _ = train(data, tcfg)
                if spec.kind == "closed_form":
                    rows.extend(
                        _closed_form_rows(spec, policy, scene, task, camera, sim_cfg, seed,
                                          eval_seed)
                    )
                else:
                    report = rollout(policy, scene, task, spec.episodes, eval_seed,
                                     sim_cfg=sim_cfg, camera=camera)
                    rows.append(_row(spec, cell, seed, report, policy_cfg))
            except Exception as e:  # cell failures recorded, study continues
                log.warning("cell %s seed %d failed: %s", cell, seed, e)
                rows.append({"study": spec.kind, "cell": cell, "seed": seed, "error": str(e)})
    return {"rows": rows, "summary": summarize_rows(rows)}


def _closed_form_rows(spec, policy, scene, task, camera, sim_cfg, seed, eval_seed):
    out = []
    oracle = closed_form_baseline(policy, scene, task, spec.episodes, eval_seed,
                                  sim_cfg=sim_cfg, camera=camera, oracle=True)
    out.append(_row(spec, "oracle_hardcoded", seed, oracle, policy.cfg))
    perturbed_learned = rollout(
        PerturbedTrajectoryPolicy(policy, spec.perturb, eval_seed), scene, task,
        spec.episodes, eval_seed, sim_cfg=sim_cfg, camera=camera,
    )
    out.append(_row(spec, "perturbed_learned", seed, perturbed_learned, policy.cfg))
    perturbed_hard = closed_form_baseline(policy, scene, task, spec.episodes, eval_seed,
                                          sim_cfg=sim_cfg, camera=camera, perturb=spec.perturb)
    out.append(_row(spec, "perturbed_hardcoded", seed, perturbed_hard, policy.cfg))
    return out


def _row(spec, cell, seed, report: EvalReport, policy_cfg):
    return {
        "study": spec.kind,
        "cell": cell,
        "seed": seed,
        "successes": report.successes,
        "episodes": report.episodes,
        "success_rate": report.success_rate,
        "wilson_lo": report.wilson_lo,
        "wilson_hi": report.wilson_hi,
        "chart_violation_rate": report.chart_violation_rate,
        "mean_traj_error": report.mean_traj_error,
        "config_hash": policy_cfg.config_hash(),
    }


def summarize_rows(rows):
    """Per-cell mean success rate plus a pooled Wilson interval."""
    cells = {}
    for r in rows:
        if "error" in r:
            cells.setdefault(r["cell"], {"errors": 0, "rates": [], "k": 0, "n": 0})["errors"] = (
                cells[r["cell"]].get("errors", 0) + 1
            )
            continue
        c = cells.setdefault(r["cell"], {"errors": 0, "rates": [], "k": 0, "n": 0})
        c["rates"].append(r["success_rate"])
        c["k"] += r["successes"]
        c["n"] += r["episodes"]
    summary = {}
    for cell, c in sorted(cells.items()):
        entry = {"seeds": len(c["rates"]), "errors": c["errors"]}
        if c["rates"]:
            entry["mean_success_rate"] = float(np.mean(c["rates"]))
            lo, hi = wilson_interval(c["k"], c["n"])
            entry["pooled"] = {"k": c["k"], "n": c["n"], "wilson_lo": lo, "wilson_hi": hi}
        summary[cell] = entry
    return summary


# --- reports ---

REPORT_COLUMNS = [
    "study", "cell", "seed", "successes", "episodes", "success_rate",
    "wilson_lo", "wilson_hi", "chart_violation_rate", "mean_traj_error",
    "config_hash", "error",
]


def emit_report(results, path_prefix: str):
    """Write <prefix>.csv (one row per cell-seed) and <prefix>.json summary.

    Field order is fixed; rows are sorted by (cell, seed) so identical
    results produce identical files.
    """
    rows = results["rows"] if isinstance(results, dict) else list(results)
    csv_path, json_path = path_prefix + ".csv", path_prefix + ".json"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in sorted(rows, key=lambda r: (str(r.get("cell")), r.get("seed", 0))):
            writer.writerow(row)
    doc = {"rows": len(rows), "summary": summarize_rows(rows)}
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    return csv_path, json_path
