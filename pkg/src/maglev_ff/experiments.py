"""Scenario grid, metric tables, plot data and the stability pipeline.

A scenario fixes the loop (open/closed), whether the plant starts off the
reference and whether the input disturbance is applied.  Every run of the
grid is deterministic, so rerunning a config reproduces the output files
byte for byte.
"""

from __future__ import annotations

import csv
import json
import platform
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, SimulationError, SingularMass
from .feedback import LyapunovConfig, PidGains, ProportionalController, find_epsilon, rate_matrix
from .dynamics import mass_matrix
from .methods import make_method
from .params import COORDS, GeneralizedState, PlantParams
from .sim import SimConfig, SimulationRecord, error_metrics, run_closed_loop, run_open_loop
from .trajectory import DisturbanceProfile, MotionProfile

# tracking below this multiple of stroke is treated as integration noise
INTEGRATION_TOL = 1e-13
ZERO_FACTOR = 10.0


@dataclass(frozen=True)
class Scenario:
    name: str
    closed_loop: bool
    mismatch: bool
    disturbance: bool


SCENARIO_TABLE = {
    "ol-match": Scenario("ol-match", False, False, False),
    "ol-mismatch": Scenario("ol-mismatch", False, True, False),
    "cl-match": Scenario("cl-match", True, False, False),
    "cl-mismatch": Scenario("cl-mismatch", True, True, False),
    "cl-match-dist": Scenario("cl-match-dist", True, False, True),
    "cl-mismatch-dist": Scenario("cl-mismatch-dist", True, True, True),
}


# ---------------------------------------------------------------------------
# builders


def build_plant(cfg: ExperimentConfig) -> PlantParams:
    return cfg.plant.build()


def build_profile(cfg: ExperimentConfig) -> MotionProfile:
    tr = cfg.trajectory
    try:
        return MotionProfile.fitted(tr.strokes, tr.duration, tr.start_time, tr.kind, tr.start)
    except ValueError as exc:
        raise ConfigError(f"trajectory: {exc}") from exc


def build_disturbance(cfg: ExperimentConfig) -> DisturbanceProfile:
    d = cfg.disturbance
    try:
        return DisturbanceProfile(COORDS.index(d.channel), d.shape, d.amplitude, d.onset, d.duration, d.ramp)
    except ValueError as exc:
        raise ConfigError(f"disturbance: {exc}") from exc


def build_pid(cfg: ExperimentConfig, plant: PlantParams) -> PidGains:
    fb = cfg.feedback
    base = PidGains.loop_shaped(plant, 2 * np.pi * fb.bandwidth_hz, fb.damping_ratio)
    try:
        return PidGains(
            fb.kp if fb.kp is not None else base.kp,
            fb.ki if fb.ki is not None else base.ki,
            fb.kd if fb.kd is not None else base.kd,
            fb.omega_f if fb.omega_f is not None else base.omega_f,
        )
    except ValueError as exc:
        raise ConfigError(f"feedback: {exc}") from exc


def stability_gains(cfg: ExperimentConfig, plant: PlantParams):
    """Proportional and derivative gains for the stability pipeline.

    Defaults place each channel at ``bandwidth_hz`` with damping ratio
    ``kv_damping_ratio``; explicit gains in the config take precedence.
    """
    st = cfg.stability
    w = 2 * np.pi * st.bandwidth_hz
    inertia = plant.rigid_inertia
    Kp = np.array(st.kp) if st.kp is not None else inertia * w**2
    Kv = np.array(st.kv) if st.kv is not None else 2 * st.kv_damping_ratio * inertia * w
    if np.any(Kp <= 0):
        raise ConfigError("stability.kp must be positive on every channel")
    if np.any(Kv < 0):
        raise ConfigError("stability.kv must be non-negative")
    return Kp, Kv


def sim_config(cfg: ExperimentConfig, scenario: Scenario) -> SimConfig:
    mismatch = cfg.mismatch if scenario.mismatch else (0.0,) * 6
    try:
        return SimConfig(cfg.sim.Ts, cfg.sim.substeps, cfg.sim.horizon, mismatch)
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from exc


# ---------------------------------------------------------------------------
# grid


class MethodCache:
    """Builds each feedforward method once per plant."""

    def __init__(self, plant: PlantParams, strategy: str):
        self.plant = plant
        self.strategy = strategy
        self._cache = {}

    def get(self, name: str):
        if name not in self._cache:
            self._cache[name] = make_method(name, self.plant, self.strategy)
        return self._cache[name]


def run_scenario(cfg: ExperimentConfig, scenario: str, method: str, cache: MethodCache | None = None) -> SimulationRecord:
    sc = SCENARIO_TABLE[scenario]
    plant = build_plant(cfg)
    cache = cache or MethodCache(plant, cfg.scheduling)
    ff = cache.get(method)
    scfg = sim_config(cfg, sc)
    traj = build_profile(cfg)
    meta = {"scenario": scenario}
    if not sc.closed_loop:
        return run_open_loop(scfg, plant, ff, traj, meta)
    dist = build_disturbance(cfg) if (sc.disturbance and cfg.disturbance_enabled) else None
    return run_closed_loop(scfg, plant, ff, build_pid(cfg, plant), traj, dist, meta)


@dataclass(frozen=True)
class MetricRow:
    scenario: str
    method: str
    method_index: int
    coord: str
    l2: float
    linf: float


def record_rows(record: SimulationRecord) -> list[MetricRow]:
    met = error_metrics(record)
    md = record.metadata
    return [
        MetricRow(md["scenario"], md["method"], int(md["method_index"]), c, float(met.l2[i]), float(met.linf[i]))
        for i, c in enumerate(COORDS)
    ]


def run_file_name(scenario: str, method: str) -> str:
    return f"run_{scenario}_{method}.csv"


def run_grid(cfg: ExperimentConfig, out_dir, methods=None, scenarios=None, progress=None, keep_records=False):
    """Run every (scenario, method) pair, writing one record CSV per run.

    Returns the metric rows (and the records when ``keep_records``).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plant = build_plant(cfg)
    cache = MethodCache(plant, cfg.scheduling)
    rows, records = [], {}
    for sc in scenarios or cfg.scenarios:
        for m in methods or cfg.methods:
            rec = run_scenario(cfg, sc, m, cache)
            rec.to_csv(out / run_file_name(sc, m))
            rows.extend(record_rows(rec))
            if keep_records:
                records[(sc, m)] = rec
            if progress:
                progress(sc, m, rec)
    return (rows, records) if keep_records else rows


# ---------------------------------------------------------------------------
# metric output


def zero_threshold(cfg: ExperimentConfig, coord: str, kind: str) -> float:
    stroke = abs(cfg.trajectory.strokes[COORDS.index(coord)]) or 1.0
    thr = ZERO_FACTOR * INTEGRATION_TOL * stroke
    if kind == "l2":
        thr *= np.sqrt(round(cfg.sim.horizon / cfg.sim.Ts) + 1)
    return thr


def write_metrics_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "method", "method_index", "coord", "l2", "linf"])
        for r in rows:
            w.writerow([r.scenario, r.method, r.method_index, r.coord, f"{r.l2:.17g}", f"{r.linf:.17g}"])


def read_metrics_csv(path) -> list[MetricRow]:
    with open(path, newline="") as fh:
        return [
            MetricRow(d["scenario"], d["method"], int(d["method_index"]), d["coord"], float(d["l2"]), float(d["linf"]))
            for d in csv.DictReader(fh)
        ]


def write_metrics_json(rows, path) -> None:
    tree = {}
    for r in rows:
        node = tree.setdefault(r.scenario, {}).setdefault(r.method, {"method_index": r.method_index})
        node[r.coord] = {"l2": r.l2, "linf": r.linf}
    Path(path).write_text(json.dumps(tree, indent=2) + "\n")


def format_tables(rows, cfg: ExperimentConfig, coords=("chi", "psi", "zeta")) -> str:
    """Scenario blocks of method x coordinate norms, tiny values shown as 0."""
    lines = []
    scenarios = list(dict.fromkeys(r.scenario for r in rows))
    index = {(r.scenario, r.method, r.coord): r for r in rows}
    for sc in scenarios:
        methods = list(dict.fromkeys(r.method for r in rows if r.scenario == sc))
        lines.append(f"[{sc}]")
        head = f"{'method':<22}" + "".join(f"{'l2 ' + c:>14}" for c in coords) + "".join(
            f"{'linf ' + c:>14}" for c in coords)
        lines.append(head)
        for m in methods:
            first = index[(sc, m, coords[0])]
            cells = []
            for kind in ("l2", "linf"):
                for c in coords:
                    v = getattr(index[(sc, m, c)], kind)
                    cells.append("0" if v < zero_threshold(cfg, c, kind) else f"{v:.4e}")
            lines.append(f"{f'{first.method_index}) {m}':<22}" + "".join(f"{s:>14}" for s in cells))
        lines.append("")
    return "\n".join(lines)


def write_traces(records: dict, out_dir) -> list[Path]:
    """One plot-data CSV per scenario: time plus every method's error traces."""
    out = Path(out_dir)
    paths = []
    for sc in dict.fromkeys(k[0] for k in records):
        runs = [(m, rec) for (s, m), rec in records.items() if s == sc]
        t = runs[0][1].t
        header = ["t"] + [f"{m}_e_{c}" for m, _ in runs for c in COORDS]
        data = np.column_stack([t] + [rec.e for _, rec in runs])
        path = out / f"traces_{sc}.csv"
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
        paths.append(path)
    return paths


def write_manifest(out_dir, cfg: ExperimentConfig, command: str, files) -> Path:
    import numba
    import yaml

    from . import __version__

    manifest = {
        "command": command,
        "config_sha256": cfg.digest(),
        "versions": {
            "maglev_ff": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "numba": numba.__version__,
            "pyyaml": yaml.__version__,
        },
        "determinism": "no random seeds are used; identical configs reproduce identical files",
        "files": sorted(str(Path(f).name) for f in files),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    (Path(out_dir) / "config.yaml").write_text(cfg.to_yaml())
    return path


# ---------------------------------------------------------------------------
# ordering checks


def _l2(rows, scenario, index, coord):
    vals = [r.l2 for r in rows if r.scenario == scenario and r.method_index == index and r.coord == coord
            and r.method in ("mass", "annihilate-global", "nonlinear", "lpv-local", "lpv-global-ic")]
    if not vals:
        raise KeyError(f"no metric for scenario {scenario}, method {index}, {coord}")
    return vals[0]


ORDERING_SCENARIOS = ("ol-match", "cl-match", "cl-match-dist")


def check_orderings(rows, scenarios=ORDERING_SCENARIOS, comparable_ratio: float = 10.0, dist_ratio: float = 100.0):
    """Evaluate the ranking pattern on each scenario; returns (label, ok, detail) triples."""
    out = []
    for sc in scenarios:
        g = lambda i, c: _l2(rows, sc, i, c)  # noqa: E731
        for c in ("chi", "psi"):
            bad = [i for i in (2, 3, 4, 5) if not g(i, c) < g(1, c)]
            out.append((f"{sc}: methods 2-5 beat 1 on {c}", not bad, f"violators {bad}" if bad else ""))
        bad = [i for i in (2, 4) if not g(1, "zeta") < g(i, "zeta")]
        out.append((f"{sc}: method 1 beats 2 and 4 on zeta", not bad,
                    f"l2 zeta: 1={g(1, 'zeta'):.3e} " + " ".join(f"{i}={g(i, 'zeta'):.3e}" for i in (2, 4))))
        bad = [(i, j) for i in (3, 5) for j in (1, 2, 4) if not g(i, "zeta") < g(j, "zeta")]
        out.append((f"{sc}: methods 3 and 5 beat all others on zeta", not bad, f"violators {bad}" if bad else ""))
        if sc.endswith("dist"):
            psi = [g(i, "psi") for i in range(1, 6)]
            ratio = max(psi) / min(psi)
            out.append((f"{sc}: comparable psi error", ratio <= comparable_ratio, f"max/min = {ratio:.3g}"))
            for c in ("chi", "zeta"):
                ratio = g(1, c) / max(g(5, c), np.finfo(float).tiny)
                out.append((f"{sc}: method 5 {c} at least {dist_ratio:g}x below method 1", ratio >= dist_ratio,
                            f"ratio {ratio:.3g}"))
    return out


# ---------------------------------------------------------------------------
# stability pipeline


@dataclass
class StabilityResult:
    epsilon_star: float
    epsilon: float
    t: np.ndarray
    V: np.ndarray
    Vdot: np.ndarray
    v_pd: np.ndarray
    rate_nsd: np.ndarray
    stable: bool

    def verdict(self) -> str:
        if self.stable:
            return f"stable: ε* = {self.epsilon_star:.6g}, V̇ ≤ 0 at all samples"
        n_bad = int(np.sum(~(self.v_pd & self.rate_nsd)))
        return f"not verified: ε* = {self.epsilon_star:.6g}, conditions fail at {n_bad} samples"

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,V,Vdot,V_pd,Vdot_nsd\n")
            for row in zip(self.t, self.V, self.Vdot, self.v_pd, self.rate_nsd):
                fh.write(f"{row[0]:.17g},{row[1]:.17g},{row[2]:.17g},{int(row[3])},{int(row[4])}\n")


def run_stability(cfg: ExperimentConfig) -> StabilityResult:
    """Closed loop with the input-computation global LPV feedforward and PD feedback.

    ``find_epsilon`` is evaluated on the sampled trajectory; V and Vdot are then
    reported per sample at half the largest feasible weight.
    """
    plant = build_plant(cfg)
    Kp, Kv = stability_gains(cfg, plant)
    sc = SCENARIO_TABLE[cfg.stability.scenario]
    fb = ProportionalController(Kp, Kv)
    dist = build_disturbance(cfg) if (sc.disturbance and cfg.disturbance_enabled) else None
    rec = run_closed_loop(sim_config(cfg, sc), plant, make_method("lpv-global-ic", plant, cfg.scheduling), fb,
                          build_profile(cfg), dist, {"scenario": sc.name})
    samples = np.hstack([rec.q, rec.qdot])
    try:
        search = find_epsilon(samples, Kp, plant, Kv, eps_max=cfg.stability.eps_max)
    except SingularMass as exc:
        raise SimulationError(str(exc)) from exc
    lcfg = LyapunovConfig(Kp, search.report_epsilon)
    n = len(rec)
    V, Vdot = np.empty(n), np.empty(n)
    v_pd, r_nsd = np.empty(n, bool), np.empty(n, bool)
    e, ed = rec.e, rec.edot
    Kp_m = np.diag(Kp)
    for k in range(n):
        M = mass_matrix(rec.q[k], plant)
        P = np.block([[Kp_m, lcfg.epsilon * M], [lcfg.epsilon * M, M]])
        Q = rate_matrix(GeneralizedState(rec.q[k], rec.qdot[k]), lcfg, plant, Kv)
        x = np.concatenate([e[k], ed[k]])
        V[k] = 0.5 * x @ P @ x
        Vdot[k] = x @ Q @ x
        v_pd[k] = np.linalg.eigvalsh(P).min() > 0
        r_nsd[k] = np.linalg.eigvalsh(Q).max() <= 0
    off_eq = np.any(np.hstack([e, ed]) != 0, axis=1)
    stable = bool(np.all(v_pd) and np.all(r_nsd) and np.all(V[off_eq] > 0) and np.all(Vdot <= 0))
    return StabilityResult(search.epsilon, search.report_epsilon, rec.t, V, Vdot, v_pd, r_nsd, stable)
