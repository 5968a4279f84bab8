"""Scenario configuration, initial-data presets and the verification scenarios."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .assembly import GalerkinOperators, SourceSpec, assemble
from .geometry import Domain, Quadrature, eval_wave_mode
from .integrator import SCHEMES, ModalState, Trajectory, integrate, project_initial_data

log = logging.getLogger(__name__)

SCENARIOS = ("identity-check", "inequality-check", "global-q1", "blowup-explore", "perturb",
             "converge", "basis", "dump-ops")
PRESETS = ("modal", "bump", "random-smooth")


@dataclass
class ScenarioConfig:
    scenario: str = "identity-check"
    name: str = ""
    dim: int = 2
    n_wave: int = 8
    n_plate: int = 8
    p: float = 1.0
    rho_w: float = 1.0
    a: float = 0.0
    b: float = 0.0
    q: float = 1.0
    coupling: float = 1.0
    damping: float = 1.0
    preset: str = "modal"
    amplitude: float = 1.0
    u0: list = field(default_factory=lambda: [1.0])
    u1: list = field(default_factory=list)
    w0: list = field(default_factory=list)
    w1: list = field(default_factory=list)
    validation_preset: str = "random-smooth"
    validation_amplitude: float | None = None
    T: float = 10.0
    dt: float = 1e-3
    stride: int = 1
    scheme: str = "rk4"
    threshold: float = 1e8
    quad_order: int | None = None
    tolerance: float | None = None
    truncations: list = field(default_factory=lambda: [4, 8, 16])
    deltas: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    seed: int = 0
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def validate(self):
        def need(ok, msg):
            if not ok:
                raise ValueError(msg)

        need(self.scenario in SCENARIOS, f"scenario must be one of {SCENARIOS}")
        need(self.dim in (2, 3), "dim must be 2 or 3")
        need(1 <= self.n_wave <= 256 and 1 <= self.n_plate <= 64, "truncation sizes out of range")
        need(self.p >= 1 and self.q >= 1, "p and q must be >= 1")
        need(self.rho_w >= 0, "rho_w must be >= 0")
        need(self.coupling >= 0 and self.damping >= 0, "coupling and damping scales must be >= 0")
        need(self.preset in PRESETS and self.validation_preset in PRESETS,
             f"preset must be one of {PRESETS}")
        need(self.T > 0 and self.dt > 0 and self.dt <= self.T, "need 0 < dt <= T")
        need(int(self.stride) == self.stride and self.stride >= 1, "stride must be a positive integer")
        need(self.scheme in SCHEMES, f"scheme must be one of {SCHEMES}")
        need(self.threshold > 0, "threshold must be positive")
        need(self.quad_order is None or self.quad_order >= 2, "quad_order must be >= 2")
        need(self.tolerance is None or self.tolerance > 0, "tolerance must be positive")
        need(len(self.truncations) >= 2 and list(self.truncations) == sorted(set(self.truncations)),
             "truncations must be strictly increasing with at least two entries")
        need(all(d >= 0 for d in self.deltas), "deltas must be non-negative")
        for key in ("u0", "u1", "w0", "w1", "truncations", "deltas"):
            need(isinstance(getattr(self, key), (list, tuple)), f"{key} must be a list")

    @property
    def spec(self) -> SourceSpec:
        return SourceSpec(p=self.p, rho_w=self.rho_w, a=self.a, b=self.b, q=self.q)

    def operators(self, n_wave=None, n_plate=None, quad_order=None) -> GalerkinOperators:
        order = quad_order if quad_order is not None else self.quad_order
        quad = Quadrature(order) if order is not None else None
        ops = assemble(Domain(self.dim), n_wave or self.n_wave, n_plate or self.n_plate, quad,
                       self.spec)
        return ops.scaled(self.coupling, self.damping)


@dataclass
class RunSummary:
    scenario: str
    passed: bool
    properties: list
    constants: dict
    halt_time: float | None
    max_residual: float | None
    wall_ms: float
    name: str = ""

    def to_json(self) -> str:
        data = {"scenario": self.scenario, "name": self.name, "pass": self.passed,
                "properties": self.properties, "constants": self.constants,
                "halt_time": self.halt_time, "max_residual": self.max_residual,
                "wall_ms": self.wall_ms}
        return json.dumps(_jsonable(data), indent=2, sort_keys=False)

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        d = json.loads(text)
        return cls(d["scenario"], d["pass"], d["properties"], d["constants"], d["halt_time"],
                   d["max_residual"], d["wall_ms"], d.get("name", ""))

    def property(self, name: str) -> dict:
        for prop in self.properties:
            if prop["name"] == name:
                return prop
        raise KeyError(name)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else str(value)
    return obj


class _Properties:
    """Collects asserted properties; each name may appear once."""

    def __init__(self):
        self.items = []

    def add(self, name, passed, value=None, threshold=None, note=""):
        if any(p["name"] == name for p in self.items):
            raise ValueError(f"property {name} asserted twice")
        self.items.append({"name": name, "passed": bool(passed), "value": value,
                           "threshold": threshold, "note": note})

    @property
    def all_passed(self) -> bool:
        return all(p["passed"] for p in self.items)


# --------------------------------------------------------------------------
# initial data presets

def _pad(values, n):
    out = np.zeros(n)
    vals = np.asarray(values, dtype=float)[:n]
    out[:len(vals)] = vals
    return out


def bump(points, center, radius):
    """Smooth bump exp(1 - 1/(1 - r^2/R^2)) supported in the ball of radius R."""
    points = np.atleast_2d(points)
    r2 = np.sum((points - center) ** 2, axis=-1) / radius ** 2
    out = np.zeros(len(points))
    inside = r2 < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


_RANDOM_POOL = 256


def initial_state(ops: GalerkinOperators, preset: str, amplitude: float = 1.0, *, u0=(1.0,),
                  u1=(), w0=(), w1=(), seed: int = 0) -> ModalState:
    """Initial modal coefficients for a named preset.

    random-smooth draws a fixed pool of normal variates per field so that
    nested truncations share their leading coefficients.
    """
    nw, npl = ops.n_wave, ops.n_plate
    if preset == "modal":
        return ModalState(0.0, amplitude * _pad(u0, nw), amplitude * _pad(u1, nw),
                          amplitude * _pad(w0, npl), amplitude * _pad(w1, npl))
    if preset == "bump":
        dim = ops.domain.dim
        centre = np.full(dim, 0.5)
        face_centre = np.full(dim - 1, 0.5)
        return project_initial_data(
            ops,
            u0_fn=lambda x: amplitude * bump(x, centre, 0.35),
            w0_fn=lambda y: 0.01 * amplitude * bump(y, face_centre, 0.4))
    if preset == "random-smooth":
        if max(nw, npl) > _RANDOM_POOL:
            raise ValueError("random-smooth preset supports at most 256 modes")
        rng = np.random.default_rng(seed)
        draws = rng.standard_normal((4, _RANDOM_POOL))
        lam = ops.wave_stiffness
        # exact beam eigenvalues (summed over tensor factors) keep nested truncations identical
        mu = np.array([sum(m.eigenvalue for m in pair) for pair in ops.plate_basis.modes])
        wave_decay = (lam[0] / lam) ** 2
        plate_decay = (mu[0] / mu) ** 2
        # plate displacement scaled so its bending energy is comparable to the wave's
        plate_scale = np.sqrt(lam[0] / mu[0])
        return ModalState(0.0,
                          amplitude * wave_decay * draws[0, :nw],
                          amplitude * np.sqrt(lam[0]) * wave_decay * draws[1, :nw],
                          amplitude * plate_scale * plate_decay * draws[2, :npl],
                          amplitude * np.sqrt(lam[0]) * plate_scale * plate_decay * draws[3, :npl])
    raise ValueError(f"unknown preset {preset!r}")


def config_initial_state(config: ScenarioConfig, ops, preset=None, amplitude=None) -> ModalState:
    return initial_state(ops, preset or config.preset,
                         config.amplitude if amplitude is None else amplitude,
                         u0=config.u0, u1=config.u1, w0=config.w0, w1=config.w1, seed=config.seed)


def run_config(config: ScenarioConfig, ops=None, initial=None) -> tuple:
    ops = ops if ops is not None else config.operators()
    initial = initial if initial is not None else config_initial_state(config, ops)
    traj = integrate(ops, config.spec, initial, config.T, config.dt, int(config.stride),
                     config.scheme, config.threshold)
    return ops, traj


# --------------------------------------------------------------------------
# scenarios

def _identity_properties(props, traj, ops, spec, config, report):
    e0 = report.script_energy[0]
    rel = float(np.abs(report.residual).max() / e0) if e0 > 0 else 0.0
    if config.tolerance is not None:
        tol = config.tolerance
    else:
        tol = 1e-6 if spec.is_linear and spec.rho_w == 0 else 1e-4
    props.add("energy_identity", rel <= tol, rel, tol)
    props.add("energy_nonnegative", bool(np.all(report.script_energy >= 0)),
              float(report.script_energy.min()), 0.0)
    steps = np.diff(report.damping)
    props.add("damping_ledger_monotone", bool(np.all(steps >= -1e-10)),
              float(steps.min()) if steps.size else 0.0, -1e-10)
    if spec.a == 0 and spec.b == 0:
        rises = np.diff(report.script_energy)
        props.add("energy_nonincreasing", bool(np.all(rises <= 1e-10)),
                  float(rises.max()) if rises.size else 0.0, 1e-10)
    return rel


def run_scenario(config: ScenarioConfig, write: bool = True, out_dir=None) -> RunSummary:
    """Run one scenario, write its artifacts and return the summary."""
    start = time.perf_counter()
    out = Path(out_dir if out_dir is not None else config.out_dir)
    name = config.name or config.scenario
    spec = config.spec
    props = _Properties()
    constants: dict = {}
    halt_time = None
    max_residual = None
    artifacts = {}

    if config.scenario in ("basis", "dump-ops"):
        ops = config.operators()
        if write:
            from . import io
            out.mkdir(parents=True, exist_ok=True)
            if config.scenario == "basis":
                io.write_basis_csv(ops, out / f"{name}_basis.csv")
            else:
                io.write_operators(ops, out)
        props.add("assembled", True)
    elif config.scenario in ("identity-check", "inequality-check"):
        if config.scenario == "inequality-check" and config.p <= 3:
            raise ValueError("inequality-check needs p > 3")
        ops, traj = run_config(config)
        report = dg.energy_report(traj, ops, spec)
        halt_time = traj.halt_time
        props.add("no_blowup", not traj.blowup, halt_time)
        if config.scenario == "identity-check":
            max_residual = _identity_properties(props, traj, ops, spec, config, report)
        else:
            e0 = report.script_energy[0]
            tol = config.tolerance or 1e-6
            ok, bad = dg.energy_inequality_check(report.residual, e0, tol)
            max_residual = float(report.residual.max() / e0)
            props.add("energy_inequality", ok, max_residual, tol,
                      note=f"{int(np.sum(report.residual > 0))} samples with R > 0")
            props.add("energy_nonnegative", bool(np.all(report.script_energy >= 0)),
                      float(report.script_energy.min()), 0.0)
        artifacts = {"trajectory": traj, "energy": report}
    elif config.scenario == "global-q1":
        result = global_existence_check(config)
        for prop in result["properties"]:
            props.add(**prop)
        constants.update(result["constants"])
        halt_time = result["trajectory"].halt_time
        max_residual = result["max_residual"]
        artifacts = {"trajectory": result["trajectory"], "energy": result["report"]}
    elif config.scenario == "blowup-explore":
        result = blowup_exploration(config)
        for prop in result["properties"]:
            props.add(**prop)
        constants.update(result["constants"])
        halt_time = result["trajectory"].halt_time
        max_residual = result["max_residual"]
        artifacts = {"trajectory": result["trajectory"], "energy": result["report"]}
    elif config.scenario == "perturb":
        table = perturbation_study(config, config.deltas)
        props.add("ratio_stability", table["ratio_stable"], table["ratio_spread"], 0.1)
        props.add("quadratic_scaling", table["scaling_ok"], table["scaling_worst"], 0.2)
        constants["C_R"] = table["rows"][-1]["C_R"] if table["rows"] else 0.0
        constants["C_R_by_delta"] = {str(r["delta"]): r["C_R"] for r in table["rows"]}
        artifacts = {"perturbation": table}
    elif config.scenario == "converge":
        table = convergence_study(config, config.truncations)
        props.add("cauchy_decrease_wave", table["wave_ratio_ok"], table["wave_ratios"], 2.0)
        props.add("cauchy_decrease_plate", table["plate_ratio_ok"], table["plate_ratios"], 2.0)
        props.add("halt_times_stable", table["halt_times_ok"], table["halt_times"])
        artifacts = {"convergence": table}
    else:  # pragma: no cover - guarded by validate()
        raise ValueError(config.scenario)

    wall_ms = 1000.0 * (time.perf_counter() - start)
    summary = RunSummary(config.scenario, props.all_passed, props.items, constants, halt_time,
                         max_residual, wall_ms, name)
    if write:
        from . import io
        out.mkdir(parents=True, exist_ok=True)
        if "trajectory" in artifacts:
            io.write_trajectory_csv(artifacts["trajectory"], out / f"{name}_trajectory.csv")
        if "energy" in artifacts:
            io.write_energy_csv(artifacts["energy"], out / f"{name}_energy.csv")
        if "perturbation" in artifacts:
            io.write_table_csv(artifacts["perturbation"]["rows"], out / f"{name}_perturbation.csv")
        if "convergence" in artifacts:
            io.write_table_csv(artifacts["convergence"]["rows"], out / f"{name}_convergence.csv")
        (out / f"{name}_summary.json").write_text(summary.to_json())
    return summary


def global_existence_check(config: ScenarioConfig) -> dict:
    """q = 1 run: no blow-up and a Gronwall bound whose constant is fitted on one preset
    and re-checked on a second one."""
    if config.q != 1:
        raise ValueError("global-q1 scenario needs q = 1")
    spec = config.spec
    ops, traj = run_config(config)
    report = dg.energy_report(traj, ops, spec)
    energies = report.script_energy
    C = dg.fit_gronwall_constant(traj.times, energies)
    props = [dict(name="no_blowup", passed=not traj.blowup, value=traj.halt_time)]
    props.append(dict(name="gronwall_bound", passed=dg.gronwall_check(traj.times, energies, C),
                      value=C))
    amp = config.validation_amplitude if config.validation_amplitude is not None else config.amplitude
    other = config_initial_state(config, ops, config.validation_preset, amp)
    _, traj2 = run_config(config, ops, other)
    e2 = dg.script_energy(ops, spec, traj2)
    props.append(dict(name="gronwall_revalidated",
                      passed=(not traj2.blowup) and dg.gronwall_check(traj2.times, e2, C),
                      value=float(np.max(e2 / dg.gronwall_bound(e2[0], C, traj2.times)))))
    rel = float(np.abs(report.residual).max() / energies[0])
    return {"trajectory": traj, "report": report, "properties": props,
            "constants": {"C": C, "E0": float(energies[0]),
                          "bound_at_T": dg.gronwall_bound(energies[0], C, traj.times[-1])},
            "max_residual": rel, "validation_trajectory": traj2}


def blowup_exploration(config: ScenarioConfig, fraction: float = 0.9) -> dict:
    """Run until blow-up (or T) and test the Volterra majorant on the sampled energies."""
    if config.q <= 1:
        raise ValueError("blowup-explore needs q > 1")
    spec = config.spec
    ops, traj = run_config(config)
    report = dg.energy_report(traj, ops, spec) if len(traj) >= 2 else None
    energies = dg.script_energy(ops, spec, traj)
    C, C1 = dg.fit_volterra_constants(traj.times, energies, config.q)
    t_star = dg.majorant_blowup_time(C, C1, config.q)
    dominated, checked = dg.majorant_domination(traj.times, energies, config.q, C, C1, fraction)
    props = [dict(name="majorant_domination", passed=dominated, value=checked,
                  note=f"samples with t <= {fraction} x majorant blow-up time")]
    if traj.blowup:
        props.append(dict(name="halt_after_majorant_horizon",
                          passed=traj.halt_time >= fraction * t_star,
                          value=traj.halt_time, threshold=fraction * t_star))
    rel = None
    if report is not None:
        rel = float(np.abs(report.residual).max() / energies[0])
    return {"trajectory": traj, "report": report, "properties": props,
            "constants": {"C": C, "C1": C1, "majorant_blowup_time": t_star,
                          "blowup": traj.blowup},
            "max_residual": rel}


def perturbation_study(config: ScenarioConfig, deltas, direction=None) -> dict:
    """Difference energy between a base run and runs with perturbed initial data.

    The perturbation is ``delta * direction`` added to the stacked initial
    state; the default direction shifts the first wave displacement coefficient.
    """
    if config.p > 3:
        raise ValueError("perturbation study requires p <= 3")
    spec = config.spec
    ops = config.operators()
    base_state = config_initial_state(config, ops)
    _, base = run_config(config, ops, base_state)
    if base.blowup:
        raise RuntimeError("base run blew up; shorten T")
    if direction is None:
        direction = np.zeros(2 * ops.n_wave + 2 * ops.n_plate)
        direction[0] = 1.0
    rows = []
    for delta in deltas:
        y0 = base_state.to_vector() + delta * np.asarray(direction, dtype=float)
        state = ModalState.from_vector(0.0, y0, ops.n_wave, ops.n_plate)
        _, traj = run_config(config, ops, state)
        et = dg.perturbation_energy(base, traj, ops)
        sup = float(et.max())
        ratio = sup / et[0] if et[0] > 0 else float("nan")
        rows.append({"delta": float(delta), "E0": float(et[0]), "sup_E": sup, "ratio": ratio,
                     "C_R": dg.fit_perturbation_rate(traj.times, et)})
    positive = [r for r in rows if r["delta"] > 0]
    ratios = np.array([r["ratio"] for r in positive])
    spread = float(ratios.max() / ratios.min() - 1.0) if ratios.size else 0.0
    scaling = []
    ordered = sorted(positive, key=lambda r: -r["delta"])
    for big, small in zip(ordered, ordered[1:]):
        expected = (big["delta"] / small["delta"]) ** 2
        scaling.append(big["sup_E"] / small["sup_E"] / expected)
    worst = float(max(abs(s - 1.0) for s in scaling)) if scaling else 0.0
    return {"rows": rows, "ratio_spread": spread, "ratio_stable": spread < 0.1,
            "scaling": scaling, "scaling_worst": worst, "scaling_ok": worst <= 0.2}


def convergence_study(config: ScenarioConfig, truncations) -> dict:
    """Cauchy differences between successive truncations N (n_wave = n_plate = N).

    All runs share the quadrature of the largest truncation so that the
    differences reflect truncation only.
    """
    truncations = list(truncations)
    largest = max(truncations)
    finest = config.operators(largest, largest)
    order = finest.quad.order
    runs = []
    for n in truncations:
        ops = config.operators(n, n, order)
        _, traj = run_config(config, ops)
        runs.append((n, ops, traj))

    rows = []
    for (n, ops, traj), (m, ops2, traj2) in zip(runs, runs[1:]):
        k = min(len(traj), len(traj2))
        du = np.zeros((k, ops2.n_wave))
        du[:, :ops.n_wave] = traj.u[:k]
        du -= traj2.u[:k]
        dw = np.zeros((k, ops2.n_plate))
        dw[:, :ops.n_plate] = traj.w[:k]
        dw -= traj2.w[:k]
        h1 = np.sqrt(np.sum(ops2.wave_stiffness * du * du, axis=1)).max()
        h2 = np.sqrt(np.einsum("ni,ij,nj->n", dw, ops2.plate_bending, dw).max())
        rows.append({"N": n, "N_next": m, "wave_H1_diff": float(h1), "plate_H2_diff": float(h2),
                     "halt_time": traj.halt_time if traj.blowup else None,
                     "halt_time_next": traj2.halt_time if traj2.blowup else None})

    def ratios(key):
        vals = [r[key] for r in rows]
        return [float(a / b) if b > 0 else float("inf") for a, b in zip(vals, vals[1:])]

    wave_ratios, plate_ratios = ratios("wave_H1_diff"), ratios("plate_H2_diff")
    halts = [float(traj.halt_time if traj.blowup else traj.times[-1]) for _, _, traj in runs]
    halts_ok = all(b >= 0.95 * a for a, b in zip(halts, halts[1:]))
    return {"rows": rows, "wave_ratios": wave_ratios, "plate_ratios": plate_ratios,
            "wave_ratio_ok": all(r >= 2 for r in wave_ratios),
            "plate_ratio_ok": all(r >= 2 for r in plate_ratios),
            "halt_times": halts, "halt_times_ok": halts_ok, "quad_order": order}
