"""Experiment runner: config parsing, seeded pipelines, CSV emission.

Configs are flat ``key = value`` text files grouped into ``[sections]`` with
an explicit schema version; see docs/config.md.  Every CSV starts with a
versioned comment line and carries the exact-diagonalization reference in an
``exact_*`` column.  Identical config and seed give byte-identical output.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import oracle
from .mitigation import (
    CalibrationMatrix,
    MitigationConfig,
    calibrate_readout,
    phase_scale_correct,
)
from .pauli import ModelSpec, PauliString, PauliSum, build_hamiltonian, pauli_pool
from .qite import QiteAbort, QiteConfig, run_qite, write_trajectory
from .recompile import BrickTemplate, kak_decompose, reconstruction_error, recompile_unitary
from .statesim import NoiseModel, StateVector
from .symmetry import StabilizerGroup, find_z2_symmetries, reduce_pool, sector_of
from .thermal import (
    CorrelationSeries,
    TraceConfig,
    TraceError,
    dynamical_correlation,
    spectral_density,
    thermal_sweep,
)

CSV_VERSION = "v1"
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config file parsing
# ---------------------------------------------------------------------------

def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(part) for part in raw.split(",") if part.strip()]
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if len(raw) > 1 and raw[0] == "0" and raw[1] not in ".eE":
        return raw  # bitstring labels keep their leading zeros
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    data: dict = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            data.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = line.split("=", 1)
        data.setdefault(section, {})[key.strip()] = _parse_value(raw)
    return data


@dataclass
class ExperimentConfig:
    model: ModelSpec
    delta_tau: float = 0.1
    n_steps: int = 10
    domain_size: int = 2
    grouping: str = "single"
    regularizer: float = 0.2
    solver_tol: float = 1e-10
    shots: Optional[int] = 8000
    unitary_mode: str = "trotterized"
    initial_state: str = ""
    trace_mode: str = "full"
    n_samples: Optional[int] = None
    betas: list = field(default_factory=list)
    noise_enabled: bool = False
    noise_p1: float = 0.001
    noise_p2: float = 0.01
    noise_readout: float = 0.02
    post_select: bool = False
    readout_mitigation: bool = False
    phase_scale: bool = False
    mitigation_order: str = "readout_first"
    calibration_shots: int = 1000
    observables: list = field(default_factory=lambda: ["energy"])
    corr_u: str = "Z0"
    corr_v: str = "Z0"
    time_mode: str = "exact_propagator"
    t_max: float = 8.0 * math.pi
    n_t: int = 128
    qite_rounds: int = 3
    time_rounds: int = 5
    qite_family: str = "ry"
    target_fidelity: float = 0.999
    seed: int = 0

    def hamiltonian(self) -> PauliSum:
        return build_hamiltonian(self.model)

    def qite_config(self, shots_override=None, noise_override=None) -> QiteConfig:
        shots = self.shots if shots_override is None else shots_override
        return QiteConfig(
            delta_tau=self.delta_tau,
            n_steps=self.n_steps,
            domain_size=self.domain_size,
            grouping=self.grouping,
            regularizer=self.regularizer,
            solver_tol=self.solver_tol,
            shots=shots,
            unitary_mode=self.unitary_mode,
            recompile_rounds=self.qite_rounds,
            recompile_family=self.qite_family,
            recompile_target_fidelity=self.target_fidelity,
        )

    def noise_model(self, n_qubits: int) -> Optional[NoiseModel]:
        if not self.noise_enabled:
            return None
        return NoiseModel.uniform(n_qubits, self.noise_p1, self.noise_p2, self.noise_readout)

    def times(self) -> np.ndarray:
        return np.arange(self.n_t) * (self.t_max / self.n_t)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    data = parse_config_text(text)
    top = data.get("", {})
    if top.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("config must declare schema_version = 1")

    model_sec = data.get("model", {})
    kind = model_sec.get("kind")
    if kind not in ("tfim", "xxz"):
        raise ConfigError("model.kind must be tfim or xxz")
    try:
        model = ModelSpec(
            model=kind,
            n_sites=int(model_sec.get("n_sites", 2)),
            j=float(model_sec.get("j", 1.0)),
            h=float(model_sec.get("h", 0.0)),
            delta=float(model_sec.get("delta", 0.0)),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad model section: {exc}")

    cfg = ExperimentConfig(model=model)
    qite_sec = data.get("qite", {})
    for key, attr, conv in (
        ("delta_tau", "delta_tau", float),
        ("n_steps", "n_steps", int),
        ("domain_size", "domain_size", int),
        ("grouping", "grouping", str),
        ("regularizer", "regularizer", float),
        ("solver_tol", "solver_tol", float),
        ("unitary_mode", "unitary_mode", str),
        ("initial_state", "initial_state", str),
    ):
        if key in qite_sec:
            setattr(cfg, attr, conv(qite_sec[key]))
    if "shots" in qite_sec:
        raw = qite_sec["shots"]
        cfg.shots = None if raw in (0, "exact", "none") else int(raw)

    trace = data.get("trace", {})
    cfg.trace_mode = str(trace.get("mode", cfg.trace_mode))
    if "n_samples" in trace:
        cfg.n_samples = int(trace["n_samples"])
    if "betas" in trace:
        raw = trace["betas"]
        cfg.betas = [float(b) for b in (raw if isinstance(raw, list) else [raw])]
    elif "beta_max" in trace:
        step = 2.0 * cfg.delta_tau
        count = int(round(float(trace["beta_max"]) / step))
        cfg.betas = [round(k * step, 12) for k in range(count + 1)]

    noise = data.get("noise", {})
    cfg.noise_enabled = bool(noise.get("enabled", False))
    cfg.noise_p1 = float(noise.get("p1", cfg.noise_p1))
    cfg.noise_p2 = float(noise.get("p2", cfg.noise_p2))
    cfg.noise_readout = float(noise.get("readout", cfg.noise_readout))

    mit = data.get("mitigation", {})
    cfg.post_select = bool(mit.get("post_select", False))
    cfg.readout_mitigation = bool(mit.get("readout", False))
    cfg.phase_scale = bool(mit.get("phase_scale", False))
    cfg.mitigation_order = str(mit.get("order", cfg.mitigation_order))
    cfg.calibration_shots = int(mit.get("calibration_shots", cfg.calibration_shots))

    obs = data.get("observables", {})
    if "names" in obs:
        raw = obs["names"]
        cfg.observables = [str(x) for x in (raw if isinstance(raw, list) else [raw])]

    time_sec = data.get("time", {})
    cfg.corr_u = str(time_sec.get("u", cfg.corr_u))
    cfg.corr_v = str(time_sec.get("v", cfg.corr_v))
    cfg.time_mode = str(time_sec.get("mode", cfg.time_mode))
    cfg.t_max = float(time_sec.get("t_max", cfg.t_max))
    cfg.n_t = int(time_sec.get("n_t", cfg.n_t))

    rec = data.get("recompile", {})
    cfg.qite_rounds = int(rec.get("qite_rounds", cfg.qite_rounds))
    cfg.time_rounds = int(rec.get("time_rounds", cfg.time_rounds))
    cfg.qite_family = str(rec.get("gate_family_qite", cfg.qite_family))
    cfg.target_fidelity = float(rec.get("target_fidelity", cfg.target_fidelity))

    cfg.seed = int(data.get("run", {}).get("seed", 0))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig):
    if cfg.delta_tau <= 0:
        raise ConfigError("qite.delta_tau must be positive")
    if cfg.trace_mode not in ("full", "stochastic"):
        raise ConfigError("trace.mode must be full or stochastic")
    if cfg.trace_mode == "stochastic" and not cfg.n_samples:
        raise ConfigError("stochastic trace needs trace.n_samples")
    if cfg.unitary_mode not in ("trotterized", "recompiled", "merged_two_site", "exact"):
        raise ConfigError(f"unknown qite.unitary_mode {cfg.unitary_mode!r}")
    if cfg.time_mode not in ("exact_propagator", "recompiled", "kak"):
        raise ConfigError(f"unknown time.mode {cfg.time_mode!r}")
    if cfg.mitigation_order not in ("readout_first", "post_select_first"):
        raise ConfigError("mitigation.order must be readout_first or post_select_first")
    step = 2.0 * cfg.delta_tau
    for beta in cfg.betas:
        if beta < 0 or abs(beta / step - round(beta / step)) > 1e-9:
            raise ConfigError(f"beta {beta} is not a multiple of 2*delta_tau")
    if cfg.initial_state:
        if len(cfg.initial_state) != cfg.model.n_sites or any(
            ch not in "01" for ch in cfg.initial_state
        ):
            raise ConfigError("qite.initial_state must be an n_sites bitstring")
    if cfg.n_t < 1:
        raise ConfigError("time.n_t must be positive")


def _observable_sum(name: str, n: int) -> PauliSum:
    if name.lower() == "energy":
        raise ValueError("resolved by caller")
    return PauliSum.build(n, [(1.0, PauliString.from_label(name, n))])


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, kind: str, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# spinqite-csv {CSV_VERSION} {kind}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# mitigation plumbing shared by thermal/corr commands
# ---------------------------------------------------------------------------

def _mitigation_factory(cfg: ExperimentConfig, hamiltonian: PauliSum,
                        noise, rng, n_total: Optional[int] = None):
    """Per-initial-state MitigationConfig builder, or None when disabled."""
    if not (cfg.post_select or cfg.readout_mitigation):
        return None
    n = hamiltonian.n_qubits if n_total is None else n_total
    calibration = None
    if cfg.readout_mitigation:
        calibration = calibrate_readout(noise, cfg.calibration_shots, n, rng)
    generator = None
    if cfg.post_select:
        syms = find_z2_symmetries(hamiltonian)
        z_type = [g for g in syms.generators if g.x_bits == 0]
        if not z_type:
            raise ConfigError("post-selection needs a Z-type symmetry generator")
        generator = z_type[0]
        if n_total is not None:
            generator = PauliString(generator.x_bits, generator.z_bits, n_total)

    def factory(initial_state: Optional[StateVector]):
        expected = 1
        if cfg.post_select and initial_state is not None:
            gen_sys = PauliString(
                generator.x_bits, generator.z_bits, initial_state.n_qubits
            )
            parity = sector_of(initial_state, StabilizerGroup((gen_sys,)))
            expected = parity[0]
        return MitigationConfig(
            post_select=cfg.post_select,
            readout=cfg.readout_mitigation,
            order=cfg.mitigation_order,
            generator=generator,
            expected_parity=expected,
            calibration=calibration,
        )

    return factory


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_model_info(cfg: ExperimentConfig, out_dir: Optional[Path]) -> int:
    h = cfg.hamiltonian()
    syms = find_z2_symmetries(h)
    lines = [f"model: {cfg.model.model} n_sites={cfg.model.n_sites}"]
    lines.append("terms:")
    for coeff, s in h.terms:
        lines.append(f"  {coeff:+g} * {s.label()}")
    lines.append(
        "symmetries: " + (", ".join(g.label() for g in syms.generators) or "none")
    )
    pool = pauli_pool(h, cfg.domain_size)
    odd_y = reduce_pool(pool, StabilizerGroup(()), True)
    reduced = reduce_pool(pool, syms, h.is_real_in_computational_basis())
    lines.append(
        f"pool (D={cfg.domain_size}): {len(pool)} raw, {len(odd_y)} odd-Y, "
        f"{len(reduced)} reduced"
    )
    lines.append("reduced pool: " + ", ".join(s.label() for s in reduced))
    eig = oracle.eigensystem(h)
    lines.append("eigenvalues: " + ", ".join(f"{v:.6f}" for v in eig.eigenvalues))
    text = "\n".join(lines)
    print(text)
    if out_dir is not None:
        (out_dir / "model_info.txt").write_text(text + "\n")
    return 0


def cmd_qite(cfg: ExperimentConfig, out_dir: Path) -> int:
    h = cfg.hamiltonian()
    label = cfg.initial_state or "0" * cfg.model.n_sites
    psi0 = StateVector.from_label(label)
    syms = find_z2_symmetries(h)
    noise = cfg.noise_model(h.n_qubits)
    rng = np.random.default_rng(cfg.seed)
    mit_factory = _mitigation_factory(cfg, h, noise, rng)
    traj = run_qite(
        psi0,
        h,
        cfg.qite_config(),
        symmetries=syms,
        noise=noise,
        rng=rng,
        mitigation=mit_factory(psi0) if mit_factory else None,
        initial_label=label,
    )
    rows = []
    for k, rec in enumerate(traj.records):
        tau = rec.step * cfg.delta_tau
        exact = oracle.exact_ite(psi0, h, tau)
        from .statesim import expectation

        rows.append(
            (
                rec.step,
                tau,
                rec.energy,
                rec.c,
                rec.residual,
                expectation(exact, h),
            )
        )
    if not traj.aborted and traj.final_state is not None:
        tau = cfg.n_steps * cfg.delta_tau
        from .statesim import expectation

        final_e = (
            expectation(traj.final_state, h)
            if cfg.shots is None and noise is None
            else None
        )
        if cfg.n_steps == 0:
            e0, _ = _energy_row(psi0, h)
            rows.append((0, 0.0, e0, None, None, e0))
        elif final_e is not None:
            rows.append(
                (
                    cfg.n_steps,
                    tau,
                    final_e,
                    None,
                    None,
                    expectation(oracle.exact_ite(psi0, h, tau), h),
                )
            )
    write_csv(
        out_dir / "qite.csv",
        "qite",
        ("step", "tau", "energy", "c", "residual", "exact_energy"),
        rows,
    )
    write_trajectory(out_dir / "trajectory.txt", traj)
    if traj.aborted:
        print(f"aborted: {traj.abort_reason}", file=sys.stderr)
        return 3
    return 0


def _energy_row(state, h):
    from .statesim import expectation

    e = expectation(state, h)
    return e, 0.0


def cmd_thermal(cfg: ExperimentConfig, out_dir: Path) -> int:
    h = cfg.hamiltonian()
    if not cfg.betas:
        raise ConfigError("thermal needs trace.betas or trace.beta_max")
    syms = find_z2_symmetries(h)
    noise = cfg.noise_model(h.n_qubits)
    rng = np.random.default_rng(cfg.seed)
    mit_factory = _mitigation_factory(cfg, h, noise, rng)
    trace_cfg = TraceConfig(cfg.trace_mode, cfg.n_samples)
    for name in cfg.observables:
        obs = h if name.lower() == "energy" else _observable_sum(name, h.n_qubits)
        series = thermal_sweep(
            obs,
            h,
            cfg.betas,
            trace_cfg,
            cfg.qite_config(),
            noise=noise,
            rng=rng,
            symmetries=syms,
            mitigation_factory=mit_factory,
            with_exact=True,
        )
        rows = [
            (b, v, var, ex)
            for b, v, var, ex in zip(
                series.betas, series.values, series.variances, series.exact
            )
        ]
        write_csv(
            out_dir / f"thermal_{name.lower()}.csv",
            "thermal",
            ("beta", "value", "variance", "exact_value"),
            rows,
        )
    return 0


def _corr_series(cfg: ExperimentConfig, beta: float, rng) -> CorrelationSeries:
    h = cfg.hamiltonian()
    n = h.n_qubits
    u = PauliString.from_label(cfg.corr_u, n)
    v = PauliString.from_label(cfg.corr_v, n)
    syms = find_z2_symmetries(h)
    noise = cfg.noise_model(n + 1)
    mit_factory = _mitigation_factory(cfg, h, noise, rng, n_total=n + 1)
    series = dynamical_correlation(
        u,
        v,
        h,
        beta,
        cfg.times(),
        TraceConfig(cfg.trace_mode, cfg.n_samples),
        cfg.qite_config(),
        time_mode=cfg.time_mode,
        noise=noise,
        shots=cfg.shots,
        rng=rng,
        symmetries=syms,
        mitigation_factory=mit_factory,
        with_exact=True,
        recompile_rounds=cfg.time_rounds,
    )
    if cfg.phase_scale:
        exact = series.exact
        series = phase_scale_correct(series)
        series.exact = exact
    return series


def cmd_corr(cfg: ExperimentConfig, out_dir: Path) -> int:
    if not cfg.betas:
        raise ConfigError("corr needs trace.betas")
    if cfg.n_t < 1:
        raise ConfigError("corr needs a nonempty time grid")
    rng = np.random.default_rng(cfg.seed)
    for beta in cfg.betas:
        series = _corr_series(cfg, beta, rng)
        rows = [
            (
                t,
                z.real,
                z.imag,
                math.sqrt(vr),
                math.sqrt(vi),
                ex.real,
                ex.imag,
            )
            for t, z, vr, vi, ex in zip(
                series.times, series.values, series.var_re, series.var_im, series.exact
            )
        ]
        write_csv(
            out_dir / f"corr_beta{beta:g}.csv",
            "corr",
            ("t", "re", "im", "re_err", "im_err", "exact_re", "exact_im"),
            rows,
        )
    return 0


def cmd_spectrum(cfg: ExperimentConfig, out_dir: Path, series_csv=None) -> int:
    if not cfg.betas:
        raise ConfigError("spectrum needs trace.betas")
    rng = np.random.default_rng(cfg.seed)
    for beta in cfg.betas:
        if series_csv is not None:
            times, values, exact = _read_corr_csv(series_csv)
            series = CorrelationSeries(
                beta=beta,
                times=times,
                values=values,
                var_re=np.zeros_like(times),
                var_im=np.zeros_like(times),
                exact=exact,
            )
        else:
            series = _corr_series(cfg, beta, rng)
        spec = spectral_density(series)
        exact_spec = spectral_density(
            CorrelationSeries(
                beta=beta,
                times=series.times,
                values=series.exact,
                var_re=np.zeros_like(series.times),
                var_im=np.zeros_like(series.times),
            )
        )
        rows = [
            (om, s.real, s.imag, a2, ea2)
            for om, s, a2, ea2 in zip(
                spec.omegas, spec.values, spec.abs2, exact_spec.abs2
            )
        ]
        write_csv(
            out_dir / f"spectrum_beta{beta:g}.csv",
            "spectrum",
            ("omega", "s_re", "s_im", "s_abs2", "exact_abs2"),
            rows,
        )
        if series_csv is not None:
            break
    return 0


def _read_corr_csv(path):
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# spinqite-csv"):
            raise ConfigError("not a spinqite CSV")
        header = fh.readline().strip().split(",")
        idx = {name: k for k, name in enumerate(header)}
        times, values, exact = [], [], []
        for line in fh:
            parts = line.strip().split(",")
            times.append(float(parts[idx["t"]]))
            values.append(float(parts[idx["re"]]) + 1j * float(parts[idx["im"]]))
            exact.append(
                float(parts[idx["exact_re"]]) + 1j * float(parts[idx["exact_im"]])
            )
    return np.array(times), np.array(values), np.array(exact)


def _load_unitary(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, dtype=complex)


def cmd_recompile(args) -> int:
    u = _load_unitary(args.target)
    n = int(round(math.log2(u.shape[0])))
    template = BrickTemplate(n, args.rounds, args.family)
    rng = np.random.default_rng(args.seed)
    rho_in = StateVector.zero(n)
    result = recompile_unitary(
        u, rho_in, template, target_fidelity=args.fidelity, rng=rng,
        target_id=str(args.target),
    )
    lines = [
        f"target = {args.target}",
        f"n_qubits = {n}",
        f"rounds = {args.rounds}",
        f"family = {args.family}",
        f"fidelity = {result.fidelity:.12f}",
        f"reached = {result.reached}",
        f"iterations = {result.iterations}",
        "theta = " + " ".join(f"{v:.17g}" for v in result.theta),
    ]
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "recompile.txt").write_text(text + "\n")
    if not result.reached:
        print("warning: target fidelity not reached", file=sys.stderr)
    return 0


def cmd_kak(args) -> int:
    u = _load_unitary(args.target)
    result = kak_decompose(u)
    err = reconstruction_error(u, result)
    lines = [f"cnots = {result.cnot_count}", f"exact_two_cnot = {result.exact_two_cnot}"]
    for g in result.circuit.gates:
        lines.append(str(g))
    lines.append(f"reconstruction_error = {err:.3e}")
    text = "\n".join(lines)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "kak.txt").write_text(text + "\n")
    return 0


def cmd_calibrate(cfg: ExperimentConfig, out_dir: Path) -> int:
    h = cfg.hamiltonian()
    noise = cfg.noise_model(h.n_qubits)
    if noise is None:
        raise ConfigError("calibration needs noise.enabled = true")
    rng = np.random.default_rng(cfg.seed)
    calib = calibrate_readout(noise, cfg.calibration_shots, h.n_qubits, rng)
    out_dir.mkdir(parents=True, exist_ok=True)
    calib.save(out_dir / "calibration.json")
    print(f"wrote {out_dir / 'calibration.json'}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinqite",
        description="Finite-temperature spin-chain observables via imaginary-time evolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def with_common(p, needs_out=True):
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override run seed")
        p.add_argument("--shots", type=int, default=None, help="override shot count (0 = exact)")
        p.add_argument("--noise", action="store_true", help="force the synthetic noise model on")
        p.add_argument("--out", required=needs_out, help="output directory")

    with_common(sub.add_parser("model-info", help="print model summary"), needs_out=False)
    with_common(sub.add_parser("qite", help="single imaginary-time trajectory"))
    with_common(sub.add_parser("thermal", help="thermal observables over a beta grid"))
    with_common(sub.add_parser("corr", help="dynamical correlation function"))
    spec_p = sub.add_parser("spectrum", help="spectral density of the correlation series")
    with_common(spec_p)
    spec_p.add_argument("--series", default=None, help="existing corr CSV to transform")

    rec = sub.add_parser("recompile", help="fit a dense unitary to a brick circuit")
    rec.add_argument("--target", required=True, help=".npy or text unitary file")
    rec.add_argument("--rounds", type=int, default=3)
    rec.add_argument("--family", default="ry", choices=("ry", "u3"))
    rec.add_argument("--fidelity", type=float, default=0.999)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--out", default=None)

    kak = sub.add_parser("kak", help="two-qubit CNOT synthesis of a 4x4 unitary")
    kak.add_argument("--target", required=True)
    kak.add_argument("--out", default=None)

    with_common(sub.add_parser("calibrate", help="readout calibration matrix"))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "recompile":
            return cmd_recompile(args)
        if args.command == "kak":
            return cmd_kak(args)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.shots is not None:
            cfg.shots = None if args.shots == 0 else args.shots
        if args.noise:
            cfg.noise_enabled = True
        out_dir = Path(args.out) if args.out else None
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "model-info":
            return cmd_model_info(cfg, out_dir)
        if args.command == "qite":
            return cmd_qite(cfg, out_dir)
        if args.command == "thermal":
            return cmd_thermal(cfg, out_dir)
        if args.command == "corr":
            return cmd_corr(cfg, out_dir)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, out_dir, args.series)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, out_dir)
        raise ConfigError(f"unknown command {args.command}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (QiteAbort, TraceError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
