"""Command-line workflows: model, evolve, spectrum, compare, scaling, defaults.

Outputs go under $MAGNONRING_OUTPUT_ROOT (default ./magnonring-out) unless
--output is given. Exit codes: 0 success, 2 configuration error, 3 backend
size limit.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .hamiltonian import SizeLimit, build_model, material_preset
from .lattice import LatticeSpec, WaveVector, canonical_label, high_symmetry_point

OUTPUT_ENV = "MAGNONRING_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_LIMIT = 0, 2, 3
BACKENDS = ("krylov", "dense", "statevector", "noisy")
# Trotter step per wave vector in units of 1/a
TAU_IN_INVERSE_A = {"G": "0.374", "K": "0.445", "M": "0.72"}


class ConfigError(ValueError):
    pass


def tau_for(q_label: str, a: float) -> float:
    """Step in 1/meV; exact decimal arithmetic so 0.72 / 3.2 is exactly 0.225."""
    return float(Fraction(TAU_IN_INVERSE_A[canonical_label(q_label)]) / Fraction(str(a)))


@dataclass
class RunConfig:
    material: str = "CrBr3"
    a_choice: str = "bare"
    q_labels: list = field(default_factory=lambda: ["G", "K", "M"])
    n_cells: list = field(default_factory=lambda: [3])
    tau: dict = field(default_factory=dict)  # per-q override in 1/meV
    n_steps: int = 19
    quench_angle: float = 0.3 * math.pi
    backend: str = "krylov"
    reference_backend: str = "krylov"
    noise: str = "auto"  # "auto" picks the calibration row for (N, q)
    twirls: int = 16
    shots: int = 512
    shots_per_trajectory: int = 128
    calibration_shots: int = 4096
    seed: int = 0
    zero_pad: int = 8
    window: str = "none"
    n_grid: int = 512
    bootstrap: int = 200
    scaling_cells: list = field(default_factory=lambda: [3, 6, 9, 10])
    scaling_backends: list = field(default_factory=lambda: ["krylov"])
    workers: int = 1
    save_shots: bool = False
    output: str | None = None

    def validate(self):
        try:
            preset = material_preset(self.material)
            self.q_labels = [canonical_label(q) for q in self.q_labels]
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.a_choice not in ("bare", "renorm"):
            raise ConfigError("a_choice must be 'bare' or 'renorm'")
        if self.backend not in BACKENDS or self.reference_backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.n_steps < 1 or self.twirls < 1 or self.shots < 1 or self.zero_pad < 1:
            raise ConfigError("n_steps, twirls, shots and zero_pad must be positive")
        if self.shots % self.shots_per_trajectory:
            raise ConfigError("shots must be a multiple of shots_per_trajectory")
        if any(int(c) < 1 for c in self.n_cells + self.scaling_cells):
            raise ConfigError("n_cells must be positive")
        if self.window not in ("none", "gaussian"):
            raise ConfigError("window must be 'none' or 'gaussian'")
        return preset

    def a_value(self):
        p = material_preset(self.material)
        return p.a_bare if self.a_choice == "bare" else p.a_renorm

    def tau_for(self, q):
        q = canonical_label(q)
        if q in self.tau:
            return float(self.tau[q])
        return tau_for(q, self.a_value())

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)


DEFAULT_CONFIG = RunConfig()
# default protocol: tau_M = 0.72 / a with a = 3.2 meV
assert DEFAULT_CONFIG.tau_for("M") == 0.225


# --------------------------------------------------------------------------
# manifest and writing


def conventions():
    from .simulator import DEPOLARIZING_CONVENTION

    lat = LatticeSpec.honeycomb()
    return {
        "lattice": {"a1": [float(x) for x in lat.a1], "a2": [float(x) for x in lat.a2]},
        "bz_points": {k: high_symmetry_point(k).to_dict() for k in ("G", "K", "M")},
        "depolarizing": DEPOLARIZING_CONVENTION,
        "fourier": "F(w) = sum_t C(t) exp(+i w t), w_k = 2 pi k / (n_pad tau), shifted by -alpha",
        "signal": "C(t) = -i/N sum_j <S^-_j(0)> <S^+_j(t)>",
        "qubit_order": "qubit 0 is the most significant bit; |0> = spin up",
    }


class Run:
    """Output directory, manifest identity and stage timings of one invocation."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        root = cfg.output or os.path.join(os.environ.get(OUTPUT_ENV, "magnonring-out"), command)
        self.dir = Path(root)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "command": command,
            "config": cfg.to_dict() | {"output": None},
            "seeds": {"master": cfg.seed},
            "version": __version__,
            "conventions": conventions(),
        }
        blob = json.dumps(self.manifest, sort_keys=True).encode()
        self.hash = hashlib.sha256(blob).hexdigest()[:16]
        self.outputs = []
        self.timings = []

    def stage(self, name, seconds, **labels):
        self.timings.append({"stage": name, "seconds": seconds, **labels})

    def write_json(self, name, obj):
        path = self.dir / name
        with open(path, "w") as fh:
            json.dump({"manifest_hash": self.hash, **obj}, fh, indent=1, sort_keys=True)
            fh.write("\n")
        self.outputs.append(name)
        return path

    def write_csv(self, name, text):
        path = self.dir / name
        with open(path, "w") as fh:
            fh.write(f"# manifest {self.hash}\n")
            fh.write(text)
        self.outputs.append(name)
        return path

    def finish(self):
        t0 = time.perf_counter()
        man = dict(self.manifest, manifest_hash=self.hash, outputs=sorted(self.outputs),
                   backend_kernels=kernels.BACKEND)
        with open(self.dir / "manifest.json", "w") as fh:
            json.dump(man, fh, indent=1, sort_keys=True)
            fh.write("\n")
        ser = time.perf_counter() - t0
        with open(self.dir / "timings.json", "w") as fh:
            json.dump({"manifest_hash": self.hash, "stages": self.timings,
                       "serialization_seconds_manifest": ser}, fh, indent=1)
            fh.write("\n")


def _strip_comments(text):
    return "".join(line for line in text.splitlines(True) if not line.startswith("#"))


def read_csv_text(path):
    with open(path) as fh:
        return _strip_comments(fh.read())


# --------------------------------------------------------------------------
# jobs


def _model(cfg, q, n_cells):
    q = q if isinstance(q, WaveVector) else canonical_label(q)
    return build_model(cfg.material, q, int(n_cells), cfg.a_choice)


def _noise_for(cfg, n, q):
    from .simulator import noise_preset, preset_for

    try:
        if cfg.noise == "auto":
            try:
                return preset_for(n, q)
            except ValueError:
                return noise_preset("ideal")
        return noise_preset(cfg.noise)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def evolve_job(cfg: RunConfig, q: str, n_cells: int, backend: str | None = None):
    """Returns (ObservableTable-like dict, extra) for one (q, N) and backend."""
    from .propagators import EvolutionRequest, dense_evolve, krylov_evolve, quench_state
    from .simulator import run_protocol, statevector_protocol

    backend = backend or cfg.backend
    t0 = time.perf_counter()
    model = _model(cfg, q, n_cells)
    t_model = time.perf_counter() - t0
    n = model.n_sites
    tau = cfg.tau_for(q)
    extra = {"alpha": model.alpha, "tau": tau, "n_sites": n, "q": q, "backend": backend,
             "stage_seconds": {"model": t_model}}
    t1 = time.perf_counter()
    if backend in ("krylov", "dense"):
        req = EvolutionRequest.uniform(model, quench_state(n, cfg.quench_angle), tau, cfg.n_steps)
        tab = krylov_evolve(req) if backend == "krylov" else dense_evolve(req)
        splus, se = tab.splus, None
        extra["stats"] = {k: v for k, v in tab.stats.items() if k != "states"}
    elif backend == "statevector":
        tab = statevector_protocol(model, tau, cfg.n_steps, cfg.quench_angle)
        splus, se = tab.splus, None
    else:
        noise = _noise_for(cfg, n, q)
        res = run_protocol(model, tau, cfg.n_steps, noise, cfg.twirls, cfg.shots, cfg.seed,
                           cfg.shots_per_trajectory, cfg.quench_angle, cfg.calibration_shots)
        splus, se = res.splus(), res.sx_se + 1j * res.sy_se
        extra["protocol"] = {"executions": res.executions, "shots_per_execution": res.shots_per_execution,
                             "noise": res.meta["noise"], "cz_per_step": res.meta["cz_per_step"],
                             "calibration": res.calibration.to_dict() if res.calibration else None}
        extra["batches"] = res.batches
        extra["calibration_obj"] = res.calibration
        extra["stage_seconds"].update(res.meta["stage_seconds"])
        tab = None
    extra["stage_seconds"]["evolve"] = time.perf_counter() - t1
    times = tau * np.arange(cfg.n_steps + 1)
    return {"times": times, "splus": splus, "se": se, "table": tab}, extra


def _run_jobs(cfg, jobs, fn):
    if cfg.workers <= 1 or len(jobs) <= 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(fn, *j) for j in jobs]
        # merged in job order, independent of completion order
        return [f.result() for f in futures]


def _trace_csv(times, splus, se=None):
    lines = ["t,site,Sx,Sy" + (",Sx_se,Sy_se" if se is not None else "")]
    for k, t in enumerate(times):
        for j in range(splus.shape[1]):
            row = [repr(float(t)), str(j), repr(float(splus[k, j].real)), repr(float(splus[k, j].imag))]
            if se is not None:
                row += [repr(float(se[k, j].real)), repr(float(se[k, j].imag))]
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _signal_csv(trace):
    lines = ["t,re,im"]
    for t, c in zip(trace.times, trace.c_values):
        lines.append(f"{float(t)!r},{float(c.real)!r},{float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def read_trace_csv(path, alpha=0.0):
    """Per-site S^+ table written by 'evolve' -> TimeTrace."""
    import csv
    import io

    from .spectra import assemble_signal

    rows = list(csv.DictReader(io.StringIO(read_csv_text(path))))
    times = sorted({float(r["t"]) for r in rows})
    n = max(int(r["site"]) for r in rows) + 1
    ti = {t: k for k, t in enumerate(times)}
    sp = np.zeros((len(times), n), dtype=complex)
    for r in rows:
        sp[ti[float(r["t"])], int(r["site"])] = float(r["Sx"]) + 1j * float(r["Sy"])
    return assemble_signal(sp, np.array(times), source=str(path), alpha=alpha)


def _tag(q, n):
    return f"{q}_N{n}"


# --------------------------------------------------------------------------
# commands


def cmd_defaults(cfg, args):
    d = RunConfig().to_dict()
    d["tau_resolved"] = {q: RunConfig().tau_for(q) for q in ("G", "K", "M")}
    d["tau_in_inverse_a"] = TAU_IN_INVERSE_A
    print(json.dumps(d, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_model(cfg, args):
    run = Run(cfg, "model")
    preset = material_preset(cfg.material)
    for q in cfg.q_labels:
        for nc in cfg.n_cells:
            t0 = time.perf_counter()
            m = _model(cfg, q, nc)
            run.stage("model", time.perf_counter() - t0, q=q, n_sites=m.n_sites)
            run.write_json(f"model_{_tag(q, m.n_sites)}.json",
                           {"model": m.to_dict(), "material": preset.to_dict(), "a_choice": cfg.a_choice})
    run.finish()
    print(run.dir)
    return EXIT_OK


def _evolve_all(cfg, run, backend=None):
    jobs = [(cfg, q, nc, backend) for q in cfg.q_labels for nc in cfg.n_cells]
    results = _run_jobs(cfg, jobs, evolve_job)
    from .spectra import assemble_signal

    out = []
    for (_, q, nc, _), (data, extra) in zip(jobs, results):
        n = extra["n_sites"]
        for stage, sec in extra["stage_seconds"].items():
            run.stage(stage, sec, q=q, n_sites=n, backend=extra["backend"])
        trace = assemble_signal(data["splus"], data["times"], source=extra["backend"], alpha=extra["alpha"])
        out.append((q, n, data, extra, trace))
    return out


def cmd_evolve(cfg, args):
    run = Run(cfg, "evolve")
    for q, n, data, extra, trace in _evolve_all(cfg, run):
        tag = _tag(q, n)
        run.write_csv(f"trace_{tag}.csv", _trace_csv(data["times"], data["splus"], data["se"]))
        run.write_csv(f"signal_{tag}.csv", _signal_csv(trace))
        info = {k: v for k, v in extra.items() if k not in ("batches", "calibration_obj", "stage_seconds")}
        run.write_json(f"evolve_{tag}.json", info)
        if cfg.save_shots and "batches" in extra:
            shot_dir = run.dir / f"shots_{tag}"
            shot_dir.mkdir(exist_ok=True)
            for (k, b, inst), batch in sorted(extra["batches"].items()):
                batch.save(shot_dir / f"t{k:02d}_{b}_i{inst:02d}")
            run.outputs.append(f"shots_{tag}/")
    run.finish()
    print(run.dir)
    return EXIT_OK


def _spectrum_with_band(cfg, data, extra, trace):
    from .spectra import bootstrap_band, fourier

    if "batches" in extra and cfg.bootstrap > 0:
        spec, _ = bootstrap_band(extra["batches"].values(), extra["tau"], extra["alpha"],
                                 extra["calibration_obj"], cfg.bootstrap, cfg.seed, cfg.zero_pad, cfg.window)
        return spec
    return fourier(trace, cfg.zero_pad, cfg.window)


def cmd_spectrum(cfg, args):
    from .spectra import fourier

    run = Run(cfg, "spectrum")
    if args.trace:
        trace = read_trace_csv(args.trace, alpha=args.alpha)
        spec = fourier(trace, cfg.zero_pad, cfg.window)
        run.write_csv("spectrum_input.csv", spec.to_csv())
        run.write_json("peaks_input.json", {"peaks": spec.peaks(), "bin_width": spec.bin_width})
    else:
        for q, n, data, extra, trace in _evolve_all(cfg, run):
            t0 = time.perf_counter()
            spec = _spectrum_with_band(cfg, data, extra, trace)
            run.stage("spectrum", time.perf_counter() - t0, q=q, n_sites=n)
            tag = _tag(q, n)
            run.write_csv(f"spectrum_{tag}.csv", spec.to_csv())
            run.write_json(f"peaks_{tag}.json", {"peaks": spec.peaks(), "bin_width": spec.bin_width,
                                                 "zero_pad": spec.zero_pad, "window": spec.window,
                                                 "alpha_shift": spec.meta["alpha_shift"]})
    if args.q_path_map:
        _q_path_map(cfg, run, args.q_path_points)
    run.finish()
    print(run.dir)
    return EXIT_OK


def _q_path_map(cfg, run, points_per_segment):
    """Krylov spectra along G -> K -> M -> G at the first n_cells entry."""
    from .propagators import EvolutionRequest, krylov_evolve, quench_state
    from .spectra import assemble_signal, fourier

    nc = cfg.n_cells[0]
    corners = [high_symmetry_point(k).vec for k in ("G", "K", "M", "G")]
    lines = ["path_index,qx,qy,omega,magnitude"]
    idx = 0
    tau = cfg.tau_for(cfg.q_labels[0])
    for a, b in zip(corners[:-1], corners[1:]):
        for s in np.linspace(0.0, 1.0, points_per_segment, endpoint=False):
            qv = a + s * (b - a)
            wv = WaveVector(float(qv[0]), float(qv[1]), f"path{idx}")
            m = _model(cfg, wv, nc)
            req = EvolutionRequest.uniform(m, quench_state(m.n_sites, cfg.quench_angle), tau, cfg.n_steps)
            spec = fourier(assemble_signal(krylov_evolve(req), alpha=m.alpha), cfg.zero_pad, cfg.window)
            for w, mag in zip(spec.omega, spec.magnitude):
                lines.append(f"{idx},{qv[0]!r},{qv[1]!r},{float(w)!r},{float(mag)!r}")
            idx += 1
    run.write_csv("q_path_map.csv", "\n".join(lines) + "\n")


def cmd_compare(cfg, args):
    from .spectra import fit_damping, fourier

    run = Run(cfg, "compare")
    if args.target and args.reference:
        ref = read_trace_csv(args.reference, alpha=args.alpha)
        tgt = read_trace_csv(args.target, alpha=args.alpha)
        rep = fit_damping(ref, fourier(tgt, cfg.zero_pad, cfg.window), cfg.n_grid)
        run.write_json("similarity_input.json", rep.to_dict())
        rows = [("input", 0, rep)]
    else:
        targets = _evolve_all(cfg, run)
        refs = _evolve_all(cfg, run, cfg.reference_backend)
        rows = []
        for (q, n, data, extra, tgt), (_, _, _, _, ref) in zip(targets, refs):
            t0 = time.perf_counter()
            rep = fit_damping(ref, fourier(tgt, cfg.zero_pad, cfg.window), cfg.n_grid)
            run.stage("compare", time.perf_counter() - t0, q=q, n_sites=n)
            run.write_json(f"similarity_{_tag(q, n)}.json",
                           rep.to_dict() | {"target_backend": cfg.backend, "reference_backend": cfg.reference_backend})
            rows.append((q, n, rep))
    lines = ["q,n_sites,cosine,mismatch,gamma,at_boundary"]
    for q, n, rep in rows:
        lines.append(f"{q},{n},{rep.cosine!r},{rep.mismatch!r},{rep.gamma!r},{int(rep.at_boundary)}")
    run.write_csv("similarity_summary.csv", "\n".join(lines) + "\n")
    run.finish()
    print(run.dir)
    return EXIT_OK


SCALING_NOTE = (
    "Wall times are local emulation compute only. The hardware runtime in the reference study is "
    "approximately constant in N because it is dominated by per-circuit overheads on the device; "
    "that is a hardware property and is not reproducible by a classical emulator, whose cost grows "
    "exponentially with N."
)


def cmd_scaling(cfg, args):
    run = Run(cfg, "scaling")
    lines = ["backend,q,n_sites,stage,seconds"]
    report = []
    for backend in cfg.scaling_backends:
        for q in cfg.q_labels:
            for nc in cfg.scaling_cells:
                sub = dataclasses.replace(cfg, n_cells=[nc], q_labels=[q])
                t0 = time.perf_counter()
                _, extra = evolve_job(sub, q, nc, backend)
                total = time.perf_counter() - t0
                stages = dict(extra["stage_seconds"])
                # bookkeeping outside the named stages, so the breakdown sums to the total
                stages["other"] = max(0.0, total - sum(stages.values()))
                n = extra["n_sites"]
                for stage, sec in stages.items():
                    lines.append(f"{backend},{q},{n},{stage},{sec!r}")
                lines.append(f"{backend},{q},{n},total,{total!r}")
                report.append({"backend": backend, "q": q, "n_sites": n, "total_seconds": total,
                               "stages": stages})
    run.write_csv("scaling.csv", "\n".join(lines) + "\n")
    # wall times are in the payload by design; this report is excluded from bit-exact reproduction
    run.write_json("scaling_report.json", {"rows": report, "note": SCALING_NOTE})
    run.finish()
    print(SCALING_NOTE)
    print(run.dir)
    return EXIT_OK


COMMANDS = {
    "model": cmd_model,
    "evolve": cmd_evolve,
    "spectrum": cmd_spectrum,
    "compare": cmd_compare,
    "scaling": cmd_scaling,
    "defaults": cmd_defaults,
}


def _parser():
    p = argparse.ArgumentParser(prog="magnonring", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        if name == "defaults":
            continue
        s.add_argument("--config", help="JSON file with RunConfig fields")
        s.add_argument("--material")
        s.add_argument("--a-choice", dest="a_choice")
        s.add_argument("--q", dest="q_labels", nargs="+")
        s.add_argument("--n-cells", dest="n_cells", type=int, nargs="+")
        s.add_argument("--n-steps", dest="n_steps", type=int)
        s.add_argument("--tau", nargs="+", metavar="Q=VALUE", help="per-q step override in 1/meV")
        s.add_argument("--quench-angle", dest="quench_angle", type=float)
        s.add_argument("--backend", choices=BACKENDS)
        s.add_argument("--reference-backend", dest="reference_backend", choices=BACKENDS)
        s.add_argument("--noise")
        s.add_argument("--twirls", type=int)
        s.add_argument("--shots", type=int)
        s.add_argument("--shots-per-trajectory", dest="shots_per_trajectory", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--zero-pad", dest="zero_pad", type=int)
        s.add_argument("--window", choices=("none", "gaussian"))
        s.add_argument("--bootstrap", type=int)
        s.add_argument("--workers", type=int)
        s.add_argument("--output", help=f"output directory (default ${OUTPUT_ENV}/<command>)")
        if name == "evolve":
            s.add_argument("--save-shots", dest="save_shots", action="store_true", default=None)
        if name == "spectrum":
            s.add_argument("--trace", help="trace CSV from 'evolve' instead of running a backend")
            s.add_argument("--alpha", type=float, default=0.0)
            s.add_argument("--q-path-map", action="store_true")
            s.add_argument("--q-path-points", type=int, default=6)
        if name == "compare":
            s.add_argument("--target", help="target trace CSV")
            s.add_argument("--reference", help="reference trace CSV")
            s.add_argument("--alpha", type=float, default=0.0)
        if name == "scaling":
            s.add_argument("--scaling-cells", dest="scaling_cells", type=int, nargs="+")
            s.add_argument("--scaling-backends", dest="scaling_backends", nargs="+", choices=BACKENDS)
    return p


def build_config(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                d = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "tau":
            d[f.name] = v
    if getattr(args, "tau", None):
        tau = dict(d.get("tau", {}))
        for item in args.tau:
            try:
                k, v = item.split("=")
                tau[canonical_label(k)] = float(v)
            except ValueError as exc:
                raise ConfigError(f"bad --tau entry {item!r}") from exc
        d["tau"] = tau
    try:
        cfg = RunConfig.from_dict(d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.validate()
    return cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = RunConfig() if args.command == "defaults" else build_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeLimit as exc:
        print(f"backend limit: {exc}", file=sys.stderr)
        return EXIT_LIMIT


if __name__ == "__main__":
    sys.exit(main())
