"""Command-line front end: ``sgmeta <command> [options] --out DIR``.

Every command writes its data files plus ``manifest.json`` (arguments,
parameters, code version, SHA-256 of each output).  ``sgmeta rerun
manifest.json --out DIR`` replays the recorded arguments and checks that the
outputs are byte-identical.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .fields import FourierField, ModelParams, potential

log = logging.getLogger("sgmeta")

SCHEMA_VERSION = "1.0"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# serialization helpers
# ---------------------------------------------------------------------------

def _clean(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def load_schema(name: str) -> dict:
    text = resources.files("sgmeta").joinpath("schemas", f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate(doc: dict, schema_name: str):
    jsonschema.validate(doc, load_schema(schema_name))


def write_json(path: Path, doc: dict, schema_name: str | None = None) -> dict:
    doc = _clean(doc)
    if schema_name:
        validate(doc, schema_name)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return doc


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def sha256_of(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    params: dict | None = None
    config: dict | None = None
    seed: int | None = None
    outputs: dict = field(default_factory=dict)
    code_version: str = __version__
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            epoch = os.environ.get("SOURCE_DATE_EPOCH")
            now = (datetime.fromtimestamp(int(epoch), timezone.utc) if epoch
                   else datetime.now(timezone.utc))
            self.timestamp = now.isoformat()

    def record(self, out_dir: Path, *names):
        for n in names:
            self.outputs[n] = {"sha256": sha256_of(out_dir / n)}

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "manifest", **asdict(self)}

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        write_json(path, self.to_dict(), "manifest")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        doc = json.loads(Path(path).read_text("utf-8"))
        validate(doc, "manifest")
        doc.pop("schema_version")
        doc.pop("kind")
        return cls(**doc)


# ---------------------------------------------------------------------------
# argument types
# ---------------------------------------------------------------------------

def _positive_float(s):
    try:
        v = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}")
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be a positive finite number, got {s}")
    return v


def _nonneg_float(s):
    v = float(s)
    if not (v >= 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def _positive_int(s):
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {s!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {s}")
    return v


def _seed(s):
    v = int(s)
    if not (0 <= v < 2 ** 64):
        raise argparse.ArgumentTypeError("seed must be in [0, 2^64)")
    return v


def _int_list(s):
    try:
        vals = [int(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}")
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("need positive integers")
    return vals


def _add_model(p, N_default=32, gamma_default=None, beta_default=None):
    p.add_argument("--gamma", type=_positive_float, required=gamma_default is None, default=gamma_default)
    p.add_argument("--beta", type=_positive_float, required=beta_default is None, default=beta_default)
    p.add_argument("--eps", type=_positive_float, default=0.1, help="noise strength epsilon")
    p.add_argument("--N", type=_positive_int, default=N_default, help="Fourier truncation |n| <= N")
    p.add_argument("--confining-k", type=int, default=1)


def _add_sim(p):
    p.add_argument("--dt", type=_positive_float, default=1e-3)
    p.add_argument("--scheme", choices=["semi-implicit", "exponential"], default="semi-implicit")
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--max-time", type=_positive_float, default=1e4)
    p.add_argument("--check-every", type=_positive_int, default=10)
    p.add_argument("--kappa", type=_nonneg_float, default=0.05)
    p.add_argument("--delta", type=_positive_float, default=None)
    p.add_argument("--c0", type=_positive_float, default=1.0)


def _model(a) -> ModelParams:
    return ModelParams(a.gamma, a.beta, a.eps, a.N, a.confining_k)


def _config(a):
    from .simulate import SimConfig
    return SimConfig(dt=a.dt, scheme=a.scheme, seed=a.seed, max_time=a.max_time,
                     check_every=a.check_every, kappa=a.kappa, delta=a.delta, c0=a.c0)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_prefactor(a, out: Path, man: RunManifest):
    from . import prefactor as pf
    from .spectrum import spectrum_at
    from .stationary import constant_saddle, elliptic_saddle

    p = _model(a)
    regime = p.require_regime()
    man.params = p.to_dict()
    if regime == "sub":
        finite, closed = pf.prefactor_sub(p)
        estimates = [finite, closed]
        spec = spectrum_at(constant_saddle(p).field, p, keep_vectors=False)
        gy = pf.gelfand_yaglom_ratio(p.gamma_beta)
        det = {"method": "Gelfand-Yaglom", "ratio": gy,
               "closed_form": -(math.sin(math.pi * math.sqrt(p.gamma_beta))
                                / math.sinh(math.pi * math.sqrt(p.gamma_beta))) ** 2,
               "finite_N_log_ratio": finite.extras["log_product_ratio"]}
    else:
        saddle = elliptic_saddle(p)
        spec = saddle.spectrum
        estimates = [pf.prefactor_super(p, saddle), pf.prefactor_super_closed(p, saddle)]
        mt = pf.mckane_tarlie(p.gamma, p.beta)
        det = {"method": "McKane-Tarlie", "ratio": mt.value, "m": mt.m,
               "finite_N_ratio": pf.finite_n_det_prime_ratio(p, spec),
               "hooks": mt.hooks, "manifold_length": pf.manifold_length(saddle.field)}
    doc = {
        "schema_version": SCHEMA_VERSION, "kind": "prefactor", "params": p.to_dict(),
        "regime": regime,
        "estimates": [e.to_dict(p.epsilon) for e in estimates],
        "determinant": det,
        "spectrum": spec.summary(),
    }
    write_json(out / "prefactor.json", doc, "prefactor")
    return ["prefactor.json"]


def bifurcation_rows(gamma: float, gb_values, N: int = 64):
    """Rows (gamma*beta, branch, F*beta) of the stationary-energy diagram at fixed gamma."""
    from .stationary import elliptic_formula_field

    rows = []
    for gb in gb_values:
        gb = float(gb)
        root = math.sqrt(gb)
        if abs(root - round(root)) < 1e-12 and round(root) >= 1:
            continue
        beta = gb / gamma
        p = ModelParams(gamma, beta, N=N)
        rows.append((gb, "minimum", potential(FourierField.zeros(N), p) * beta))
        rows.append((gb, "constant", potential(FourierField.constant(N, math.pi / beta), p) * beta))
        for j in range(1, int(math.floor(root)) + 1):
            u, _ = elliptic_formula_field(p, j)
            rows.append((gb, f"elliptic_j{j}", potential(u, p) * beta))
    return rows


def cmd_bifurcation(a, out: Path, man: RunManifest):
    gbs = np.linspace(a.gb_min, a.gb_max, a.points)
    man.params = {"gamma": a.gamma, "N": a.N}
    write_csv(out / "bifurcation.csv", ["gamma_beta", "branch", "F_times_beta"],
              bifurcation_rows(a.gamma, gbs, a.N))
    return ["bifurcation.csv"]


def cmd_simulate(a, out: Path, man: RunManifest):
    from . import simulate as sim
    from .prefactor import prefactor_sub, prefactor_super
    from .stationary import elliptic_saddle

    p, c = _model(a), _config(a)
    regime = p.require_regime()
    man.params, man.config, man.seed = p.to_dict(), c.to_dict(), c.seed
    stats = sim.mc_transition_time(p, c, a.trials)
    try:
        est = prefactor_sub(p)[1] if regime == "sub" else prefactor_super(p, elliptic_saddle(p))
        prediction = est.to_dict(p.epsilon)
    except Exception as exc:          # prediction is informational only
        log.warning("no prediction: %s", exc)
        prediction = None
    doc = {"schema_version": SCHEMA_VERSION, "kind": "mc_transition_time",
           "params": p.to_dict(), "config": c.to_dict(), "prediction": prediction,
           **stats.to_dict()}
    write_json(out / "simulate.json", doc, "simulate")
    files = ["simulate.json"]
    if a.snapshot_time:
        times, coeffs = sim.simulate_trajectory(FourierField.zeros(p.N), p, c, a.snapshot_time,
                                                snapshot_every=a.snapshot_every)
        sim.write_trajectory_csv(out / "trajectory.csv", times, coeffs)
        files.append("trajectory.csv")
    return files


def cmd_randomwalk(a, out: Path, man: RunManifest):
    from .simulate import random_walk_experiment

    p, c = _model(a), _config(a)
    man.params, man.config, man.seed = p.to_dict(), c.to_dict(), c.seed
    r = random_walk_experiment(p, c, a.total_time)
    cv = r.sojourn_cv() if len(r.sojourn_times) > 1 else None
    doc = {"schema_version": SCHEMA_VERSION, "kind": "random_walk", "params": p.to_dict(),
           "config": c.to_dict(), "total_time": r.total_time, "jumps": r.jumps,
           "jump_times": r.jump_times, "sojourn_times": r.sojourn_times,
           "well_indices": r.well_indices, "sojourn_cv": cv,
           "plus_fraction": (sum(j > 0 for j in r.jumps) / len(r.jumps)) if r.jumps else None}
    write_json(out / "randomwalk.json", doc, "randomwalk")
    write_csv(out / "sojourns.csv", ["jump", "time", "sojourn", "sign"],
              [(i + 1, t, s, j) for i, (t, s, j) in enumerate(zip(r.jump_times, r.sojourn_times, r.jumps))])
    return ["randomwalk.json", "sojourns.csv"]


def cmd_string(a, out: Path, man: RunManifest):
    from .ldp import communication_height, write_energies_csv
    from .stationary import transition_state

    p = _model(a)
    man.params = p.to_dict()
    left = FourierField.zeros(p.N)
    right = FourierField.constant(p.N, p.well_spacing)
    res = communication_height(left, right, p, a.K, max_iter=a.max_iter)
    gap = None
    if p.gamma_beta != 1.0:
        ts = transition_state(p)
        gap = res.height - (ts.energy - potential(left, p))
    write_energies_csv(out / "string.csv", res)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "communication_height", "params": p.to_dict(),
           "K": a.K, "saddle_energy_gap": gap, **res.to_dict()}
    write_json(out / "string.json", doc, "string")
    return ["string.csv", "string.json"]


def cmd_phase(a, out: Path, man: RunManifest):
    from .stationary import phase_portrait_data

    man.params = {"gamma_beta": a.gamma_beta, "beta": a.beta}
    orbits = phase_portrait_data(a.gamma_beta, a.beta, a.n_closed, a.n_open, a.points)
    rows = []
    for k, o in enumerate(orbits):
        for u, v in zip(o.u, o.v):
            rows.append((k, o.kind, float(o.level), "" if o.period is None else float(o.period),
                         float(u), float(v)))
    write_csv(out / "phase.csv", ["orbit", "kind", "level", "period", "u", "du_dx"], rows)
    return ["phase.csv"]


def cmd_galerkin(a, out: Path, man: RunManifest):
    from .simulate import galerkin_convergence_test

    p, c = _model(a), _config(a)
    man.params, man.config, man.seed = p.to_dict(), c.to_dict(), c.seed
    tab = galerkin_convergence_test(p, c, a.N_list, N_ref=a.N_ref, t_final=a.t_final,
                                    realizations=a.realizations, alpha=a.alpha)
    doc = {"schema_version": SCHEMA_VERSION, "kind": "galerkin_convergence", "params": p.to_dict(),
           "N_list": tab.N_list, "N_ref": tab.N_ref, "alpha": tab.alpha, "gaps": tab.gaps,
           "exponent": tab.exponent}
    write_json(out / "galerkin.json", doc, "galerkin")
    write_csv(out / "galerkin.csv", ["N", "mean_gap"], tab.rows())
    return ["galerkin.json", "galerkin.csv"]


COMMANDS = {
    "prefactor": cmd_prefactor,
    "bifurcation": cmd_bifurcation,
    "simulate": cmd_simulate,
    "randomwalk": cmd_randomwalk,
    "string": cmd_string,
    "phase": cmd_phase,
    "galerkin": cmd_galerkin,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgmeta", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def out_arg(p):
        p.add_argument("--out", type=Path, default=Path("."), help="output directory")

    p = sub.add_parser("prefactor", help="Eyring-Kramers prefactor, spectrum and determinants")
    _add_model(p, N_default=256)
    out_arg(p)

    p = sub.add_parser("bifurcation", help="energies of stationary branches versus gamma*beta")
    p.add_argument("--gamma", type=_positive_float, default=1.0)
    p.add_argument("--gb-min", type=_positive_float, default=0.1)
    p.add_argument("--gb-max", type=_positive_float, default=10.0)
    p.add_argument("--points", type=_positive_int, default=100)
    p.add_argument("--N", type=_positive_int, default=64)
    out_arg(p)

    p = sub.add_parser("simulate", help="Monte Carlo of the transition time")
    _add_model(p, N_default=16)
    _add_sim(p)
    p.add_argument("--trials", type=_positive_int, default=100)
    p.add_argument("--snapshot-time", type=_positive_float, default=None,
                   help="also write trial 0's trajectory up to this time as CSV")
    p.add_argument("--snapshot-every", type=_positive_int, default=100)
    out_arg(p)

    p = sub.add_parser("randomwalk", help="long path with recentring between wells")
    _add_model(p, N_default=16)
    _add_sim(p)
    p.add_argument("--total-time", type=_positive_float, default=1000.0)
    out_arg(p)

    p = sub.add_parser("string", help="string-method communication height between neighbouring wells")
    _add_model(p, N_default=64)
    p.add_argument("--K", type=_positive_int, default=64, help="number of path segments")
    p.add_argument("--max-iter", type=_positive_int, default=10_000)
    out_arg(p)

    p = sub.add_parser("phase", help="phase-portrait level sets of the stationary ODE")
    p.add_argument("--gamma-beta", type=_positive_float, required=True)
    p.add_argument("--beta", type=_positive_float, default=1.0)
    p.add_argument("--n-closed", type=_positive_int, default=6)
    p.add_argument("--n-open", type=_positive_int, default=3)
    p.add_argument("--points", type=_positive_int, default=201)
    out_arg(p)

    p = sub.add_parser("galerkin", help="gap between truncations driven by shared noise")
    _add_model(p, N_default=256)
    _add_sim(p)
    p.add_argument("--N-list", type=_int_list, default=[16, 32, 64, 128])
    p.add_argument("--N-ref", type=_positive_int, default=256)
    p.add_argument("--t-final", type=_positive_float, default=0.5)
    p.add_argument("--realizations", type=_positive_int, default=20)
    p.add_argument("--alpha", type=_nonneg_float, default=0.0)
    out_arg(p)

    p = sub.add_parser("rerun", help="replay a manifest and verify byte-identical outputs")
    p.add_argument("manifest", type=Path)
    out_arg(p)
    return ap


def _strip_out(argv):
    """Arguments without --out (the replay chooses its own directory)."""
    res, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        res.append(tok)
    return res


def run(argv: list[str]) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if a.command == "rerun":
        return _rerun(a.manifest, a.out)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    recorded = _strip_out([t for t in argv if t not in ("-v", "--verbose")])
    man = RunManifest(command=a.command, argv=recorded)
    try:
        files = COMMANDS[a.command](a, out, man)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"sgmeta {a.command}: error: {exc}", file=sys.stderr)
        return 1
    man.record(out, *files)
    man.write(out)
    for f in files:
        print(out / f)
    return 0


def _rerun(manifest_path: Path, out: Path) -> int:
    man = RunManifest.load(manifest_path)
    code = run(man.argv + ["--out", str(out)])
    if code:
        return code
    fresh = RunManifest.load(Path(out) / "manifest.json")
    bad = [k for k, v in man.outputs.items() if fresh.outputs.get(k) != v]
    if bad or set(fresh.outputs) != set(man.outputs):
        print(f"rerun: outputs differ from manifest: {bad or sorted(set(fresh.outputs) ^ set(man.outputs))}",
              file=sys.stderr)
        return 3
    print(f"rerun: {len(man.outputs)} output(s) byte-identical")
    return 0


def main(argv: list[str] | None = None) -> int:
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())
