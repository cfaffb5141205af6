"""Configuration-driven runner: ``cpms <task> --config <file> [--out <dir>] [--seed <u64>]``.

Configs are TOML with the blocks ``space``, ``beta``, ``drift``, ``noise``,
``solver``, ``initial``, ``feynman``, ``study`` and ``output``.  Complex
numbers may be written as a number, a string such as ``"0.1+1j"``, a
``[re, im]`` pair or an inline table ``{re = .., im = ..}``.

Exit codes: 0 success / pass, 1 check failed, 2 configuration error,
3 solver failure.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import io
import itertools
import json
import math
import os
import re
import sys
import warnings

import numpy as np

from . import __version__
from ._kernels import get_backend
from .complex_monotone import make_beta
from .errors import ConfigurationError, SolverError
from .feynman_path import constant_action, linear_tilde_action, residual_slope
from .galerkin_solver import (Problem, SolverConfig, cauchy_study, solve_fixed_law,
                              solve_mckean_vlasov)
from .mean_field import EmpiricalLaw, make_drift, wasserstein2
from .noise import make_noise, sample_ensemble
from .spectral_space import Norm, build_space
from .variational_control import certify

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA = "cpms-artifact/1"
TASKS = ("simulate", "certify", "feynman-check", "convergence-study", "wasserstein-selftest",
         "report")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
LOCKNAME = ".cpms.lock"

SCHEMA_KEYS = {
    "task": None,
    "space": {"L", "N", "G"},
    "beta": {"kind", "c", "p", "profile", "c0", "c1", "eps", "base"},
    "drift": {"kind", "a", "b", "source", "theta1", "theta2", "theta", "kernel", "scales",
              "modulation"},
    "noise": {"gamma", "r", "amp", "K", "sigma_re", "sigma_im", "tail_bound"},
    "solver": {"T", "dt", "scheme", "inner", "tol_inner", "max_inner", "tol_law", "max_picard",
               "M", "c", "seed"},
    "initial": {"mode", "amplitude", "coefficients"},
    "feynman": {"action", "m", "value", "profile", "eps", "hbar", "Q", "window", "kappa",
                "slope_window"},
    "study": {"levels", "pairs", "modes", "max_particles", "tolerance"},
    "output": {"dir"},
}
COMPLEX_KEYS = {"beta": {"c", "c0", "c1"}, "drift": {"a", "b"}, "feynman": {"m", "value"}}

DEFAULTS = {
    "space": {"L": 1.0, "N": 16},
    "solver": {"T": 0.1, "dt": 1e-3, "scheme": "semi_implicit", "inner": "newton",
               "tol_inner": 1e-10, "max_inner": 200, "tol_law": 1e-10, "max_picard": 30,
               "M": 1, "seed": 0},
    "drift": {"kind": "zero"},
    "initial": {"mode": 1, "amplitude": 1.0},
    "feynman": {"action": "beta_tilde", "m": [0.0, 0.5], "profile": "gaussian",
                "eps": [1e-2, 1e-3, 1e-4], "hbar": 1.0, "Q": 16, "window": [-1.0, 1.0],
                "kappa": 0.5, "slope_window": [1.2, 1.8]},
    "study": {"levels": [8, 16, 32], "pairs": 100, "modes": 3, "max_particles": 6,
              "tolerance": 1e-12},
}


# ------------------------------------------------------------------ config


class _Lines:
    """Best-effort ``(block, key) -> line`` index of a TOML text."""

    header = re.compile(r"^\s*\[\s*([A-Za-z0-9_.\-]+)\s*\]")
    key = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")

    def __init__(self, text: str):
        self.where = {}
        block = ""
        for no, line in enumerate(text.splitlines(), start=1):
            m = self.header.match(line)
            if m:
                block = m.group(1)
                self.where.setdefault((block, None), no)
                continue
            m = self.key.match(line)
            if m:
                self.where.setdefault((block, m.group(1)), no)

    def line(self, block, key=None):
        return self.where.get((block, key)) or self.where.get((block, None))

    def find(self, key):
        hits = sorted(no for (b, k), no in self.where.items() if k == key)
        return hits[0] if hits else None


def _complex(value, name):
    if isinstance(value, dict):
        extra = set(value) - {"re", "im"}
        if extra:
            raise ConfigurationError(f"{name}: unknown complex fields {sorted(extra)}", field=name)
        return complex(float(value.get("re", 0.0)), float(value.get("im", 0.0)))
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigurationError(f"{name} must be a [re, im] pair", field=name)
        return complex(float(value[0]), float(value[1]))
    try:
        return complex(value.replace(" ", "") if isinstance(value, str) else value)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{name} must be a complex number, got {value!r}",
                                 field=name) from exc


def load_config(path: str) -> tuple[dict, _Lines]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    text = raw.decode("utf-8", errors="replace")
    lines = _Lines(text)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigurationError(f"malformed config: {exc}",
                                 line=int(m.group(1)) if m else None) from exc
    for block, body in data.items():
        if block not in SCHEMA_KEYS:
            raise ConfigurationError(f"unknown block [{block}]", field=block,
                                     line=lines.line(block) or lines.find(block))
        allowed = SCHEMA_KEYS[block]
        if allowed is None:
            continue
        if not isinstance(body, dict):
            raise ConfigurationError(f"[{block}] must be a table", field=block, line=lines.find(block))
        for key in body:
            if key not in allowed:
                raise ConfigurationError(f"unknown key '{key}' in [{block}]", field=key,
                                         line=lines.line(block, key))
    return data, lines


def resolve(data: dict, task: str, seed: int | None, out: str | None) -> dict:
    cfg = {}
    for block in SCHEMA_KEYS:
        if block == "task":
            continue
        merged = dict(DEFAULTS.get(block, {}))
        merged.update(data.get(block, {}))
        if merged or block in data:
            cfg[block] = merged
    if "noise" not in data:
        cfg.pop("noise", None)
    if seed is not None:
        cfg["solver"]["seed"] = seed
    cfg["output"] = {"dir": out or data.get("output", {}).get("dir", "results")}
    cfg["task"] = task
    return cfg


def _beta_params(block: dict, where="beta") -> tuple[str, dict]:
    block = dict(block)
    kind = block.pop("kind", None)
    if kind is None:
        raise ConfigurationError(f"[{where}] needs a kind", field="kind")
    params = {}
    for k, v in block.items():
        if k == "base":
            if not isinstance(v, dict):
                raise ConfigurationError("base must be a table with a kind", field="base")
            bkind, bparams = _beta_params(v, "beta.base")
            params["base"] = {"kind": bkind, **bparams}
        elif k in COMPLEX_KEYS["beta"]:
            params[k] = _complex(v, k)
        else:
            params[k] = v
    return kind, params


def build_beta(cfg):
    if "beta" not in cfg:
        raise ConfigurationError("config needs a [beta] block", field="beta")
    kind, params = _beta_params(cfg["beta"])
    return make_beta(kind, params)


def build_space_from(cfg):
    sp = cfg["space"]
    return build_space(float(sp["L"]), _int(sp["N"], "N", "truncation N"),
                       None if sp.get("G") is None else _int(sp["G"], "G"))


def _int(v, name, what=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigurationError(f"{what or name} must be an integer, got {v!r}", field=name)
    return int(v)


def build_drift(cfg, space):
    block = dict(cfg["drift"])
    kind = block.pop("kind")
    params = {k: (_complex(v, k) if k in COMPLEX_KEYS["drift"] else v) for k, v in block.items()}
    return make_drift(kind, params, space)


def build_noise(cfg):
    if "noise" not in cfg:
        return None
    b = dict(cfg["noise"])
    if "gamma" not in b:
        raise ConfigurationError("[noise] needs gamma", field="gamma")
    return make_noise(b.pop("gamma"), b.pop("r", 0.0), b.pop("amp", 0.0), _int(b.pop("K", 1), "K"),
                      **b)


def build_solver(cfg):
    s = dict(cfg["solver"])
    for k in ("M", "max_inner", "max_picard", "seed"):
        s[k] = _int(s[k], k)
    return SolverConfig(**s)


def build_initial(cfg, space, M):
    b = cfg["initial"]
    X0 = np.zeros(space.N, dtype=complex)
    if "coefficients" in b:
        coefs = [_complex(v, "coefficients") for v in b["coefficients"]]
        k = min(len(coefs), space.N)
        X0[:k] = coefs[:k]
    else:
        j = _int(b["mode"], "mode")
        if not 1 <= j <= space.N:
            raise ConfigurationError(f"initial mode {j} outside 1..{space.N}", field="mode")
        X0[j - 1] = _complex(b["amplitude"], "amplitude")
    return np.broadcast_to(X0, (M, space.N)).copy()


# ------------------------------------------------------------------ artifacts


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def _csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode("utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


class Artifacts:
    def __init__(self, out):
        self.out = out
        self.hashes = {}

    def _write(self, name, data: bytes):
        path = os.path.join(self.out, name)
        tmp = path + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        return path

    def csv(self, name, header, rows):
        data = _csv_bytes(header, rows)
        self.hashes[name] = hashlib.sha256(data).hexdigest()
        return self._write(name, data)

    def summary(self, cfg, body, name="summary.json"):
        # the output location is not part of the experiment
        cfg = {k: v for k, v in cfg.items() if k != "output"}
        doc = {"schema": SCHEMA, "version": __version__, "config": cfg,
               "artifacts": dict(sorted(self.hashes.items()))}
        doc.update(body)
        text = json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"
        return self._write(name, text.encode("utf-8"))


@contextlib.contextmanager
def _locked(out):
    os.makedirs(out, exist_ok=True)
    lock = os.path.join(out, LOCKNAME)
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(f"output directory {out} is locked by another run "
                                 f"(remove {lock} if stale)", field="out") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        with contextlib.suppress(FileNotFoundError):
            os.remove(lock)


# ------------------------------------------------------------------ tasks


def _trajectory_rows(traj, particle=0):
    sp = traj.space
    X = traj.X[:, particle]
    l2 = sp.norms(X, Norm.L2)
    hm = sp.norms(X, Norm.HminusOne)
    h1 = sp.norms(X, Norm.HOne)
    header = ["t", "l2", "hminus1", "hone"]
    for k in range(1, sp.N + 1):
        header += [f"re_{k}", f"im_{k}"]
    rows = []
    for s, t in enumerate(traj.times):
        row = [float(t), float(l2[s]), float(hm[s]), float(h1[s])]
        for z in X[s]:
            row += [float(z.real), float(z.imag)]
        rows.append(row)
    return header, rows


def task_simulate(cfg, art, backend):
    space = build_space_from(cfg)
    beta = build_beta(cfg)
    drift = build_drift(cfg, space)
    noise = build_noise(cfg)
    config = build_solver(cfg)
    X0 = build_initial(cfg, space, config.M)
    picard = None
    flags = []
    if drift.depends_on_law:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = solve_mckean_vlasov(X0, beta, drift, noise, config, space=space)
        traj = res.trajectory
        picard = res.report.to_dict()
        flags = list(res.report.flags)
    else:
        paths = None
        if noise is not None and not noise.is_zero:
            paths = sample_ensemble(noise, space, config.times(), config.seed, config.M)
        traj = solve_fixed_law(X0, beta, drift, paths, None, config, space=space)
        if beta.alpha <= 0:
            flags.append("outside theorem hypotheses (alpha = 0)")
    header, rows = _trajectory_rows(traj)
    art.csv("trajectory.csv", header, rows)
    body = {
        "task": "simulate",
        "norms": traj.final_norms(),
        "picard": picard,
        "picard_distances": picard["distances"] if picard else [],
        "fitted_C": traj.fitted_C,
        "certificate": None,
        "flags": flags,
        "steps": config.steps,
        "backend": backend.name,
    }
    art.summary(cfg, body)
    return EXIT_OK


def task_certify(cfg, art, backend):
    space = build_space_from(cfg)
    beta = build_beta(cfg)
    drift = build_drift(cfg, space)
    if build_noise(cfg) is not None and not build_noise(cfg).is_zero:
        raise ConfigurationError("control interpretation defined for g=0", field="noise")
    config = build_solver(cfg)
    X0 = build_initial(cfg, space, 1)[0]
    cert, traj, _ = certify(X0, beta, drift, config, space=space, backend=backend)
    header, rows = _trajectory_rows(traj)
    art.csv("trajectory.csv", header, rows)
    flags = [] if beta.alpha > 0 else ["outside theorem hypotheses (alpha = 0)"]
    body = {
        "task": "certify",
        "norms": traj.final_norms(),
        "picard": None,
        "picard_distances": [],
        "fitted_C": traj.fitted_C,
        "certificate": cert.to_dict(),
        "verdict": "pass" if cert.verdict else "fail",
        "flags": flags,
        "backend": backend.name,
    }
    art.summary(cfg, body)
    return EXIT_OK if cert.verdict else EXIT_FAIL


def task_feynman(cfg, art, backend):
    f = cfg["feynman"]
    hbar = float(f["hbar"])
    if f["action"] == "beta_tilde":
        action = linear_tilde_action(_complex(f["m"], "m"), hbar)
    elif f["action"] == "constant":
        action = constant_action(_complex(f.get("value", 0.0), "value"))
    else:
        raise ConfigurationError("feynman action must be 'beta_tilde' or 'constant'", field="action")
    lo, hi = (float(v) for v in f["slope_window"])
    rep = residual_slope(action, f["profile"], [float(e) for e in f["eps"]], hbar=hbar,
                         Q=_int(f["Q"], "Q"), window=tuple(float(v) for v in f["window"]),
                         backend=backend, kappa=f.get("kappa"))
    art.csv("feynman.csv", ["eps", "residual", "slope"],
            [(e, r, rep.slope) for e, r, _ in rep.rows()])
    ok = lo <= rep.slope <= hi and rep.decays
    body = {
        "task": "feynman-check",
        "feynman": rep.to_dict(),
        "verdict": {"slope": rep.slope, "window": [lo, hi], "decays": rep.decays,
                    "result": "pass" if ok else "fail"},
        "flags": [],
        "backend": backend.name,
    }
    art.summary(cfg, body)
    return EXIT_OK if ok else EXIT_FAIL


def task_study(cfg, art, backend):
    beta = build_beta(cfg)
    config = build_solver(cfg)
    d = dict(cfg["drift"])
    kind = d.pop("kind")
    d = {k: (_complex(v, k) if k in COMPLEX_KEYS["drift"] else v) for k, v in d.items()}
    coefs = None
    b = cfg["initial"]
    if "coefficients" in b:
        coefs = np.array([_complex(v, "coefficients") for v in b["coefficients"]])
    else:
        coefs = np.zeros(_int(b["mode"], "mode"), dtype=complex)
        coefs[-1] = _complex(b["amplitude"], "amplitude")
    levels = [_int(n, "levels") for n in cfg["study"]["levels"]]
    problem = Problem(float(cfg["space"]["L"]), coefs, beta, kind, d, build_noise(cfg))
    rows = cauchy_study(problem, levels, config)
    art.csv("table.csv", ["N", "N_fine", "sup_hminus", "int_l2_sq"],
            [(r["N"], r["N_fine"], r["sup_hminus"], r["int_l2_sq"]) for r in rows])
    sup = [r["sup_hminus"] for r in rows]
    decreasing = all(b < a for a, b in zip(sup, sup[1:]))
    body = {"task": "convergence-study", "study": rows, "decreasing": decreasing,
            "verdict": "pass" if decreasing else "fail", "flags": [], "backend": backend.name}
    art.summary(cfg, body)
    return EXIT_OK if decreasing else EXIT_FAIL


def _brute_w2(x, y, weights):
    M = x.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(M)):
        d = x - y[list(perm)]
        total = float(np.sum(weights * (d.real ** 2 + d.imag ** 2))) / M
        best = min(best, total)
    return math.sqrt(best)


def task_wasserstein(cfg, art, backend):
    st = cfg["study"]
    pairs = _int(st["pairs"], "pairs")
    top = _int(st["max_particles"], "max_particles")
    if not 1 <= top <= 8:
        raise ConfigurationError("max_particles must be in 1..8 for exhaustive search",
                                 field="max_particles")
    space = build_space(float(cfg["space"]["L"]), _int(st["modes"], "modes", "truncation modes"))
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg["solver"]["seed"])))
    tol = float(st["tolerance"])
    weights = 1.0 / space.eigenvalues
    rows = []
    worst = 0.0
    for i in range(pairs):
        M = 1 + i % top
        x = rng.standard_normal((M, space.N)) + 1j * rng.standard_normal((M, space.N))
        y = rng.standard_normal((M, space.N)) + 1j * rng.standard_normal((M, space.N))
        fast = wasserstein2(EmpiricalLaw(x, space), EmpiricalLaw(y, space), backend=backend)
        slow = _brute_w2(x, y, weights)
        worst = max(worst, abs(fast - slow))
        rows.append((i, M, fast, slow, abs(fast - slow)))
    art.csv("table.csv", ["pair", "M", "assignment", "exhaustive", "abs_diff"], rows)
    ok = worst <= tol
    body = {"task": "wasserstein-selftest", "max_abs_diff": worst, "tolerance": tol,
            "verdict": "pass" if ok else "fail", "flags": [], "backend": backend.name}
    art.summary(cfg, body)
    return EXIT_OK if ok else EXIT_FAIL


def task_report(out):
    path = os.path.join(out, "summary.json")
    if not os.path.exists(path):
        raise ConfigurationError(f"no summary.json in {out}", field="out")
    with open(path, encoding="utf-8") as fh:
        summary = json.load(fh)
    art = Artifacts(out)
    norms = []
    traj = os.path.join(out, "trajectory.csv")
    if os.path.exists(traj):
        with open(traj, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                norms.append((float(rec["t"]), float(rec["l2"]), float(rec["hminus1"])))
    art.csv("norms.csv", ["t", "l2", "hminus1"], norms)
    dist = summary.get("picard_distances") or []
    art.csv("picard.csv", ["iteration", "distance"], [(i + 1, float(d)) for i, d in enumerate(dist)])
    fey = summary.get("feynman") or {}
    art.csv("residuals.csv", ["eps", "residual"],
            list(zip(fey.get("eps", []), fey.get("residuals", []))))
    art.summary(summary.get("config", {}), {"task": "report", "source": SCHEMA},
                name="report.json")
    return EXIT_OK


RUNNERS = {
    "simulate": task_simulate,
    "certify": task_certify,
    "feynman-check": task_feynman,
    "convergence-study": task_study,
    "wasserstein-selftest": task_wasserstein,
}


# ------------------------------------------------------------------ entry point


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text!r}")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="cpms", description=__doc__.splitlines()[0])
    p.add_argument("task", choices=TASKS)
    p.add_argument("--config", help="TOML run configuration (not needed for report)")
    p.add_argument("--out", help="output directory (default: [output] dir or ./results)")
    p.add_argument("--seed", type=_seed, help="override solver.seed")
    p.add_argument("--backend", choices=("compiled", "python"), default=None,
                   help="kernel backend (default: compiled when built)")
    p.add_argument("--version", action="version", version=f"cpms {__version__}")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    lines = None
    try:
        if args.task == "report":
            out = args.out
            if out is None and args.config:
                data, _ = load_config(args.config)
                out = data.get("output", {}).get("dir")
            if out is None:
                raise ConfigurationError("report needs --out <results dir>", field="out")
            if not os.path.exists(os.path.join(out, "summary.json")):
                raise ConfigurationError(f"no summary.json in {out}", field="out")
            with _locked(out):
                return task_report(out)
        if not args.config:
            raise ConfigurationError(f"{args.task} needs --config <file>", field="config")
        data, lines = load_config(args.config)
        declared = data.get("task")
        if declared is not None and declared != args.task:
            print(f"note: config declares task {declared!r}; running {args.task!r}", file=sys.stderr)
        cfg = resolve(data, args.task, args.seed, args.out)
        backend = get_backend(args.backend)
        out = cfg["output"]["dir"]
        with _locked(out):
            return RUNNERS[args.task](cfg, Artifacts(out), backend)
    except ConfigurationError as exc:
        msg = str(exc)
        if exc.line is None and lines is not None and exc.field:
            no = lines.find(exc.field)
            if no is not None:
                msg = f"line {no}: {msg}"
        print(f"cpms: configuration error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"cpms: solver failure: {exc}", file=sys.stderr)
        if exc.residual is not None:
            print(f"  last residual: {exc.residual!r}", file=sys.stderr)
        if exc.history:
            print(f"  history: {[float(h) for h in exc.history]}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
