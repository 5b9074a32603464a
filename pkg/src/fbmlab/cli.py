"""Command-line front end.

Four subcommands: `asymptotic` evaluates the closed-form tail formulas,
`simulate` runs a Monte Carlo tail estimate, `constants` estimates and
caches Pickands/Piterbarg constants, `validate` runs the lemma and
convergence suites and writes a report directory.

Every command is deterministic given its flags (plus config file and seed):
reruns are byte-identical.  JSON is emitted by a strict serializer that
formats floats with 17 significant digits and refuses NaN/Inf.

Exit codes: 0 ok; 2 bad flags or a violated precondition (the library
diagnostic is printed verbatim); 3 sampler failure; 4 cache write failure;
5 a validation check failed (named on stderr).
"""

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

from . import constants as constants_lab
from . import validation
from .asymptotics import VARIANTS, FixedPointError, ThresholdError, asym_drawdown, asym_drawup
from .constants import CacheWriteError, ConstantLookupError, ConstantsProvider
from .engine import ModelParams, SamplingError
from .paths import FUNCTIONALS, TailQuery

SCHEMA_VERSION = "1"

_EXIT_PRECONDITION = 2
_EXIT_SAMPLER = 3
_EXIT_CACHE = 4
_EXIT_CHECK_FAILED = 5

_SUITES = ("lemmas", "convergence", "all")

# validate-suite defaults; a config file overrides these, flags override both.
_VALIDATE_DEFAULTS = {
    "H": 0.5,
    "mu": 0.0,
    "T": 1.0,
    "functional": "drawdown",
    "u_ladder": [1.5, 2.0, 2.5],
    "lemma_H": [0.25, 0.4, 0.5, 0.75],
    "lemma_u": [1e2, 1e3, 1e4],
    "paths": 20000,
    "steps": 4096,
    "seed": 20260822,
    "variant": "proof_derived",
    "cache": None,
    "out_dir": "fbmlab-validate",
}


# ---------------------------------------------------------------------------
# strict JSON emission


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits (round-trips exactly)."""
    if not math.isfinite(x):
        raise ValueError(f"refusing to serialize a non-finite number: {x}")
    return format(x, ".17g")


def emit_json(obj, indent: int | None = None) -> str:
    """Serialize with insertion-ordered keys and fixed float formatting.

    The stdlib encoder ties float text to repr and would happily print
    Infinity; output here must be byte-stable and schema-clean, so the
    small walk is worth owning.
    """
    out: list[str] = []
    _emit(obj, out, indent, 0)
    return "".join(out)


def _emit(obj, out, indent, level):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        _emit_items(obj.items(), "{", "}", out, indent, level, keyed=True)
    elif isinstance(obj, (list, tuple)):
        _emit_items(obj, "[", "]", out, indent, level, keyed=False)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit_items(items, open_ch, close_ch, out, indent, level, keyed):
    items = list(items)
    if not items:
        out.append(open_ch + close_ch)
        return
    out.append(open_ch)
    if indent is None:
        sep, pad, closing = ", ", "", ""
    else:
        pad = "\n" + " " * (indent * (level + 1))
        sep, closing = ",", "\n" + " " * (indent * level)
    for i, item in enumerate(items):
        if i:
            out.append(sep)
        out.append(pad)
        if keyed:
            key, value = item
            if not isinstance(key, str):
                raise TypeError(f"object keys must be strings, got {type(key).__name__}")
            out.append(json.dumps(key))
            out.append(": ")
            _emit(value, out, indent, level + 1)
        else:
            _emit(item, out, indent, level + 1)
    out.append(closing)
    out.append(close_ch)


# ---------------------------------------------------------------------------
# shared plumbing


def _default_threads() -> int:
    return os.cpu_count() or 1


def _resolve_cache(flag_value):
    if flag_value is not None:
        return flag_value
    return os.environ.get("FBMLAB_CACHE") or None


def _print_json(doc, indent=None):
    sys.stdout.write(emit_json(doc, indent=indent) + "\n")


# ---------------------------------------------------------------------------
# asymptotic


def cmd_asymptotic(args) -> int:
    params = ModelParams(args.H, args.mu, args.T)
    provider = ConstantsProvider(
        cache_path=_resolve_cache(args.cache),
        policy="simulate_if_missing",
        seed=args.seed,
        n_sim=args.sims,
        eta=args.eta,
        threads=args.threads,
    )
    for u in args.u:
        if args.functional == "drawdown":
            result = asym_drawdown(u, params, provider)
        else:
            result = asym_drawup(u, params, provider, variant=args.variant)
        doc = {"schema_version": SCHEMA_VERSION, "command": "asymptotic"}
        doc.update(result.to_dict())
        _print_json(doc)
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    params = ModelParams(args.H, args.mu, args.T)
    query = TailQuery(params=params, functional=args.functional, u=args.u)
    col = 0 if args.functional == "drawdown" else 1
    # decomposed mc_tail: the per-path sups are kept so --dump-paths can
    # write them without a second simulation pass
    sups_coarse = validation.functional_sups(
        params, args.paths, args.steps, args.seed, threads=args.threads, method=args.method
    )[col]
    sups_fine = validation.functional_sups(
        params,
        args.paths,
        2 * args.steps,
        validation.refinement_seed(args.seed),
        threads=args.threads,
        method=args.method,
    )[col]
    coarse = validation._estimate_from_sups(sups_coarse, query.u, args.steps)
    fine = validation._estimate_from_sups(sups_fine, query.u, 2 * args.steps)
    if args.dump_paths:
        with open(args.dump_paths, "w", encoding="ascii") as fh:
            fh.write(f"path,{args.functional}\n")
            for i, v in enumerate(sups_coarse):
                fh.write(f"{i},{format_float(float(v))}\n")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "functional": args.functional,
        "H": params.H,
        "mu": params.mu,
        "T": params.T,
        "u": query.u,
        "seed": args.seed,
        "method": args.method,
        "estimate": {
            "p_hat": coarse.p_hat,
            "ci_low": coarse.ci_low,
            "ci_high": coarse.ci_high,
            "n_paths": coarse.n_paths,
            "n_steps": coarse.n_steps,
            "extrapolated": validation._extrapolate(coarse.p_hat, fine.p_hat, params.H),
            "refined": {
                "p_hat": fine.p_hat,
                "ci_low": fine.ci_low,
                "ci_high": fine.ci_high,
                "n_paths": fine.n_paths,
                "n_steps": fine.n_steps,
            },
        },
    }
    _print_json(doc)
    return 0


# ---------------------------------------------------------------------------
# constants


def cmd_constants(args) -> int:
    cache_path = _resolve_cache(args.cache)
    if args.kind == "piterbarg" and args.nu is None:
        raise ValueError("piterbarg estimation needs --nu")
    if args.kind == "pickands":
        b_ladder = tuple(args.b) if args.b else constants_lab.DEFAULT_B_LADDER
        probe_b = b_ladder[-1]
        nu = None
    else:
        probe_b = args.b[-1] if args.b else constants_lab.DEFAULT_PITERBARG_B
        nu = float(args.nu)
    key = (args.kind, float(args.H), nu, float(probe_b), float(args.eta), args.sims, args.seed)
    est = None
    if cache_path is not None and Path(cache_path).exists():
        held = constants_lab.cache_lookup(cache_path, key)
        if held is not None:
            est = dataclasses.replace(held, provenance="cached")
    if est is None:
        if args.kind == "pickands":
            est = constants_lab.estimate_pickands(
                args.H, b_ladder=b_ladder, eta=args.eta, n_sim=args.sims,
                seed=args.seed, threads=args.threads,
            )
        else:
            est = constants_lab.estimate_piterbarg(
                args.H, nu, b=probe_b, eta=args.eta, n_sim=args.sims,
                seed=args.seed, threads=args.threads,
            )
        if cache_path is not None:
            constants_lab.cache_store(cache_path, est)
    doc = {"schema_version": SCHEMA_VERSION, "command": "constants"}
    doc.update(est.to_dict())
    _print_json(doc)
    return 0


# ---------------------------------------------------------------------------
# validate


def _load_validate_config(args) -> dict:
    cfg = dict(_VALIDATE_DEFAULTS)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("config must be a flat JSON object")
        unknown = sorted(set(loaded) - set(_VALIDATE_DEFAULTS))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    # flags override the document
    for flag in ("paths", "steps", "seed", "out_dir", "cache"):
        value = getattr(args, flag)
        if value is not None:
            cfg[flag] = value
    return cfg


def _lemma_suite(cfg) -> list[dict]:
    checks = []
    T, mu = float(cfg["T"]), float(cfg["mu"])
    u_grid = [float(u) for u in cfg["lemma_u"]]
    for H in cfg["lemma_H"]:
        params = ModelParams(float(H), mu, T)
        for report in (
            validation.check_lemma1(params, u=u_grid),
            validation.check_lemma2(params, u=u_grid),
            validation.check_lemma3(float(H), T),
        ):
            checks.append({"name": f"{report.lemma}_H{H:g}", **report.to_dict()})
    return checks


def _convergence_suite(cfg, threads) -> dict:
    params = ModelParams(float(cfg["H"]), float(cfg["mu"]), float(cfg["T"]))
    provider = ConstantsProvider(
        cache_path=_resolve_cache(cfg["cache"]),
        policy="simulate_if_missing",
        threads=threads,
    )
    table = validation.convergence_study(
        cfg["functional"],
        params,
        cfg["u_ladder"],
        n_paths=int(cfg["paths"]),
        n_steps=int(cfg["steps"]),
        seed=int(cfg["seed"]),
        constants=provider,
        variant=cfg["variant"],
        threads=threads,
    )
    rows = [
        {
            "u": r.u,
            "p_hat": r.p_hat,
            "ci_low": r.ci_low,
            "ci_high": r.ci_high,
            "p_refined": r.p_refined,
            "ci_low_refined": r.ci_low_refined,
            "ci_high_refined": r.ci_high_refined,
            "extrapolated": r.extrapolated,
            "asym_probability": r.asym_probability,
            "ratio": r.ratio,
            "ratio_ci_low": r.ratio_ci_low,
            "ratio_ci_high": r.ratio_ci_high,
            "ratio_refined": r.ratio_refined,
        }
        for r in table.rows
    ]
    return {
        "name": f"convergence_{table.functional}_H{params.H:g}",
        "functional": table.functional,
        "rows": rows,
        "trend_nondecreasing": table.trend_nondecreasing,
        "trend_toward_one": table.trend_toward_one,
        "passed": (table.trend_nondecreasing in (True, None))
        and (table.trend_toward_one in (True, None)),
    }


def _write_lemma_outputs(out_dir: Path, checks):
    lines = ["check,lemma,ladder_value,max_rel_error"]
    for check in checks:
        for x, err in zip(check["u_grid"], check["max_rel_error"]):
            lines.append(
                f"{check['name']},{check['lemma']},{format_float(x)},{format_float(err)}"
            )
        plot = [f"{format_float(x)} {format_float(e)}"
                for x, e in zip(check["u_grid"], check["max_rel_error"])]
        (out_dir / f"plot_{check['name']}.dat").write_text("\n".join(plot) + "\n", "ascii")
    (out_dir / "lemmas.csv").write_text("\n".join(lines) + "\n", "ascii")


def _write_convergence_outputs(out_dir: Path, conv):
    cols = [
        "u", "p_hat", "ci_low", "ci_high", "p_refined", "ci_low_refined",
        "ci_high_refined", "extrapolated", "asym_probability", "ratio",
        "ratio_ci_low", "ratio_ci_high", "ratio_refined",
    ]
    lines = [",".join(cols)]
    for row in conv["rows"]:
        lines.append(",".join(format_float(row[c]) for c in cols))
    (out_dir / "convergence.csv").write_text("\n".join(lines) + "\n", "ascii")
    plot = [f"{format_float(r['u'])} {format_float(r['ratio'])}" for r in conv["rows"]]
    (out_dir / f"plot_{conv['name']}.dat").write_text("\n".join(plot) + "\n", "ascii")


def cmd_validate(args) -> int:
    cfg = _load_validate_config(args)
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    checks: list[dict] = []
    if args.suite in ("lemmas", "all"):
        lemma_checks = _lemma_suite(cfg)
        _write_lemma_outputs(out_dir, lemma_checks)
        checks.extend(lemma_checks)
    if args.suite in ("convergence", "all"):
        conv = _convergence_suite(cfg, args.threads)
        _write_convergence_outputs(out_dir, conv)
        checks.append(conv)
    passed = all(c["passed"] for c in checks)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "validate",
        "suite": args.suite,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "checks": checks,
        "passed": passed,
    }
    (out_dir / "report.json").write_text(emit_json(report, indent=2) + "\n", "ascii")
    _print_json(report, indent=2)
    if not passed:
        first = next(c["name"] for c in checks if not c["passed"])
        print(f"validation check failed: {first}", file=sys.stderr)
        return _EXIT_CHECK_FAILED
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_model_flags(sub):
    sub.add_argument("--functional", choices=FUNCTIONALS, required=True)
    sub.add_argument("--H", type=float, required=True, help="Hurst index in (0,1)")
    sub.add_argument("--mu", type=float, default=0.0, help="drift (default 0)")
    sub.add_argument("--T", type=float, required=True, help="horizon")


def _add_threads_flag(sub):
    sub.add_argument("--threads", type=int, default=_default_threads(),
                     help="worker processes (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbmlab",
        description="Tail asymptotics of fBm drawdown/drawup, with MC validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("asymptotic", help="evaluate the closed-form tail approximations")
    _add_model_flags(p)
    p.add_argument("--u", type=float, action="append", required=True,
                   help="threshold; repeat for a ladder")
    p.add_argument("--variant", choices=VARIANTS, default="proof_derived",
                   help="drawup H<1/2 constant normalization")
    p.add_argument("--cache", default=None, help="constants cache file (or $FBMLAB_CACHE)")
    p.add_argument("--sims", type=int, default=constants_lab.DEFAULT_N_SIM,
                   help="budget if a constant must be simulated")
    p.add_argument("--eta", type=float, default=constants_lab.DEFAULT_ETA)
    p.add_argument("--seed", type=int, default=0)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_asymptotic)

    p = sub.add_parser("simulate", help="Monte Carlo tail estimate")
    _add_model_flags(p)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--paths", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--method", choices=("circulant", "cholesky"), default="circulant")
    p.add_argument("--dump-paths", default=None, metavar="FILE",
                   help="write per-path functional values as CSV")
    _add_threads_flag(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("constants", help="estimate Pickands/Piterbarg constants")
    p.add_argument("--kind", choices=constants_lab.KINDS, required=True)
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--nu", type=float, default=None, help="piterbarg penalty parameter")
    p.add_argument("--b", type=float, action="append", default=None,
                   help="horizon; repeat for a pickands ladder")
    p.add_argument("--eta", type=float, default=constants_lab.DEFAULT_ETA)
    p.add_argument("--sims", type=int, default=constants_lab.DEFAULT_N_SIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache", default=None, help="cache file (or $FBMLAB_CACHE)")
    _add_threads_flag(p)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("validate", help="run the lemma/convergence suites")
    p.add_argument("--suite", choices=_SUITES, required=True)
    p.add_argument("--config", default=None, help="flat JSON config document")
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--cache", default=None)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SamplingError as exc:
        print(f"sampler failure: {exc}", file=sys.stderr)
        return _EXIT_SAMPLER
    except CacheWriteError as exc:
        print(f"cache write failure: {exc}", file=sys.stderr)
        return _EXIT_CACHE
    except (ThresholdError, FixedPointError, ConstantLookupError, ValueError) as exc:
        print(str(exc), file=sys.stderr)
        return _EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
