"""Batch experiment harness.

Every subcommand builds an experiment config (from ``--config`` plus flag
overrides), runs it, writes CSV/JSON outputs and a manifest into the output
directory, and exits with 0 (pass/complete), 2 (fail verdict),
3 (inconclusive) or 1 (error).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

from . import __version__
from .core import ExplicitPrefix, IntervalSet, Periodic, Sampled, format_rational, parse_rational
from .counterexample import HaltingOracle, defeat_candidate
from .measures import Uniform, measure_from_config
from .observables import AverageSeries, first_bit, simple_from_config
from .randomness import integral_from_ml, kucera_table, kucera_test, deficiency_estimate
from .regulators import (
    ExceedanceQuery,
    ergodic_regulator_details,
    hoeffding_regulator,
    verify_regulator_pointwise,
)
from .transforms import Trajectory, machine_by_name
from .upcrossings import assemble_integral_test, check_integrated_inequality, count_upcrossings, first_pairs

OUTDIR_ENV = "CANTOR_ERGODIC_OUTDIR"

EXIT_OK, EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config pieces

COMMON_KEYS = {"kind", "seed", "output_dir"}

KIND_KEYS = {
    "averages": {"source", "observable", "machine", "horizon"},
    "upcrossings": {"source", "observable", "machine", "horizon", "pairs", "dyadic"},
    "ineq-check": {"measure", "observable", "pairs", "dyadic", "horizon"},
    "regulator-hoeffding": {"delta", "eps"},
    "regulator-verify": {"measure", "observable", "delta", "eps", "regulator", "form", "center",
                         "base", "horizon", "mode", "trials", "strict", "confidence"},
    "kucera": {"words", "r", "m_max"},
    "counterexample": {"oracle", "oracle_file", "i", "n", "trials", "mode", "m_candidate", "confidence"},
    "test-deficiency": {"measure", "observable", "source", "M", "cutoff", "stages"},
    "test-convert": {"words", "r", "stage", "cutoff"},
}


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict) or not cfg:
        raise ConfigError("empty config")
    kind = cfg.get("kind")
    if kind not in KIND_KEYS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {sorted(KIND_KEYS)}")
    extra = set(cfg) - COMMON_KEYS - KIND_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown fields for {kind}: {sorted(extra)}")
    return cfg


def _rat(cfg, key, default=None) -> Fraction:
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing field {key!r}")
        return Fraction(default)
    try:
        return parse_rational(cfg[key])
    except ValueError as e:
        raise ConfigError(f"field {key!r}: {e}") from None


def _int(cfg, key, default=None) -> int:
    v = cfg.get(key, default)
    if v is None:
        raise ConfigError(f"missing field {key!r}")
    if isinstance(v, bool) or not isinstance(v, (int, str)) or not str(v).lstrip("-").isdigit():
        raise ConfigError(f"field {key!r} must be an integer, got {v!r}")
    return int(v)


def _observable(spec):
    if spec is None or spec == "first-bit":
        return first_bit()
    if isinstance(spec, list):
        return simple_from_config(spec)
    raise ConfigError(f"unknown observable {spec!r}")


def _measure(spec):
    if spec is None:
        return Uniform()
    try:
        return measure_from_config(spec)
    except (ValueError, KeyError) as e:
        raise ConfigError(f"measure: {e}") from None


def _source(spec, seed: int):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("source must be an object with a 'kind'")
    kind = spec["kind"]
    allowed = {"periodic": {"kind", "word"}, "prefix": {"kind", "word"}, "sampled": {"kind", "measure"}}
    if kind not in allowed:
        raise ConfigError(f"unknown source kind {kind!r}")
    if set(spec) - allowed[kind]:
        raise ConfigError(f"unknown source fields {sorted(set(spec) - allowed[kind])}")
    if kind == "periodic":
        return Periodic(spec["word"])
    if kind == "prefix":
        return ExplicitPrefix(spec["word"])
    return Sampled(_measure(spec.get("measure")), seed)


def _pairs(cfg) -> list[tuple[Fraction, Fraction]]:
    if "pairs" in cfg:
        out = [(parse_rational(a), parse_rational(b)) for a, b in cfg["pairs"]]
    elif "dyadic" in cfg:
        d = cfg["dyadic"]
        out = first_pairs(_int(d, "M", 1), _int(d, "count"))
    else:
        raise ConfigError("need 'pairs' or 'dyadic'")
    for a, b in out:
        if not a < b:
            raise ConfigError(f"pair ({a}, {b}) needs alpha < beta")
    return out


def _csv(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue().encode()


def _json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


# ---------------------------------------------------------------------------
# experiments: each returns (exit code, {filename: bytes}, summary)


def exp_averages(cfg, seed):
    f = _observable(cfg.get("observable"))
    n = _int(cfg, "horizon")
    tr = Trajectory(_source(cfg.get("source"), seed), machine_by_name(cfg.get("machine", "shift")))
    series = AverageSeries.from_trajectory(tr, f, n - 1)
    rows = [(m + 1, format_rational(s), f"{float(s):.12g}") for m, s in enumerate(series.s)]
    last = series.s[-1]
    return EXIT_OK, {"averages.csv": _csv(["n", "s_n", "s_n_float"], rows)}, {"final": format_rational(last)}


def exp_upcrossings(cfg, seed):
    f = _observable(cfg.get("observable"))
    n = _int(cfg, "horizon")
    tr = Trajectory(_source(cfg.get("source"), seed), machine_by_name(cfg.get("machine", "shift")))
    series = AverageSeries.from_trajectory(tr, f, n)
    rows, counts = [], {}
    for a, b in _pairs(cfg):
        for m in range(n + 1):
            sig = count_upcrossings(series, a, b, m).count
            rows.append((format_rational(a), format_rational(b), m, format_rational(series[m]), sig))
        counts[f"{format_rational(a)},{format_rational(b)}"] = sig
    return EXIT_OK, {"upcrossings.csv": _csv(["alpha", "beta", "n", "s_n", "sigma_n"], rows)}, {"sigma": counts}


def exp_ineq_check(cfg, seed):
    P = _measure(cfg.get("measure"))
    f = _observable(cfg.get("observable"))
    n = _int(cfg, "horizon")
    reports = []
    for a, b in _pairs(cfg):
        r = check_integrated_inequality(P, f, a, b, n)
        reports.append({"alpha": format_rational(a), "beta": format_rational(b), "ok": r.ok,
                        "lhs": format_rational(r.lhs), "rhs": format_rational(r.rhs),
                        "depth": r.depth, "cylinders": r.cylinders})
    ok = all(r["ok"] for r in reports)
    out = {"ok": ok, "n": n, "reports": reports}
    return (EXIT_OK if ok else EXIT_FAIL), {"ineq.json": _json(out)}, {"ok": ok}


def exp_regulator_hoeffding(cfg, seed):
    d, e = _rat(cfg, "delta"), _rat(cfg, "eps")
    m = hoeffding_regulator(d, e)
    out = {"delta": format_rational(d), "eps": format_rational(e), "m": m, "regulator": "hoeffding"}
    return EXIT_OK, {"regulator.json": _json(out)}, out


def exp_regulator_verify(cfg, seed):
    P = _measure(cfg.get("measure"))
    f = _observable(cfg.get("observable"))
    d, e = _rat(cfg, "delta"), _rat(cfg, "eps")
    reg = cfg.get("regulator", {"kind": "hoeffding"})
    info: dict = {"kind": reg.get("kind")}
    if reg.get("kind") == "hoeffding":
        m = hoeffding_regulator(d, e)
    elif reg.get("kind") == "ergodic":
        det = ergodic_regulator_details(f, P, d, e)
        m = det.m
        info.update(p=det.p, r=format_rational(det.r), norms=[[p, format_rational(v)] for p, v in det.norms])
    elif reg.get("kind") == "value":
        m = _int(reg, "m")
    else:
        raise ConfigError(f"unknown regulator {reg!r}")
    info["m"] = m
    form = cfg.get("form", "limit")
    center = _rat(cfg, "center") if "center" in cfg else f.expectation(P)
    horizon = _int(cfg, "horizon")
    q = ExceedanceQuery(P, f, d, max(m, 1), max(horizon, m, 1), form,
                        center=center if form == "limit" else None,
                        base=_int(cfg, "base") if form == "pair" else None,
                        strict=bool(cfg.get("strict", True)))
    v = verify_regulator_pointwise(q, m, e, mode=cfg.get("mode", "exact"), trials=_int(cfg, "trials", 10_000),
                                   seed=seed, confidence=float(cfg.get("confidence", 0.99)))
    out = {"regulator": info, "delta": format_rational(d), "form": form, **v.to_json()}
    code = {"pass": EXIT_OK, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}[v.verdict]
    return code, {"verify.json": _json(out)}, {"verdict": v.verdict, "m": m}


def _words(cfg) -> IntervalSet:
    words = cfg.get("words")
    if not isinstance(words, list) or not words:
        raise ConfigError("'words' must be a non-empty list")
    return IntervalSet.of(*["" if w in ("-", "") else w for w in words])


def exp_kucera(cfg, seed):
    U, r, m_max = _words(cfg), _rat(cfg, "r"), _int(cfg, "m_max")
    try:
        rows = kucera_table(U, r, m_max)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    ok = all(row.ok for row in rows)
    out = {
        "U": list(U),
        "L_U": format_rational(U.uniform_measure()),
        "r": format_rational(r),
        "ok": ok,
        "rows": [{"m": row.m, "measure": format_rational(row.measure), "bound": format_rational(row.bound),
                  "ok": row.ok} for row in rows],
    }
    return (EXIT_OK if ok else EXIT_FAIL), {"kucera.json": _json(out)}, {"ok": ok}


def exp_counterexample(cfg, seed):
    if "oracle_file" in cfg:
        oracle = HaltingOracle.load(cfg["oracle_file"])
    elif "oracle" in cfg:
        oracle = HaltingOracle.from_text("\n".join(cfg["oracle"]) if isinstance(cfg["oracle"], list) else cfg["oracle"])
    else:
        raise ConfigError("need 'oracle' or 'oracle_file'")
    mc = cfg.get("m_candidate")
    rep = defeat_candidate(oracle, _int(cfg, "i"), _int(cfg, "n"), mode=cfg.get("mode", "mc"),
                           trials=_int(cfg, "trials", 100_000), seed=seed,
                           confidence=float(cfg.get("confidence", 0.99)),
                           m_candidate=None if mc is None else int(mc))
    code = {"defeated": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}.get(rep.verdict, EXIT_OK)
    return code, {"counterexample.json": _json(rep.to_json())}, {"verdict": rep.verdict}


def exp_test_deficiency(cfg, seed):
    P = _measure(cfg.get("measure"))
    f = _observable(cfg.get("observable"))
    t = assemble_integral_test(P, f, _int(cfg, "M", 1), 0, _int(cfg, "cutoff"))
    src = _source(cfg.get("source"), seed)
    rows = []
    for s in range(1, _int(cfg, "stages") + 1):
        v = deficiency_estimate(t, src, s)
        rows.append((s, format_rational(v), f"{float(v):.12g}"))
    return EXIT_OK, {"deficiency.csv": _csv(["stage", "value", "value_float"], rows)}, {"final": rows[-1][1]}


def exp_test_convert(cfg, seed):
    U, r = _words(cfg), _rat(cfg, "r")
    try:
        t = kucera_test(U, r)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    stage, cutoff = _int(cfg, "stage", 0), _int(cfg, "cutoff")
    g = integral_from_ml(t, stage, cutoff)
    ex = g.expectation(Uniform())
    out = {"expectation": format_rational(ex), "ok": ex <= 1, "pieces": g.to_config(),
           "cutoff": cutoff, "stage": stage}
    return (EXIT_OK if ex <= 1 else EXIT_FAIL), {"integral_test.json": _json(out)}, {"expectation": out["expectation"]}


EXPERIMENTS = {
    "averages": exp_averages,
    "upcrossings": exp_upcrossings,
    "ineq-check": exp_ineq_check,
    "regulator-hoeffding": exp_regulator_hoeffding,
    "regulator-verify": exp_regulator_verify,
    "kucera": exp_kucera,
    "counterexample": exp_counterexample,
    "test-deficiency": exp_test_deficiency,
    "test-convert": exp_test_convert,
}


def run(cfg: dict, output_dir: str | Path | None = None) -> tuple[int, dict]:
    """Run one experiment, write outputs plus ``manifest.json``; return (exit code, manifest)."""
    cfg = validate_config(cfg)
    seed = _int(cfg, "seed", 0)
    out = Path(output_dir or cfg.get("output_dir") or os.environ.get(OUTDIR_ENV, "cantor-ergodic-out"))
    t0 = time.perf_counter()
    code, files, summary = EXPERIMENTS[cfg["kind"]](cfg, seed)
    wall = time.perf_counter() - t0
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, data in sorted(files.items()):
        (out / name).write_bytes(data)
        digests[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "config": cfg,
        "version": __version__,
        "seed": seed,
        "wall_time_s": round(wall, 6),
        "outputs": digests,
        "exit_code": code,
        "summary": summary,
    }
    (out / "manifest.json").write_bytes(_json(manifest))
    return code, manifest


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p):
    p.add_argument("--config", help="JSON experiment config; flags override its fields")
    p.add_argument("--out", help=f"output directory (default: ${OUTDIR_ENV} or ./cantor-ergodic-out)")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cantor-ergodic", description="Effective ergodic-average experiments.")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("run", help="run a config file as is")
    _add_common(p)

    for name in ("averages", "upcrossings"):
        p = sub.add_parser(name)
        _add_common(p)
        p.add_argument("--periodic", help="periodic source word")
        p.add_argument("--prefix", help="explicit finite source word")
        p.add_argument("--horizon", type=int)
        p.add_argument("--machine")
        if name == "upcrossings":
            p.add_argument("--alpha")
            p.add_argument("--beta")

    p = sub.add_parser("ineq-check")
    _add_common(p)
    p.add_argument("--alpha")
    p.add_argument("--beta")
    p.add_argument("--horizon", type=int)

    p = sub.add_parser("regulator")
    rsub = p.add_subparsers(dest="action")
    h = rsub.add_parser("hoeffding")
    _add_common(h)
    h.add_argument("--delta")
    h.add_argument("--eps")
    v = rsub.add_parser("verify")
    _add_common(v)
    v.add_argument("--mode", choices=["exact", "mc"])
    v.add_argument("--horizon", type=int)
    v.add_argument("--trials", type=int)
    v.add_argument("--delta")
    v.add_argument("--eps")

    p = sub.add_parser("kucera")
    _add_common(p)
    p.add_argument("--words", help="comma-separated prefix-free words")
    p.add_argument("--r")
    p.add_argument("--m-max", dest="m_max", type=int)

    p = sub.add_parser("counterexample")
    _add_common(p)
    p.add_argument("--oracle", dest="oracle_file", help="oracle table file, lines 'i u [t]'")
    p.add_argument("--i", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=["exact", "mc"])
    p.add_argument("--m-candidate", dest="m_candidate", type=int)

    p = sub.add_parser("test")
    tsub = p.add_subparsers(dest="action")
    k = tsub.add_parser("kucera")
    _add_common(k)
    k.add_argument("--words")
    k.add_argument("--r")
    k.add_argument("--m-max", dest="m_max", type=int)
    c = tsub.add_parser("convert")
    _add_common(c)
    c.add_argument("direction", choices=["ml-to-integral"])
    c.add_argument("--words")
    c.add_argument("--r")
    c.add_argument("--stage", type=int)
    c.add_argument("--cutoff", type=int)
    d = tsub.add_parser("deficiency")
    _add_common(d)
    d.add_argument("--periodic")
    d.add_argument("--prefix")
    d.add_argument("--cutoff", type=int)
    d.add_argument("--stages", type=int)
    return ap


KIND_OF = {
    ("averages", None): "averages",
    ("upcrossings", None): "upcrossings",
    ("ineq-check", None): "ineq-check",
    ("regulator", "hoeffding"): "regulator-hoeffding",
    ("regulator", "verify"): "regulator-verify",
    ("kucera", None): "kucera",
    ("counterexample", None): "counterexample",
    ("test", "kucera"): "kucera",
    ("test", "convert"): "test-convert",
    ("test", "deficiency"): "test-deficiency",
}

_PASSTHROUGH = ("horizon", "machine", "delta", "eps", "mode", "trials", "r", "m_max", "oracle_file",
                "i", "n", "m_candidate", "stage", "cutoff", "stages")


def config_from_args(args) -> dict:
    cfg: dict = {}
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from None
    if args.command != "run":
        kind = KIND_OF[(args.command, getattr(args, "action", None))]
        if cfg.get("kind", kind) != kind:
            raise ConfigError(f"config kind {cfg['kind']!r} does not match subcommand ({kind})")
        cfg["kind"] = kind
    for key in _PASSTHROUGH:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "periodic", None):
        cfg["source"] = {"kind": "periodic", "word": args.periodic}
    if getattr(args, "prefix", None):
        cfg["source"] = {"kind": "prefix", "word": args.prefix}
    if getattr(args, "words", None):
        cfg["words"] = [w.strip() for w in args.words.split(",")]
    if getattr(args, "alpha", None) is not None or getattr(args, "beta", None) is not None:
        if args.alpha is None or args.beta is None:
            raise ConfigError("--alpha and --beta go together")
        cfg["pairs"] = [[args.alpha, args.beta]]
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None or (args.command in ("regulator", "test") and args.action is None):
        parser.print_usage(sys.stderr)
        return EXIT_ERROR
    try:
        cfg = config_from_args(args)
        code, manifest = run(cfg, getattr(args, "out", None))
    except (ConfigError, ValueError, KeyError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps({"exit_code": code, "outputs": manifest["outputs"], "summary": manifest["summary"]},
                     sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
