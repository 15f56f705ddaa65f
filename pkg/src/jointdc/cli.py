"""``jointdc`` command-line front end.

Configuration is a flat ``key=value`` file; keys carry a section prefix such
as ``rule.theta``. Output is CSV with a header line; lines starting with '#'
are the only non-data lines.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .analysis import exact_region_prob, monte_carlo_region_prob, sweep_binary_example
from .codec import DecodeError, decode_bytes, pack_bits, two_part_encode
from .core import Pmf, RuleKind, RuleSpec, TypeComposition, empirical_type
from .exponents import (
    exponent_e1,
    exponent_e2,
    exponent_e_c,
    exponent_e_fa,
    exponent_e_md,
    plan_parameters,
)
from .regions import DEFAULT_TYPE_CAP, materialize_region

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

COMMANDS = ("plan", "exponents", "simulate", "sweep", "codec")
# sections owned by a single subcommand
_COMMAND_SECTIONS = {"plan": "plan", "simulate": "simulate", "sweep": "sweep"}

_RULE_FLOATS = ("theta", "theta0", "theta1", "alpha", "beta", "lambda0", "lambda1",
                "rate_R", "exp_fa", "slack_c")
_KNOWN_KEYS = (
    {"alphabet_size", "p0", "p1", "output"}
    | {f"rule.{k}" for k in _RULE_FLOATS + ("kind", "m", "train0", "train1")}
    | {"plan.e_fa", "plan.e_md"}
    | {"sweep.variable", "sweep.from", "sweep.to", "sweep.steps", "sweep.kink_threshold"}
    | {"simulate.n", "simulate.trials", "simulate.seed", "simulate.source", "simulate.type_cap"}
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def parse_config_text(text: str) -> Dict[str, str]:
    """Flat key=value lines; blank lines and '#' comments are skipped."""
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _float(entries, key, default=None) -> float:
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return float(entries[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {entries[key]!r}") from None


def _int(entries, key, default=None) -> int:
    if key not in entries:
        if default is None:
            raise ConfigError(f"missing key {key!r}")
        return default
    try:
        return int(entries[key])
    except ValueError:
        raise ConfigError(f"{key}: not an integer: {entries[key]!r}") from None


def _list(value: str) -> List[str]:
    return [s.strip() for s in value.split(",") if s.strip()]


@dataclass
class Config:
    entries: Dict[str, str]
    alphabet_size: Optional[int] = None
    p0: Optional[Pmf] = None
    p1: Optional[Pmf] = None
    rule: RuleSpec = field(default_factory=RuleSpec)
    train0: Optional[TypeComposition] = None
    train1: Optional[TypeComposition] = None

    def require(self, *names):
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"missing key {name!r}")


def _pmf(entries, key, alphabet_size) -> Optional[Pmf]:
    if key not in entries:
        return None
    try:
        weights = [float(s) for s in _list(entries[key])]
        pmf = Pmf.from_weights(weights)
    except ValueError as err:
        raise ConfigError(f"{key}: {err}") from None
    if alphabet_size is not None and pmf.alphabet_size != alphabet_size:
        raise ConfigError(f"{key} has {pmf.alphabet_size} entries, alphabet_size is {alphabet_size}")
    return pmf


def _training(entries, key, alphabet_size) -> Optional[TypeComposition]:
    if key not in entries:
        return None
    if alphabet_size is None:
        raise ConfigError(f"{key} needs alphabet_size")
    try:
        return empirical_type([int(s) for s in _list(entries[key])], alphabet_size)
    except ValueError as err:
        raise ConfigError(f"{key}: {err}") from None


def build_config(entries: Dict[str, str], command: str) -> Config:
    for cmd, section in _COMMAND_SECTIONS.items():
        if cmd != command and any(k.startswith(section + ".") for k in entries):
            raise ConfigError(f"section {section!r} does not belong to '{command}'")
    alphabet_size = _int(entries, "alphabet_size") if "alphabet_size" in entries else None
    if alphabet_size is not None and alphabet_size < 2:
        raise ConfigError("alphabet_size must be at least 2")
    rule_kwargs = {k: _float(entries, f"rule.{k}") for k in _RULE_FLOATS if f"rule.{k}" in entries}
    if "rule.kind" in entries:
        try:
            rule_kwargs["kind"] = RuleKind(entries["rule.kind"].upper())
        except ValueError:
            raise ConfigError(f"rule.kind: unknown rule {entries['rule.kind']!r}") from None
    if "rule.m" in entries:
        rule_kwargs["m"] = _int(entries, "rule.m")
    try:
        rule = RuleSpec(**rule_kwargs)
    except ValueError as err:
        raise ConfigError(f"rule: {err}") from None
    p0 = _pmf(entries, "p0", alphabet_size)
    p1 = _pmf(entries, "p1", alphabet_size)
    if p0 is not None and p1 is not None and p0.alphabet_size != p1.alphabet_size:
        raise ConfigError("p0 and p1 have different lengths")
    if alphabet_size is None:
        src = p1 or p0
        alphabet_size = src.alphabet_size if src is not None else None
    return Config(
        entries, alphabet_size, p0, p1, rule,
        _training(entries, "rule.train0", alphabet_size),
        _training(entries, "rule.train1", alphabet_size),
    )


# ---------------------------------------------------------------------------
# CSV


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    if value is None:
        return ""
    return str(value)


def render_csv(header: List[str], rows: List[list], comments: List[str] = ()) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    for line in comments:
        buf.write(f"# {line}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands; each returns (csv text, exit code)


def cmd_plan(cfg: Config):
    cfg.require("p0", "p1")
    e_fa = _float(cfg.entries, "plan.e_fa")
    e_md = _float(cfg.entries, "plan.e_md")
    if not (e_fa > 0 and e_md > 0):
        raise ConfigError("plan.e_fa and plan.e_md must be positive")
    plan = plan_parameters(e_fa, e_md, cfg.rule.theta, cfg.p0, cfg.p1)
    header = ["alpha", "beta", "e_fa_inv", "e2_inv", "e1_inv", "margin", "feasible"]
    row = [plan.alpha, plan.beta, plan.e_fa_inv, plan.e2_inv, plan.e1_inv, plan.margin,
           plan.feasible]
    return render_csv(header, [row]), EXIT_OK if plan.feasible else EXIT_INFEASIBLE


def cmd_exponents(cfg: Config):
    cfg.require("p0", "p1")
    r = cfg.rule
    th, al, be = r.theta, r.alpha, r.beta
    e1 = exponent_e1(cfg.p1, th, be)
    e2 = exponent_e2(cfg.p0, cfg.p1, al - be)
    md = exponent_e_md(cfg.p0, cfg.p1, th, al, be)
    fa = exponent_e_fa(cfg.p0, cfg.p1, th, al, be)
    ec = exponent_e_c(cfg.p0, cfg.p1, th, al, be)
    header = ["theta", "alpha", "beta", "e1", "e2", "e_md", "e_fa", "e_c",
              "e_md_branch", "fa_feasible", "fa_active", "ec_feasible"]
    active = "".join("1" if a else "0" for a in fa.active)
    row = [th, al, be, e1.value, e2.value, md.value, fa.value, ec.value,
           md.branch or "", fa.feasible, active, ec.feasible]
    return render_csv(header, [row]), EXIT_OK


def _row_seed(seed: int, index: int) -> int:
    child = np.random.SeedSequence(seed).spawn(index + 1)[index]
    return int(child.generate_state(1, np.uint64)[0])


def cmd_simulate(cfg: Config, seed: Optional[int] = None):
    e = cfg.entries
    if cfg.alphabet_size is None:
        raise ConfigError("missing key 'alphabet_size'")
    try:
        ns = [int(s) for s in _list(e.get("simulate.n", ""))]
    except ValueError:
        raise ConfigError("simulate.n must be a list of integers") from None
    if not ns or any(n < 1 for n in ns):
        raise ConfigError("simulate.n must list positive lengths")
    trials = _int(e, "simulate.trials")
    if trials < 1:
        raise ConfigError("simulate.trials must be at least 1")
    if seed is None:
        seed = _int(e, "simulate.seed", 0)
    cap = _int(e, "simulate.type_cap", DEFAULT_TYPE_CAP)
    source = e.get("simulate.source", "both").upper()
    sources = {"P0": ["P0"], "P1": ["P1"], "BOTH": ["P0", "P1"]}.get(source)
    if sources is None:
        raise ConfigError(f"simulate.source must be P0, P1 or both, got {source!r}")
    pmfs = {"P0": cfg.p0, "P1": cfg.p1}
    for s in sources:
        if pmfs[s] is None:
            raise ConfigError(f"sampling from {s} needs key {s.lower()!r}")
    rule = cfg.rule
    if rule.kind in (RuleKind.STAR, RuleKind.HAT, RuleKind.STAR_UNIV, RuleKind.EXCESS):
        cfg.require("p0", "p1")
    if rule.kind is RuleKind.U_TRAINING and (cfg.train0 is None or cfg.train1 is None):
        raise ConfigError("U_TRAINING needs rule.train0 and rule.train1")

    rows = []
    comments = []
    index = 0
    for n in ns:
        try:
            region = materialize_region(rule, cfg.p0, cfg.p1, n, cfg.alphabet_size,
                                        cfg.train0, cfg.train1, cap=cap)
        except ValueError as err:
            if "exceeds the cap" not in str(err):
                raise
            region = None
            comments.append(f"exact column empty for n={n}: {err}")
        for s in sources:
            exact = exact_region_prob(region, pmfs[s]) if region is not None else None
            mc = monte_carlo_region_prob(rule, cfg.p0, cfg.p1, s, n, trials,
                                         _row_seed(seed, index), cfg.train0, cfg.train1)
            index += 1
            rows.append([n, s, exact, mc.estimate, mc.std_error, mc.hits, mc.trials])
    header = ["n", "source", "exact_log_prob", "mc_estimate", "std_error", "hits", "trials"]
    return render_csv(header, rows, comments), EXIT_OK


def cmd_sweep(cfg: Config):
    e = cfg.entries
    variable = e.get("sweep.variable")
    if variable not in ("theta", "alpha", "beta"):
        raise ConfigError("sweep.variable must be theta, alpha or beta")
    lo = _float(e, "sweep.from")
    hi = _float(e, "sweep.to")
    steps = _int(e, "sweep.steps")
    if steps < 5:
        raise ConfigError("sweep.steps must be at least 5")
    threshold = _float(e, "sweep.kink_threshold", 0.01)
    values = np.linspace(lo, hi, steps)
    r = cfg.rule
    try:
        result = sweep_binary_example(variable, values, r.theta, r.alpha, r.beta, threshold)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    header = ["variable", "value", "theta", "alpha", "beta", "q_threshold", "branch",
              "in_regime", "e_fa_closed", "e_md_closed", "e_c_closed", "e_fa", "e_md", "e_c",
              "e_md_branch", "e_fa_active"]
    rows = [[getattr(row, h) for h in header] for row in result.rows]
    comments = []
    for k in result.flips:
        a, b = result.rows[k.index].value, result.rows[k.index + 1].value
        detail = (f"location={fmt(k.location)} cell={fmt(a)},{fmt(b)} "
                  f"left_slope={fmt(k.left_slope)} right_slope={fmt(k.right_slope)} "
                  f"gap={fmt(k.gap)}")
        comments.append(f"branch_flip {detail}")
        if k.flagged:
            comments.append(f"kink {detail}")
    return render_csv(header, rows, comments), EXIT_OK


def cmd_codec(cfg: Config, encode: Optional[str], decode: Optional[str], out: Optional[str]):
    if (encode is None) == (decode is None):
        raise ConfigError("codec needs exactly one of --encode or --decode")
    if out is None:
        raise ConfigError("codec needs --out")
    if encode is not None:
        k = cfg.alphabet_size
        if k is None:
            raise ConfigError("missing key 'alphabet_size'")
        if k > 256:
            raise ConfigError("codec symbols are bytes, so alphabet_size is at most 256")
        data = _read_bytes(encode)
        if not data:
            raise ConfigError("empty input")
        bad = [b for b in data if b >= k]
        if bad:
            raise ConfigError(f"symbol {bad[0]} outside alphabet of size {k}")
        Path(out).write_bytes(pack_bits(two_part_encode(list(data), k)))
        Path(out + ".meta").write_text(f"n={len(data)} alphabet={k}\n")
        return EXIT_OK
    meta_path = Path(decode + ".meta")
    try:
        n, k = _parse_meta(meta_path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read {meta_path}: {err.strerror}") from None
    if cfg.alphabet_size is not None and cfg.alphabet_size != k:
        raise ConfigError(f"stream alphabet {k} differs from alphabet_size {cfg.alphabet_size}")
    try:
        symbols = decode_bytes(_read_bytes(decode), n, k)
    except DecodeError as err:
        raise ConfigError(f"decode failed: {err}") from None
    Path(out).write_bytes(bytes(symbols))
    return EXIT_OK


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None


def _parse_meta(text: str):
    fields = dict(part.split("=", 1) for part in text.split() if "=" in part)
    try:
        n, k = int(fields["n"]), int(fields["alphabet"])
    except (KeyError, ValueError):
        raise ConfigError(f"malformed sidecar: {text.strip()!r}") from None
    if n < 1 or not 2 <= k <= 256:
        raise ConfigError(f"sidecar out of range: n={n} alphabet={k}")
    return n, k


# ---------------------------------------------------------------------------
# entry point


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jointdc",
        description="Joint detection and lossless compression: exponents, regions, codec.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key=value configuration file")
    parser.add_argument("--out", help="output path (CSV goes to stdout when omitted)")
    parser.add_argument("--seed", type=_u64, help="64-bit seed, overrides simulate.seed")
    mode = parser.add_mutually_exclusive_group()
    mode.add_argument("--encode", metavar="PATH", help="codec: file of byte symbols to encode")
    mode.add_argument("--decode", metavar="PATH", help="codec: packed stream to decode")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage errors map to 1 here
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        try:
            text = Path(args.config).read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {args.config}: {err.strerror}") from None
        entries = parse_config_text(text)
        cfg = build_config(entries, args.command)
        out = args.out or entries.get("output")
        if args.command == "codec":
            return cmd_codec(cfg, args.encode, args.decode, out)
        if args.encode or args.decode:
            raise ConfigError("--encode/--decode only apply to codec")
        if args.command == "plan":
            text, code = cmd_plan(cfg)
        elif args.command == "exponents":
            text, code = cmd_exponents(cfg)
        elif args.command == "simulate":
            text, code = cmd_simulate(cfg, args.seed)
        else:
            text, code = cmd_sweep(cfg)
    except ValueError as err:
        sys.stderr.write(f"jointdc: error: {err}\n")
        return EXIT_ERROR
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
