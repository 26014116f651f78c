"""Command-line entry point: ``branchcount {expand,swap,prob,eprb}``.

Every command prints one JSON document (or CSV for tables) on stdout and
exits 0 when all of its checks pass, 2 when a check fails and 1 on bad
input.  Output depends only on the command, its flags and the seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from fractions import Fraction

import numpy as np

from . import eprb
from .errors import BranchCountError
from .event_space import build_swap_triple, forced_equalities
from .expansion import construct, validate
from .hilbert import StateVector, Tolerance, embed, make_rng, random_projector
from .microprob import converge, embed_for_counting, uniqueness_check

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_VIOLATION = 2
FLOAT_DIGITS = 12


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage with the input-error exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Make ``obj`` JSON-ready with floats cut to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        x = float(f"{x:.{FLOAT_DIGITS}g}")
        return 0.0 if x == 0 else x
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _emit_json(payload: dict, out) -> None:
    out.write(json.dumps(_clean(payload), indent=2) + "\n")


def _emit_csv(rows: list[dict], out) -> None:
    rows = [_clean(r) for r in rows]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    out.write(buf.getvalue())


def _load_state(path: str) -> StateVector:
    try:
        with open(path) as fh:
            pairs = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read state file {path}: {exc}") from exc
    if not isinstance(pairs, list) or not pairs or not all(
        isinstance(p, list) and len(p) == 2 and all(isinstance(x, (int, float)) for x in p) for p in pairs
    ):
        raise InputError("state file must be a non-empty JSON array of [re, im] pairs")
    return StateVector.from_pairs(pairs)


def _require_csv_table(args, table: bool) -> None:
    if args.format == "csv" and not table:
        raise InputError("--format csv is only available for tables")


def cmd_expand(args, tol: Tolerance, out) -> int:
    _require_csv_table(args, False)
    if args.state_file:
        psi = _load_state(args.state_file)
        if args.dim is not None and args.dim != psi.dim:
            raise InputError(f"--dim {args.dim} disagrees with state file dimension {psi.dim}")
    elif args.dim is None:
        raise InputError("expand needs --dim or --state-file")
    else:
        psi = StateVector.random(args.dim, args.seed)
    if args.embed and args.n > psi.dim:
        psi = embed(psi, args.n)
    lam = construct(psi, args.n, args.seed, tol)
    rep = validate(lam, tol)
    _emit_json({
        "n": lam.n,
        "dim": lam.dim,
        "theta_log": list(lam.theta_log),
        "checks": rep.checks(),
        "max_violation": rep.max_violation,
        "ok": rep.ok,
    }, out)
    return EXIT_OK if rep.ok else EXIT_VIOLATION


def cmd_swap(args, tol: Tolerance, out) -> int:
    _require_csv_table(args, False)
    if args.i == args.j and args.n > 1:
        raise InputError(f"invalid pair: i = j = {args.i}")
    if args.n > 1 and args.dim < args.n + 1:
        raise InputError(f"swap needs dim >= n + 1, got dim {args.dim} and n {args.n}")
    rng = make_rng(args.seed)
    psi = StateVector.random(args.dim, rng)
    lam = construct(psi, args.n, rng, tol)
    if args.n == 1:
        # nothing to exchange: the lone microstate is psi itself
        payload = {"n": 1, "i": 0, "j": 0, "residual": 0.0, "abs_z_a": 1.0, "abs_z_b": 1.0,
                   "classes": [[0]], "solution_dim": 0, "mu": [1.0]}
        ok = True
    else:
        triple = build_swap_triple(lam, args.i, args.j, rng, tol)
        residual = triple.composite_residual(psi)
        forced = forced_equalities(lam, rng, tol)
        ok = residual <= tol.rel and len(forced.classes) == 1 and forced.unique
        payload = {
            "n": lam.n,
            "i": args.i,
            "j": args.j,
            "residual": residual,
            "abs_z_a": abs(triple.z_a),
            "abs_z_b": abs(triple.z_b),
            "classes": [list(c) for c in forced.classes],
            "solution_dim": forced.solution_dim,
            "mu": list(forced.mu),
        }
    payload["ok"] = ok
    _emit_json(payload, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise InputError(f"bad --grid {text!r}: {exc}") from exc
    if not grid or min(grid) < 1:
        raise InputError("--grid needs positive integers")
    return grid


def cmd_prob(args, tol: Tolerance, out) -> int:
    if not 0 <= args.projector_rank <= args.dim:
        raise InputError(f"--projector-rank must lie in 0..{args.dim}")
    grid = _parse_grid(args.grid) if args.grid else [args.n]
    rng = make_rng(args.seed)
    psi = StateVector.random(args.dim, rng)
    P = random_projector(args.dim, args.projector_rank, rng)
    count_seed = int(rng.integers(2**63))
    rows = []
    for row in converge(P, psi, grid, count_seed, tol, auto_embed=not args.no_embed):
        p_n, psi_n = (P, psi) if args.no_embed else embed_for_counting(P, psi, row.count.n, tol)
        unique = uniqueness_check(p_n, psi_n, row.count.n, args.trials, count_seed, tol) if args.trials else True
        rows.append({**row.as_dict(), "unique": unique, "ok": row.ok and unique})
    ok = all(r["ok"] for r in rows)
    if args.format == "csv":
        flat = []
        for r in rows:
            lo, hi = r.pop("interval")
            flat.append({**r, "interval_lo": lo, "interval_hi": hi})
        _emit_csv(flat, out)
    else:
        _emit_json({"rows": rows, "ok": ok} if args.grid else {**rows[0], "ok": ok}, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def _scenario(args) -> tuple[eprb.EprbScenario, tuple | None]:
    settings = [eprb.Setting.degrees(x) for x in (args.a, args.aprime, args.b, args.bprime)]
    pad = eprb.required_pad(args.n) if args.pad is None else args.pad
    if pad < 0:
        raise InputError("--pad must be non-negative")
    rng = make_rng(np.random.SeedSequence(args.seed).spawn(2)[0])
    if args.state == "singlet":
        return eprb.EprbScenario.singlet(settings[:2], settings[2:], args.n, pad), None
    phi, chi = eprb.random_product(rng, pad)
    return eprb.EprbScenario.product(phi, chi, settings[:2], settings[2:], args.n, pad), (phi, chi)


def cmd_eprb(args, tol: Tolerance, out) -> int:
    _require_csv_table(args, args.check == "table")
    sc, factors = _scenario(args)
    seed = make_rng(np.random.SeedSequence(args.seed).spawn(2)[1])
    a, b = sc.alice[0], sc.bob[0]
    head = {"check": args.check, "state": args.state, "n": sc.n, "pad": sc.pad}

    if args.check == "pi":
        rep = eprb.parameter_independence(sc, seed, tol)
        payload, ok = rep.as_dict(), rep.ok
    elif args.check == "oi":
        rep = eprb.outcome_independence(sc, a, b, tol)
        expected = "factorizing"
        if args.state == "singlet" and abs(math.cos(a.angle - b.angle)) > tol.rel:
            expected = "violating"
        payload = {**rep.as_dict(), "expected": expected}
        ok = rep.classification == expected
    elif args.check == "chsh":
        rep = eprb.chsh(sc, seed, tol)
        payload, ok = rep.as_dict(), rep.within_bound
    elif args.check == "table":
        table = eprb.joint_table(sc, a, b, seed, tol)
        ok = table.consistent(tol) and all(
            abs(v["born_sum"] - v["born_direct"]) <= tol.rel for side in (table.alice, table.bob) for v in side.values()
        )
        if args.format == "csv":
            rows = [{"s": s, "t": t, **{k: v for k, v in e.as_dict().items() if k != "interval"},
                     "interval_lo": e.interval[0], "interval_hi": e.interval[1]}
                    for (s, t), e in table.entries.items()]
            _emit_csv(rows, out)
            return EXIT_OK if ok else EXIT_VIOLATION
        payload = {**table.as_dict(), "consistent": ok}
    else:
        if factors is None:
            raise InputError("product-count needs --state product")
        rep = eprb.product_counting(*factors, a, b, args.na, args.nb, seed, pad=sc.pad, tol=tol)
        payload, ok = rep.as_dict(), rep.ok
    _emit_json({**head, **payload, "ok": ok}, out)
    return EXIT_OK if ok else EXIT_VIOLATION


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, required=True, help="PRNG seed (required)")
    common.add_argument("--tol", type=float, default=None,
                        help="relative tolerance; overrides $BRANCHCOUNT_TOL")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="branchcount", description="Microstate counting for no-collapse quantum states.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("expand", parents=[common], help="build and validate an equiamplitude expansion")
    p.add_argument("--dim", type=int)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--state-file", help="JSON array of [re, im] pairs")
    p.add_argument("--embed", action="store_true", help="zero-pad the state up to dim n when n > dim")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("swap", parents=[common], help="swap two microstates and solve the forced equalities")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--i", type=int, default=0)
    p.add_argument("--j", type=int, default=1)
    p.set_defaults(func=cmd_swap)

    p = sub.add_parser("prob", parents=[common], help="count microstates in a random projector")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--projector-rank", type=int, required=True)
    p.add_argument("--grid", help="comma-separated list of n values")
    p.add_argument("--trials", type=int, default=10, help="seeds for the uniqueness check (0 skips it)")
    p.add_argument("--no-embed", action="store_true", help="fail instead of zero-padding when the dimension is short")
    p.set_defaults(func=cmd_prob)

    p = sub.add_parser("eprb", parents=[common], help="two-spin correlation experiments")
    p.add_argument("--state", choices=("singlet", "product"), default="singlet")
    p.add_argument("--a", type=float, default=0.0, help="Alice setting a (degrees)")
    p.add_argument("--aprime", type=float, default=90.0, help="Alice setting a' (degrees)")
    p.add_argument("--b", type=float, default=45.0, help="Bob setting b (degrees)")
    p.add_argument("--bprime", type=float, default=135.0, help="Bob setting b' (degrees)")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--pad", type=int, help="extra local dimensions (default: smallest that fits n)")
    p.add_argument("--na", type=int, default=10, help="local n for Alice in product-count")
    p.add_argument("--nb", type=int, default=10, help="local n for Bob in product-count")
    p.add_argument("--check", choices=("pi", "oi", "chsh", "table", "product-count"), required=True)
    p.set_defaults(func=cmd_eprb)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        tol = Tolerance.from_env(args.tol)
        if getattr(args, "n", 1) is not None and getattr(args, "n", 1) < 1:
            raise InputError("--n must be positive")
        return args.func(args, tol, out)
    except (InputError, BranchCountError, ValueError, IndexError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
