#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
dvlab command line.

Every verb prints exactly one JSON document on stdout (canonical key order, compact
separators) so that commands can be piped into each other; logs go to stderr.

    dvlab gmn --m 1 --n 1 --p 2 --N 4 | dvlab newton
    dvlab csd-check --s 2 --r 1 --input g11.json
    dvlab verify42 --p 2 --N 6 --log-d-max 2
"""

import argparse
import json
import sys
from typing import Callable, Dict, List, Optional, TextIO

from loguru import logger

from config import Config, default_precision
from dieudonne import DModule, make_gmn, module_from_dict
from errors import DvlabError, InvalidParams
from families import (
    ParamFamily,
    build_example42,
    example41_etale_sweep,
    example41_isogeny,
    example41_sweep,
    verify_no_csd_isogeny,
    xi_kernel_order,
)
from logger import DvlabLogger
from modular_linalg import matrix_to_json
from newton import newton_polygon
from padic_base import make_ring
from slope import (
    SlopeData,
    csd_saturate,
    descend_finite_field,
    enumerate_csd_isogenies,
    is_completely_slope_divisible,
    phi_stable_overlattices,
    slope_filtration,
    split_isoclinic,
)

USAGE_EXIT = 2


class UsageError(Exception):
    """Bad arguments or unreadable input (exit code 2)"""

    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code = code
        self.detail = detail


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("UsageError", message)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# input handling

def _load_document(source: Optional[str], stdin: Optional[TextIO]) -> dict:
    if source:
        text = source
        if not source.lstrip().startswith(("{", "[")):
            try:
                with open(source, "r", encoding="utf-8") as fh:
                    text = fh.read()
            except OSError as exc:
                raise UsageError("UsageError", f"cannot read {source}: {exc}")
    else:
        stream = stdin if stdin is not None else sys.stdin
        text = stream.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError("ParseError", f"invalid JSON: {exc}")
    if not isinstance(data, dict):
        raise UsageError("ParseError", "expected a JSON object")
    return data


def _load_module(args, stdin) -> DModule:
    data = _load_document(args.input, stdin)
    try:
        return module_from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError("ParseError", f"not a module description: {exc!r}")


def _slope_data(args, A: DModule) -> SlopeData:
    if args.s is None:
        if args.r:
            raise UsageError("UsageError", "--r needs --s")
        return SlopeData.from_polygon(newton_polygon(A))
    if not args.r:
        raise UsageError("UsageError", "--s needs at least one --r")
    return SlopeData(args.s, tuple(args.r))


def _precision(args, needed: int, budget: int = 0) -> int:
    if args.N is not None:
        if args.N < 1:
            raise InvalidParams(f"N must be positive, got {args.N}")
        return args.N
    N = default_precision(needed, budget)
    logger.info(f"no --N given, using N = {N}")
    return N


def _isogeny_json(iso) -> dict:
    return {
        "log_degree": iso.log_degree,
        "denominator": iso.denominator,
        "lattice_map": matrix_to_json(iso.B),
        "target": iso.target.to_dict(),
    }


# verbs

def cmd_ring(args, stdin) -> dict:
    ring = make_ring(args.p, args.a, _precision(args, 1))
    return {"ring": ring.to_dict(), "residue_size": ring.residue_size}


def cmd_gmn(args, stdin) -> dict:
    # det V has valuation a·m
    ring = make_ring(args.p, args.a, _precision(args, args.m * args.a + 1))
    return {"module": make_gmn(args.m, args.n, ring).to_dict()}


def cmd_newton(args, stdin) -> dict:
    A = _load_module(args, stdin)
    return {"polygon": newton_polygon(A).to_json()}


def cmd_filtration(args, stdin) -> dict:
    A = _load_module(args, stdin)
    filtration = slope_filtration(A)
    out = filtration.to_json()
    out["graded_polygons"] = [newton_polygon(piece).to_json() for piece in filtration.graded_pieces()]
    return out


def cmd_csd_check(args, stdin) -> dict:
    A = _load_module(args, stdin)
    sd = _slope_data(args, A)
    out = is_completely_slope_divisible(A, sd).to_dict()
    out["slope_data"] = sd.to_json()
    return out


def cmd_saturate(args, stdin) -> dict:
    A = _load_module(args, stdin)
    sd = _slope_data(args, A)
    return _isogeny_json(csd_saturate(A, sd))


def cmd_split(args, stdin) -> dict:
    A = _load_module(args, stdin)
    sd = _slope_data(args, A)
    split = split_isoclinic(A, sd)
    return {
        "parts": [part.to_dict() for part in split],
        "slopes": [newton_polygon(part).to_json() for part in split],
        "witness": matrix_to_json([list(r) for r in split.witness]),
    }


def cmd_descend(args, stdin) -> dict:
    A = _load_module(args, stdin)
    return descend_finite_field(A, _slope_data(args, A)).to_dict()


def cmd_enumerate(args, stdin) -> dict:
    A = _load_module(args, stdin)
    sd = _slope_data(args, A)
    if args.log_d is None or args.log_d < 0:
        raise UsageError("UsageError", "enumerate needs --log-d >= 0")
    isogenies = enumerate_csd_isogenies(A, args.log_d, sd, args.parallel)
    candidates = phi_stable_overlattices(A, args.log_d, sd, args.parallel)
    return {
        "log_d": args.log_d,
        "count": len(isogenies),
        "phi_stable_candidates": len(candidates),
        "isogenies": [_isogeny_json(iso) for iso in isogenies],
    }


def _example41_etale(args) -> dict:
    N = _precision(args, 5)
    if args.t is None:
        return example41_etale_sweep(args.p, N, args.a, args.parallel).to_dict()
    t = args.t if len(args.t) > 1 else args.t[0]
    family = ParamFamily.build(args.p, N, args.a)
    sd = SlopeData.from_polygon(newton_polygon(family.fiber(t)))
    out = family.phi_etale_data(t, sd).to_dict()
    out["slope_data"] = sd.to_json()
    return out


def cmd_example41(args, stdin) -> dict:
    if args.phi_etale:
        return _example41_etale(args)
    N = _precision(args, 3)
    if args.t is not None:
        t = args.t if len(args.t) > 1 else args.t[0]
        iso = example41_isogeny(args.p, t, N, args.a)
        return {
            "t": list(args.t),
            "fiber": iso.target.to_dict(),
            "polygon": newton_polygon(iso.target).to_json(),
            "xi_kernel_order": xi_kernel_order(args.p, t, N, args.a),
        }
    return example41_sweep(args.p, N, args.a, args.parallel).to_dict()


def cmd_example42(args, stdin) -> dict:
    return build_example42(args.p, _precision(args, 4)).to_dict()


def cmd_verify42(args, stdin) -> dict:
    log_d_max = args.log_d_max
    glued = build_example42(args.p, _precision(args, 4, log_d_max + 1))
    return verify_no_csd_isogeny(glued, log_d_max, args.parallel).to_dict()


COMMANDS: Dict[str, Callable] = {
    "ring": cmd_ring,
    "gmn": cmd_gmn,
    "newton": cmd_newton,
    "filtration": cmd_filtration,
    "csd-check": cmd_csd_check,
    "saturate": cmd_saturate,
    "split": cmd_split,
    "descend": cmd_descend,
    "enumerate": cmd_enumerate,
    "example41": cmd_example41,
    "example42": cmd_example42,
    "verify42": cmd_verify42,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvlab", description="Dieudonné modules, Newton polygons and slope filtrations")
    parser.add_argument("--log-level", type=str, default=None, help="loguru level for stderr (default DVLAB_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="verb", parser_class=_Parser)

    def ring_opts(p, with_a=True):
        p.add_argument("--p", type=int, required=True, help="prime")
        if with_a:
            p.add_argument("--a", type=int, default=1, help="residue field degree")
        p.add_argument("--N", type=int, default=None, help="precision (default: auto)")

    def module_opts(p):
        p.add_argument("--input", type=str, default=None, help="module JSON file or inline JSON (default: stdin)")

    def slope_opts(p):
        p.add_argument("--s", type=int, default=None, help="common denominator s")
        p.add_argument("--r", type=int, nargs="+", default=None, help="numerators r_1 > ... > r_m")

    def parallel_opt(p):
        p.add_argument("--parallel", type=int, nargs="?", const=Config.MAX_WORKERS, default=None,
                       help="worker threads for enumerations and sweeps")

    ring_opts(sub.add_parser("ring", help="ring parameters of W_N(F_{p^a})"))

    gmn = sub.add_parser("gmn", help="module of G_{m,n}")
    gmn.add_argument("--m", type=int, required=True)
    gmn.add_argument("--n", type=int, required=True)
    ring_opts(gmn)

    module_opts(sub.add_parser("newton", help="Newton polygon"))
    module_opts(sub.add_parser("filtration", help="slope filtration"))
    for verb, text in (("csd-check", "complete slope divisibility"), ("saturate", "isogeny to a csd module"),
                       ("split", "isoclinic splitting"), ("descend", "model over a finite field")):
        p = sub.add_parser(verb, help=text)
        module_opts(p)
        slope_opts(p)

    enum = sub.add_parser("enumerate", help="isogenies to csd targets of a given log-degree")
    module_opts(enum)
    slope_opts(enum)
    enum.add_argument("--log-d", type=int, default=None)
    parallel_opt(enum)

    ex41 = sub.add_parser("example41", help="family over k[t] without slope filtration")
    ring_opts(ex41)
    ex41.add_argument("--t", type=int, nargs="+", default=None, help="one fiber (coordinates of t); default: all")
    ex41.add_argument("--phi-etale", action="store_true",
                      help="Φ-étale heights of the fibers for the smallest slope instead of the kernel orders")
    parallel_opt(ex41)

    ex42 = sub.add_parser("example42", help="glued group over the nodal curve")
    ring_opts(ex42, with_a=False)

    v42 = sub.add_parser("verify42", help="degree mismatch of all csd isogenies of the glued group")
    ring_opts(v42, with_a=False)
    v42.add_argument("--log-d-max", type=int, default=2)
    parallel_opt(v42)
    return parser


def run(argv: Optional[List[str]] = None, stdin: Optional[TextIO] = None, stdout: Optional[TextIO] = None) -> int:
    """Execute one verb; returns the exit code (0 ok, 1 mathematical failure, 2 usage)."""
    out = stdout if stdout is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.verb:
            raise UsageError("UsageError", "missing verb; choose one of " + ", ".join(COMMANDS))
        DvlabLogger(args.log_level)
        logger.debug(f"Arguments: {vars(args)}")
        result = COMMANDS[args.verb](args, stdin)
    except UsageError as exc:
        out.write(canonical_json({"error": exc.code, "detail": exc.detail}) + "\n")
        return USAGE_EXIT
    except SystemExit as exc:  # --help
        return 0 if not exc.code else USAGE_EXIT
    except DvlabError as exc:
        logger.error(f"{exc.code}: {exc.detail}")
        out.write(canonical_json(exc.to_dict()) + "\n")
        return exc.exit_code
    out.write(canonical_json(result) + "\n")
    logger.success(f"{args.verb} done")
    return 0


def main():
    sys.exit(run(sys.argv[1:]))
