"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 infeasible problem, 4 no
convergence.  Results go to stdout (or --out); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys

import numpy as np

from . import __version__
from .design import ExactDesign
from .errors import DomainError, InfeasibleError, NonConvergence, RankError, SingularError
from .evaluation import rows_to_csv, simulate_study, summarize
from .forlion import ForlionConfig, equivalence_check, forlion_optimize
from .liftone import DEFAULT_SEED, liftone_optimize
from .rounding import round_allocation
from .serialization import (STUDY_SCHEMA, SpecError, design_from_doc, design_to_doc, dumps, load_json,
                            parse_model, parse_spec, validate)

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE = 0, 2, 3, 4
TRACE_FIELDS = ("iter", "h", "m_t", "phi_star", "alpha_t")

log = logging.getLogger("aoptglm")


class UsageError(Exception):
    pass


def _seed(flag, doc_seed) -> int:
    if flag is not None:
        return flag
    if doc_seed is not None:
        return doc_seed
    env = os.environ.get("AOPT_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"AOPT_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _problem(path):
    return parse_spec(load_json(path))


def cmd_liftone(args) -> int:
    prob = _problem(args.spec)
    if prob.candidates is None:
        raise UsageError("liftone needs a 'candidates' list; use forlion for design spaces")
    seed = _seed(args.seed, prob.seed)
    init = prob.weights if prob.weights is not None else args.init
    res = liftone_optimize(prob.model, prob.candidates, init=init, epsilon=args.epsilon, seed=seed)
    doc = design_to_doc(res.design, h=res.h, certified=res.certified, iterations=res.iterations,
                        seed=seed, method=res.method, spec=prob.doc)
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_forlion(args) -> int:
    prob = _problem(args.spec)
    if prob.space is None:
        raise UsageError("forlion needs a 'space'; use liftone for a candidate list")
    seed = _seed(args.seed, prob.seed)
    cfg = ForlionConfig(delta=args.delta, epsilon=args.epsilon, multistart=args.multistart, seed=seed,
                        max_outer=args.max_outer, workers=args.threads or os.cpu_count() or 1)
    res = forlion_optimize(prob.model, prob.space, cfg)
    doc = design_to_doc(res.design, h=res.h, certified=res.certified, iterations=res.iterations,
                        seed=seed, method="forlion", phi_max=res.phi_max, trace_inverse=res.trace_inverse,
                        spec=prob.doc)
    _emit(dumps(doc), args.out)
    if args.trace:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=TRACE_FIELDS, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(res.trace)
        with open(args.trace, "w") as fh:
            fh.write(buf.getvalue())
    return EXIT_OK


def _design_and_spec(design_path, spec_path):
    doc = load_json(design_path)
    design = design_from_doc(doc)
    spec_doc = load_json(spec_path) if spec_path else doc.get("spec")
    if spec_doc is None:
        raise UsageError("design file has no embedded 'spec'; pass the spec file explicitly")
    return design, parse_spec(spec_doc)


def cmd_round(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be a positive integer, got {args.n}")
    design, prob = _design_and_spec(args.design, args.spec)
    if isinstance(design, ExactDesign):
        design = design.to_approximate()
    exact = round_allocation(prob.model, design, args.n)
    _emit(dumps(design_to_doc(exact, n=exact.n)), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    design, prob = _design_and_spec(args.design, args.spec)
    if isinstance(design, ExactDesign):
        design = design.to_approximate()
    if prob.space is not None:
        rep = equivalence_check(prob.model, design, space=prob.space, grid=args.grid, rtol=args.rtol)
    else:
        rep = equivalence_check(prob.model, design, candidates=prob.candidates, rtol=args.rtol)
    doc = {"max_phi": rep["max_phi"], "trace_inverse": rep["trace_inverse"], "slack": rep["slack"],
           "x_max": rep["x_max"].tolist(), "verdict": "optimal" if rep["ok"] else "not optimal"}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    doc = load_json(args.study)
    validate(doc, STUDY_SCHEMA)
    model = parse_model(doc["model"], doc["predictor"])
    points = np.array(doc["strata"]["points"], dtype=float)
    sizes = np.array(doc["strata"]["sizes"], dtype=int)
    if points.shape[0] != sizes.size:
        raise SpecError("need one size per stratum point", "/strata/sizes")
    n = doc["n"]
    samplers = {}
    for name, rule in doc["samplers"].items():
        if rule == "a_optimal":
            w = liftone_optimize(model, points, seed=DEFAULT_SEED).design
            rule = round_allocation(model, w, n).counts.tolist()
            log.info("a_optimal allocation for %s: %s", name, rule)
        elif isinstance(rule, list) and (len(rule) != sizes.size or sum(rule) != n):
            raise SpecError(f"allocation must have {sizes.size} entries summing to n = {n}", f"/samplers/{name}")
        samplers[name] = rule
    reps = args.reps if args.reps is not None else doc.get("reps", 100)
    seed = _seed(args.seed, doc.get("seed"))
    rows = simulate_study(model, points, sizes, n, samplers, reps=reps, seed=seed)
    _emit(rows_to_csv(rows), args.out)
    for name, s in summarize(rows).items():
        log.info("%s: rmse_rest %.4f  ce %.4f  failed %d", name, s["rmse_rest_mean"], s["ce_mean"], s["n_failed"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aoptglm", description="A-optimal designs for generalized linear models.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("liftone", help="optimal weights on a finite candidate set")
    p.add_argument("spec")
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--init", choices=["uniform", "random"], default="uniform")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_liftone)

    p = sub.add_parser("forlion", help="optimal design on a continuous or mixed design space")
    p.add_argument("spec")
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--multistart", type=int, default=5)
    p.add_argument("--max-outer", type=int, default=500)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="workers for the new-point search (default: CPU count)")
    p.add_argument("--trace", help="write the per-iteration trace CSV here")
    p.add_argument("--out")
    p.set_defaults(func=cmd_forlion)

    p = sub.add_parser("round", help="round a design to an exact allocation of n units")
    p.add_argument("design")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--spec", help="spec file (default: the one embedded in the design)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_round)

    p = sub.add_parser("verify", help="check the equivalence-theorem inequality for a design")
    p.add_argument("design")
    p.add_argument("spec", nargs="?")
    p.add_argument("--grid", type=int, default=21, help="lattice points per continuous axis")
    p.add_argument("--rtol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="stratified-sampling study")
    p.add_argument("study")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return args.func(args)
    except (InfeasibleError, SingularError, RankError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergence as exc:
        print(f"no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (SpecError, UsageError, DomainError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        log.removeHandler(handler)


if __name__ == "__main__":
    sys.exit(main())
