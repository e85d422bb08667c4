"""Command line: generate / validate / run / batch / replay."""
from __future__ import annotations

import argparse
import json
import sys

from .core import AnalysisConstants, min_colors, read_graph, write_graph
from .decomposition import GenParams, generate, read_decomposition, validate, write_decomposition
from .errors import ArtifactError, DomainError
from .pipeline import EXIT_AUDIT, EXIT_INPUT, EXIT_OK, RunConfig, replay, run_batch, run_pipeline


def _constants(args) -> AnalysisConstants:
    ov = {}
    if getattr(args, "constants", None):
        with open(args.constants) as fh:
            ov.update(json.load(fh))
    for item in getattr(args, "override", None) or []:
        name, _, val = item.partition("=")
        if not _:
            raise DomainError(f"override must look like name=value, got {item!r}")
        ov[name.strip()] = json.loads(val)
    base = AnalysisConstants() if getattr(args, "profile", "desk") == "analysis" else AnalysisConstants.desk()
    return base.with_overrides(**ov)


def _gen_params(args) -> GenParams:
    return GenParams(n=args.n, delta=args.delta, c=args.c, cliques_H=args.cliques_H, cliques_L=args.cliques_L,
                     seed=args.gen_seed if args.gen_seed is not None else args.seed,
                     cross_edges=args.cross_edges, fill_BH=args.fill_BH, fill_BL=args.fill_BL,
                     ext_H=args.ext_H, ext_L=args.ext_L, heavy_fraction=args.heavy_fraction)


def _add_constants(p):
    p.add_argument("--profile", choices=("desk", "analysis"), default="desk",
                   help="desk: documented small-Delta overrides; analysis: the asymptotic' constants")
    p.add_argument("--constants", help="JSON file of constant overrides")
    p.add_argument("--override", action="append", metavar="NAME=VALUE", help="single constant override")


def _add_gen(p, required=False):
    p.add_argument("--n", type=int, required=required)
    p.add_argument("--delta", type=int, required=required)
    p.add_argument("--cliques-H", dest="cliques_H", type=int, default=0)
    p.add_argument("--cliques-L", dest="cliques_L", type=int, default=0)
    p.add_argument("--cross-edges", type=int, default=0)
    p.add_argument("--fill-BH", dest="fill_BH", type=int, default=0)
    p.add_argument("--fill-BL", dest="fill_BL", type=int, default=0)
    p.add_argument("--ext-H", dest="ext_H", type=int)
    p.add_argument("--ext-L", dest="ext_L", type=int)
    p.add_argument("--heavy-fraction", type=float, default=0.0, help="share of S given near-Delta degree")
    p.add_argument("--gen-seed", type=int, help="generator seed (default: --seed)")


def _add_input(p):
    p.add_argument("--graph")
    p.add_argument("--decomposition")
    _add_gen(p)
    p.add_argument("--c", type=int, help="number of colors (default Delta - k_Delta + 1)")
    p.add_argument("--seed", type=int, default=0)
    _add_constants(p)


def _config(args) -> RunConfig:
    k = _constants(args)
    common = dict(c=args.c, seed=args.seed, constants=k, audit=getattr(args, "audit", "strict"),
                  certificate=getattr(args, "certificate_check", False))
    if args.graph:
        return RunConfig(graph_path=args.graph, decomposition_path=args.decomposition, **common)
    if args.n is None or args.delta is None:
        raise DomainError("give --graph/--decomposition or generator flags --n and --delta")
    return RunConfig(gen=_gen_params(args), **common)


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_generate(args) -> int:
    k = _constants(args).effective()
    c = args.c or min_colors(args.delta)
    g, d = generate(_gen_params(args), k)
    write_graph(args.out_graph, g, c)
    write_decomposition(args.out_decomposition, d)
    print(json.dumps({"n": g.n, "m": g.m, "delta": g.delta, "c": c, "cliques": len(d.cliques)}))
    return EXIT_OK


def cmd_validate(args) -> int:
    g, c_file = read_graph(args.graph)
    d = read_decomposition(args.decomposition)
    c = args.c or c_file
    rep = validate(g, d, c, _constants(args).effective())
    _emit(rep.to_json(), args.out)
    return EXIT_OK if rep.passed else EXIT_INPUT


def cmd_run(args) -> int:
    cfg = _config(args)
    if args.validate_only:
        g, d, c = cfg.load()
        rep = validate(g, d, c, cfg.constants.effective())
        _emit(rep.to_json(), args.out)
        return EXIT_OK if rep.passed else EXIT_INPUT
    rep = run_pipeline(cfg)
    _emit(rep.to_json(indent=1), args.out)
    if args.out:
        print(json.dumps({"status": rep.status, "exit_code": rep.exit_code, "error": rep.error,
                          "wall_time": round(rep.wall_time, 3)}))
    return rep.exit_code


def cmd_batch(args) -> int:
    cfg = _config(args)
    cfg.batch, cfg.seed_stride = args.count, args.seed_stride
    cfg.keep_coloring = False
    b = run_batch(cfg, workers=args.workers)
    if args.out:
        _emit(b.to_json(), args.out)
    print(json.dumps(b.aggregate(), indent=1))
    return EXIT_OK


def cmd_replay(args) -> int:
    with open(args.report) as fh:
        report = json.load(fh)
    g, c_file = read_graph(args.graph)
    d = read_decomposition(args.decomposition)
    out = replay(report, g, d, report.get("c") or c_file)
    print(json.dumps(out))
    return EXIT_OK if out["valid"] else EXIT_AUDIT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("generate", help="write a planted-structure instance")
    _add_gen(p, required=True)
    p.add_argument("--c", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-graph", required=True)
    p.add_argument("--out-decomposition", required=True)
    _add_constants(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("validate", help="check a decomposition against its graph")
    p.add_argument("graph")
    p.add_argument("decomposition")
    p.add_argument("--c", type=int)
    p.add_argument("--out")
    _add_constants(p)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="color one instance")
    _add_input(p)
    p.add_argument("--audit", choices=("strict", "lenient"), default="strict")
    p.add_argument("--certificate-check", action="store_true")
    p.add_argument("--validate-only", action="store_true")
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("batch", help="run many seeds and aggregate")
    _add_input(p)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed-stride", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--audit", choices=("strict", "lenient"), default="strict")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_batch)

    p = sub.add_parser("replay", help="re-validate a stored report against its inputs")
    p.add_argument("report")
    p.add_argument("graph")
    p.add_argument("decomposition")
    p.set_defaults(fn=cmd_replay)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ArtifactError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
