"""Command line entry point: ``mathabs <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import miner
from .agent import Scorer, SearchConfig, beam_search
from .domains import DOMAIN_CONFIGS, get_domain
from .executor import ActionSpace, expand_solution, replay
from .expr import parse
from .harness import (
    RunConfig, evaluate, heldout_problems, load_checkpoint, run_training, transfer_eval,
)
from .library import KINDS, Library
from .trace import read_traces, write_traces

log = logging.getLogger("mathabs")


def _search_args(p: argparse.ArgumentParser, depth: int = 30) -> None:
    p.add_argument("--beam-width", type=int, default=4)
    p.add_argument("--max-depth", type=int, default=depth)
    p.add_argument("--max-expansions", type=int, default=10_000)


def _search_cfg(args) -> SearchConfig:
    return SearchConfig(args.beam_width, args.max_depth, args.max_expansions)


def _load_agent(args) -> tuple[Scorer, Library, str | None]:
    scorer, lib, dom = load_checkpoint(args.checkpoint)
    if getattr(args, "library", None):
        lib = Library.load(args.library)
    return scorer, lib, dom


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    if args.out:
        cfg.out_dir = args.out
    if cfg.out_dir is None:
        raise SystemExit("train: set out_dir in the config or pass --out")
    result = run_training(cfg, progress=True)
    sys.stdout.write(result.report.csv_text())
    return 0


def cmd_solve(args) -> int:
    domain = get_domain(args.domain)
    library = Library.load(args.library) if args.library else Library()
    scorer = Scorer.load(args.checkpoint) if args.checkpoint else Scorer()
    space = ActionSpace(domain, library)
    rec = beam_search(parse(args.problem), scorer, _search_cfg(args), space)
    if not rec.solved:
        print(f"unsolved after {rec.expansions} expansions")
        return 1
    print("\n".join(rec.trace.lines()))
    if args.out:
        write_traces(args.out, [rec.trace], domain=args.domain)
    return 0


def cmd_abstract(args) -> int:
    traces = read_traces(args.traces)
    domain = get_domain(args.domain)
    base = Library.load(args.library) if args.library else Library()
    space = ActionSpace(domain, base)
    rnd = args.round
    while any(i.startswith(f"r{rnd}.") for i in base.ids):
        rnd += 1
    result, abstracted = miner.mine(traces, space.names, args.kind, args.max_len, round=rnd)
    out = base.copy()
    out.extend(result.abstractions)
    out.save(args.out)
    for line in miner.describe(out.subset(a.id for a in result.abstractions)):
        print(line)
    if args.dataset_out:
        write_traces(args.dataset_out, abstracted, kind=args.kind)
    return 0


def cmd_eval(args) -> int:
    scorer, library, _ = _load_agent(args)
    domain = get_domain(args.domain)
    res = evaluate(scorer, library, domain, heldout_problems(domain, args.n, args.seed),
                   _search_cfg(args))
    line = f"{res.success_rate:.6f},{res.mean_len:.6f},{args.seed}"
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("success_rate,mean_len,seed\n" + line + "\n")
    print(f"success_rate={res.success_rate:.4f} mean_len={res.mean_len:.3f} n={args.n}")
    return 0


def cmd_expand(args) -> int:
    traces = read_traces(args.trace)
    domain = get_domain(args.domain)
    library = Library.load(args.library) if args.library else None
    out = []
    for t in traces:
        if library is not None:
            replay(ActionSpace(domain, library), t)
        out.append(expand_solution(t, domain))
    if args.out:
        write_traces(args.out, out)
    else:
        for t in out:
            print(json.dumps(t.to_json()))
    return 0


def cmd_transfer(args) -> int:
    scorer, library, _ = _load_agent(args)
    src, tgt = transfer_eval(scorer, library, get_domain(args.source), get_domain(args.target),
                             args.n, args.seed, _search_cfg(args))
    print("domain,success_rate,mean_len,mean_expanded_len")
    for name, r in ((args.source, src), (args.target, tgt)):
        print(f"{name},{r.success_rate:.6f},{r.mean_len:.6f},{r.mean_expanded_len:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mathabs", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    domains = sorted(DOMAIN_CONFIGS)

    p = sub.add_parser("train", help="run the bootstrap loop from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (overrides out_dir)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("solve", help="beam search one problem")
    p.add_argument("--domain", required=True, choices=domains)
    p.add_argument("--problem", required=True)
    p.add_argument("--library")
    p.add_argument("--checkpoint")
    p.add_argument("--out", help="write the trace as JSONL")
    _search_args(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("abstract", help="mine abstractions from a trace file")
    p.add_argument("--traces", required=True)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--domain", default="equations", choices=domains)
    p.add_argument("--library", help="existing library the traces may use")
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--round", type=int, default=1)
    p.add_argument("--dataset-out", help="write the abstracted traces as JSONL")
    p.set_defaults(fn=cmd_abstract)

    p = sub.add_parser("eval", help="success rate on a seeded held-out set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--library")
    p.add_argument("--domain", required=True, choices=domains)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv")
    _search_args(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("expand", help="rewrite abstract traces as axiom traces")
    p.add_argument("--trace", required=True)
    p.add_argument("--domain", default="equations", choices=domains)
    p.add_argument("--library", help="also validate abstract steps against this library")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("transfer", help="evaluate one frozen agent on two domains")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--library")
    p.add_argument("--from", dest="source", required=True, choices=domains)
    p.add_argument("--to", dest="target", required=True, choices=domains)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _search_args(p)
    p.set_defaults(fn=cmd_transfer)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"mathabs {args.verb}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
