"""Command-line entry point: mine, train, predict, eval, pareto, theory, weights."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

from . import __version__
from .errors import ConfigError, DataError, HybridRulesError

log = logging.getLogger("hybridrules")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _beta(text: str):
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--beta takes 'auto' or a number") from None


def _limit(text: str):
    return None if text in ("none", "0") else float(text)


def _mem(text: str):
    """Bytes, with optional K/M/G suffix; 'none' disables the cap."""
    if text == "none":
        return None
    units = {"K": 1024, "M": 1024 ** 2, "G": 1024 ** 3}
    t = text.strip().upper()
    mult = units.get(t[-1:], 1)
    return int(float(t[:-1] if t[-1:] in units else t) * mult)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(ConfigError.exit_code, f"{self.prog}: error: {message}\n")


def _data_args(p):
    p.add_argument("--data", help="raw CSV with a header row")
    p.add_argument("--schema", help="schema JSON declaring column types and the label")
    p.add_argument("--workdir", help="directory written by 'mine' (train/valid/test CSVs, pool)")
    p.add_argument("--q", type=int, default=4, help="quantile count for numeric columns")
    p.add_argument("--fractions", type=_floats, default=[0.6, 0.2, 0.2])
    p.add_argument("--mine-min-support", type=float, default=0.01)
    p.add_argument("--top-k", type=int, default=300)
    p.add_argument("--max-card", type=int, default=2, choices=(1, 2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")


def _search_args(p):
    p.add_argument("--mode", default="pre", choices=("corels", "post", "pre", "pre-nocollab"))
    p.add_argument("--min-coverage", type=_floats, default=[0.0],
                   help="transparency floor(s), comma-separated")
    p.add_argument("--lambda", dest="lam", type=_floats, default=[0.01], help="sparsity weight(s)")
    p.add_argument("--beta", type=_beta, default="auto")
    p.add_argument("--alpha", type=float, default=1.0, help="specialization coefficient")
    p.add_argument("--policy", default="lower-bound",
                   help="bfs, objective or lower-bound; comma-separated for a grid")
    p.add_argument("--min-support", type=_floats, default=[0.0],
                   help="minimum newly-captured fraction per rule during search")
    p.add_argument("--max-length", type=int, default=10)
    p.add_argument("--time-limit", type=_limit, default=3600.0, help="seconds per cell ('none' = no cap)")
    p.add_argument("--mem-limit", type=_mem, default="8G", help="bytes per cell, K/M/G suffix allowed")
    p.add_argument("--bb-preds", help="black-box predictions on the training split")
    p.add_argument("--bb-preds-valid")
    p.add_argument("--bb-preds-test")
    p.add_argument("--l2", type=_floats, default=[1e-3], help="built-in learner l2 grid")
    p.add_argument("--epochs", type=int, default=1500)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hybridrules", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mine", parents=[common], help="binarize, split and mine the antecedent pool")
    _data_args(p)

    for name, helptext in (("train", "search and keep the best validation model per transparency floor"),
                           ("pareto", "grid sweep with a validation Pareto front")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        _data_args(p)
        _search_args(p)
        p.add_argument("--config", help="RunConfig JSON (overrides the flags)")

    for name in ("predict", "eval"):
        p = sub.add_parser(name, parents=[common], help=f"{name} with a saved model")
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True, help="binary CSV from 'mine', or raw CSV with --schema")
        p.add_argument("--schema")
        p.add_argument("--bb-preds", help="black-box predictions aligned with --data")
        p.add_argument("--out", help="output file (default: stdout)")

    p = sub.add_parser("weights", parents=[common], help="export specialization weights for an external black box")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="binary CSV (normally the training split)")
    p.add_argument("--schema")
    p.add_argument("--alpha", type=float, help="defaults to the model's alpha")
    p.add_argument("--out", required=True)

    p = sub.add_parser("theory", parents=[common], help="normalized-AUC sweep of the generalisation bound")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--log-hs", type=float, help="natural log of the interpretable space size")
    g.add_argument("--depth", type=int, default=3, help="tree depth for the interpretable space")
    p.add_argument("--n-features", type=int, default=200)
    p.add_argument("--ratio", type=float, default=100.0, help="black-box to interpretable size ratio")
    p.add_argument("--m", type=int, default=5000, help="sample count")
    p.add_argument("--points", type=int, default=4096, help="quadrature points")
    p.add_argument("--quadrature", choices=("simpson", "trapezoid"), default="simpson")
    p.add_argument("--grid", type=_floats, help="transparency grid (default 0.015..0.995 step 0.005)")
    p.add_argument("--out", default="theory")
    p.add_argument("--plot", action="store_true", help="also write a PNG (needs matplotlib)")
    return ap


def _run_config(args, subcommand):
    from .harness import RunConfig

    if getattr(args, "config", None):
        with open(args.config) as fh:
            return RunConfig.from_json(fh.read())
    kw = dict(subcommand=subcommand, data=args.data, schema=args.schema, workdir=args.workdir,
              q=args.q, fractions=args.fractions, mine_min_support=args.mine_min_support,
              top_k=args.top_k, max_card=args.max_card, seed=args.seed, out=args.out)
    if subcommand != "mine":
        kw.update(mode=args.mode, lambdas=args.lam, psis=args.min_coverage,
                  policies=[s.strip() for s in args.policy.split(",")], min_supports=args.min_support,
                  alpha=args.alpha, beta=args.beta, max_length=args.max_length,
                  time_limit=args.time_limit, mem_limit=args.mem_limit, bb_preds=args.bb_preds,
                  bb_preds_valid=args.bb_preds_valid, bb_preds_test=args.bb_preds_test,
                  l2_grid=args.l2, epochs=args.epochs, jobs=args.jobs)
    return RunConfig(**kw)


def _load_data(path, schema, model):
    from .data import apply_binarization, load_raw, read_binary_csv

    if schema is None:
        return read_binary_csv(path)
    binz = model.metadata.get("binarization")
    if not binz:
        raise ConfigError("model carries no binarization; pass a binary CSV instead")
    return apply_binarization(load_raw(path, schema), {"binarization": binz})


def _bb(args, data):
    from .blackbox import load_predictions

    return None if args.bb_preds is None else load_predictions(args.bb_preds, data.n)


def _emit(text: str, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_mine(args):
    from .harness import mine

    ctx = mine(_run_config(args, "mine"))
    print(json.dumps({"pool_size": len(ctx.pool), "features": ctx.train.n_features,
                      "train": ctx.train.n, "valid": ctx.valid.n, "test": ctx.test.n,
                      "out": args.out}))


def cmd_train(args):
    from .harness import cmd_train as run

    res = run(_run_config(args, "train"))
    rows = [r for r in res["records"] if r.selected]
    for r in rows:
        print(json.dumps({"psi": r.psi, "lambda": r.lam, "status": r.status, "objective": r.objective,
                          "length": r.length, "train_transparency": r.train_transparency,
                          "valid_accuracy": r.valid_accuracy, "test_accuracy": r.test_accuracy,
                          "model": res["models"][r.psi]}))


def cmd_pareto(args):
    from .harness import cmd_pareto as run

    res = run(_run_config(args, "pareto"))
    print(json.dumps(res["summary"], sort_keys=True))


def cmd_predict(args):
    from .blackbox import HybridModel, predict_all

    model = HybridModel.load(args.model)
    data = _load_data(args.data, args.schema, model)
    labels, routed = predict_all(model, data, _bb(args, data))
    lines = ["index,label,routed_to\n"]
    lines += [f"{i},{int(l)},{'interpretable' if r else 'blackbox'}\n"
              for i, (l, r) in enumerate(zip(labels, routed))]
    _emit("".join(lines), args.out)


def cmd_eval(args):
    from .blackbox import HybridModel, evaluate

    model = HybridModel.load(args.model)
    data = _load_data(args.data, args.schema, model)
    metrics = evaluate(model, data, _bb(args, data))
    _emit(json.dumps(metrics, sort_keys=True) + "\n", args.out)


def cmd_weights(args):
    from .bits import from_mask
    from .blackbox import HybridModel, specialization_weights, write_weights

    model = HybridModel.load(args.model)
    data = _load_data(args.data, args.schema, model)
    alpha = args.alpha if args.alpha is not None else model.alpha
    if alpha is None:
        raise ConfigError("model has no alpha; pass --alpha")
    cap = from_mask(model.prefix_for(data).captured, data.n)
    write_weights(args.out, specialization_weights(cap, alpha))
    print(json.dumps({"alpha": alpha, "captured": int(cap.sum()), "n": data.n, "out": args.out}))


def cmd_theory(args):
    from .theory import BoundParams, sweet_spot_sweep, tree_space_size

    log_hs = args.log_hs if args.log_hs is not None else tree_space_size(args.depth, args.n_features)
    if args.ratio < 1:
        raise ConfigError("--ratio must be >= 1")
    params = BoundParams(log_hs + math.log(args.ratio), log_hs, args.m)
    sweep = sweet_spot_sweep(params, args.grid, args.points, args.quadrature)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "auc.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["C_Omega", "normalized_auc"])
        for c, v in zip(sweep.grid, sweep.auc):
            w.writerow([repr(float(c)), repr(float(v))])
    summary = {**sweep.summary(), "log_hs": log_hs, "log_hc": params.log_hc, "m": args.m,
               "ratio": args.ratio}
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=1, sort_keys=True)
    if args.plot:
        try:
            import matplotlib
        except ImportError:
            raise ConfigError("--plot needs matplotlib") from None
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(sweep.grid, sweep.auc, ".-", ms=3)
        ax.axvline(sweep.best_transparency, color="k", lw=0.6, ls="--")
        ax.set_xlabel("transparency")
        ax.set_ylabel("normalized AUC")
        ax.set_yscale("log")
        fig.tight_layout()
        fig.savefig(os.path.join(args.out, "auc.png"), dpi=120)
    print(json.dumps(summary, sort_keys=True))


COMMANDS = {"mine": cmd_mine, "train": cmd_train, "pareto": cmd_pareto, "predict": cmd_predict,
            "eval": cmd_eval, "weights": cmd_weights, "theory": cmd_theory}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except HybridRulesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
