"""Command line entry point.

Exit codes: 0 success, 2 a bound was inapplicable (results still written),
1 error.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import harness, io
from .errors import BoundInapplicableWarning
from .harness import ExperimentConfig


def _oracle(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    cfg.mdp = {"kind": "file", "path": args.mdp}
    inst = harness.build_instance(cfg)
    if inst.report is None:
        raise harness.ParameterError("the operator has no Lipschitz certificate, so no fixed point")
    text = io.format_report(harness.report_fields(inst.report, inst.op))
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)


def _run(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    inst = harness.build_instance(cfg)
    curve = harness.run_mse_experiment(cfg, inst)
    try:
        rate = harness.fit_rate(curve)
    except harness.FitError as exc:
        print(f"rate fit skipped: {exc}", file=sys.stderr)
        rate = None
    harness.write_outputs(curve, out, inst.op, rate)
    viol = curve.violations()
    print(f"wrote {out}/mse.csv; {len(curve.bound_results)} bounded checkpoints, "
          f"{len(viol)} violations")


def _sweep_b(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = harness.b_sweep(cfg)
    (out / "b_sweep.csv").write_text(harness.b_sweep_csv(rows))
    sys.stdout.write(harness.b_sweep_csv(rows))


def _coupling(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = harness.coupling_sweep(cfg, cfg.coupling_t, cfg.coupling_taus, cfg.n_replications)
    (out / "coupling.csv").write_text(harness.coupling_csv(res))
    sys.stdout.write(harness.coupling_csv(res))


def _chatter(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    out = Path(args.output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = io.format_report(harness.chatter_demo(cfg).fields())
    (out / "chatter.txt").write_text(text)
    sys.stdout.write(text)


def _gen_mdp(args) -> None:
    spec = json.loads(Path(args.spec).read_text())
    mdp = harness.make_mdp(dict(spec, kind=spec.get("kind", "random")))
    text = io.dumps_mdp(mdp)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.features_out:
        fm = harness.make_features(spec.get("features", {"kind": "one_hot"}), mdp)
        io.write_features(fm, args.features_out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linsarsa", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("oracle", help="solve for theta* and print the fixed-point report")
    s.add_argument("mdp")
    s.add_argument("config")
    s.add_argument("--out")
    s.set_defaults(func=_oracle)
    for name, func, text in [("run", _run, "replicated MSE experiment with bound check"),
                             ("sweep-b", _sweep_b, "fitted SARSA over block lengths"),
                             ("coupling", _coupling, "frozen-policy coupling diagnostic"),
                             ("chatter", _chatter, "epsilon-greedy oscillation demo")]:
        s = sub.add_parser(name, help=text)
        s.add_argument("config")
        s.add_argument("--output-dir")
        s.set_defaults(func=func)
    s = sub.add_parser("gen-mdp", help="write a random MDP from a JSON generator spec")
    s.add_argument("spec")
    s.add_argument("--out")
    s.add_argument("--features-out")
    s.set_defaults(func=_gen_mdp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoundInapplicableWarning)
        try:
            args.func(args)
        except Exception as exc:  # noqa: BLE001  report and exit 1
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 1
    inapplicable = [w for w in caught if issubclass(w.category, BoundInapplicableWarning)]
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return 2 if inapplicable else 0


if __name__ == "__main__":
    sys.exit(main())
