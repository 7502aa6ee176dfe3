"""Command-line interface: ``rve fit | sensitivity | forest | sim``.

Results go to standard output (or ``--out``); diagnostics go to standard
error. The exit code is 0 exactly when no error occurred.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .data import parse_csv, SchemaHints
from .errors import RveError
from .forest import build_forest_layout, render_forest_svg
from .formula import parse_formula
from .inference import ModelSpec, fit_model, sensitivity
from .report import format_fit_report, format_sensitivity
from .simlab import parse_sim_config, run_experiment

_MODEL_TAGS = {"corr": "CORR", "hier": "HIER", "user": "USER"}


def _add_model_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="CSV file of effect sizes")
    parser.add_argument("--formula", required=True, help="model formula, e.g. 'es ~ 1'")
    parser.add_argument("--study", required=True, help="study (cluster) id column")
    parser.add_argument("--var", required=True, help="sampling variance column")
    parser.add_argument(
        "--model", choices=("corr", "hier", "user"), default="corr",
        help="weighting model (default: corr)",
    )
    parser.add_argument(
        "--rho", type=float, default=0.8,
        help="within-study correlation for the correlated model (default: 0.8)",
    )
    parser.add_argument(
        "--small", action=argparse.BooleanOptionalAction, default=True,
        help="small-sample corrections (default: on)",
    )
    parser.add_argument("--userweights", help="user weight column (model=user)")
    parser.add_argument("--alpha", type=float, default=0.05, help="1 - CI level")
    parser.add_argument("--out", help="write output to this file instead of stdout")


def _load(args) -> tuple:
    formula = parse_formula(args.formula)
    hints = SchemaHints(
        study_col=args.study,
        effect_col=formula.response,
        var_col=args.var,
        weight_col=args.userweights,
    )
    with open(args.data, encoding="utf-8") as fh:
        dataset = parse_csv(fh, hints)
    spec = ModelSpec(
        formula=formula,
        model=_MODEL_TAGS[args.model],
        rho=args.rho,
        small=args.small,
        alpha=args.alpha,
    )
    return dataset, spec


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_fit(args) -> int:
    dataset, spec = _load(args)
    result = fit_model(dataset, spec)
    _emit(format_fit_report(result), args.out)
    return 0


def _cmd_sensitivity(args) -> int:
    dataset, spec = _load(args)
    table = sensitivity(dataset, spec)
    _emit(format_sensitivity(table), args.out)
    return 0


def _parse_extra_col(text: str) -> tuple[str, str]:
    title, sep, column = text.partition("=")
    if not sep or not title or not column:
        raise argparse.ArgumentTypeError(
            f"expected TITLE=COLUMN, got {text!r}"
        )
    return title, column


def _cmd_forest(args) -> int:
    dataset, spec = _load(args)
    result = fit_model(dataset, spec)
    layout = build_forest_layout(
        dataset,
        result,
        study_lab=args.study_lab,
        es_lab=args.es_lab,
        extra_cols=tuple(args.col or ()),
    )
    svg = render_forest_svg(layout)
    Path(args.out).write_text(svg, encoding="utf-8")
    return 0


def _cmd_sim(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        config = parse_sim_config(fh.read())
    report = run_experiment(config)
    _emit(report.to_csv(), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rve",
        description="Meta-regression with robust variance estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a model and print the report")
    _add_model_args(p_fit)
    p_fit.set_defaults(func=_cmd_fit)

    p_sens = sub.add_parser(
        "sensitivity", help="tabulate estimates and tau^2 across rho"
    )
    _add_model_args(p_sens)
    p_sens.set_defaults(func=_cmd_sensitivity)

    p_forest = sub.add_parser("forest", help="render a forest plot SVG")
    _add_model_args(p_forest)
    p_forest.add_argument(
        "--study-lab", required=True, help="column with study display labels"
    )
    p_forest.add_argument(
        "--es-lab", required=True, help="column with effect-size display labels"
    )
    p_forest.add_argument(
        "--col", action="append", type=_parse_extra_col, metavar="TITLE=COLUMN",
        help="extra display column (repeatable)",
    )
    p_forest.set_defaults(func=_cmd_forest)

    p_sim = sub.add_parser("sim", help="run a Monte Carlo experiment")
    p_sim.add_argument("--config", required=True, help="flat key=value config file")
    p_sim.add_argument("--out", help="write the report CSV to this file")
    p_sim.set_defaults(func=_cmd_sim)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "forest" and not args.out:
        parser.error("forest requires --out for the SVG file")
    try:
        return args.func(args)
    except RveError as err:
        print(f"rve: error: {err}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as err:
        print(f"rve: error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
