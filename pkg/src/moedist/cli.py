"""Command-line interface: ``moedist {fit,predict,posteriors,stats,plot-data,simulate}``.

Exit codes: 0 success, 2 invalid spec or arguments, 3 data errors,
4 non-finite training loss, 5 model file version mismatch.  Every failure
prints a single line starting with ``error:`` to stderr.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from .api import FittedModel, fit_spec, get_pis
from .exceptions import (DataError, DegenerateRowError, DimensionError, FormulaParseError,
                         MoeDistError, NonFiniteLossError, SpecError, SupportError, VersionError)
from .fileio import (load_json, model_from_json, model_to_json, read_csv, read_spec_file,
                     save_json, write_csv)
from .mixture import Dataset, mixture_stats
from .simulate import SCENARIOS, simulate

EXIT_SPEC, EXIT_DATA, EXIT_NONFINITE, EXIT_VERSION = 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # keep the single-line "error:" contract for usage errors too
        self.exit(EXIT_SPEC, f"error: {message}\n")


def _load_fitted(path) -> FittedModel:
    model, history, echo = model_from_json(load_json(path))
    return FittedModel(model, history, echo)


def _stats_for(fitted, path):
    data = Dataset.from_any(read_csv(path))
    return data, mixture_stats(fitted.model, data)


def cmd_fit(args) -> int:
    spec, config, response, raw = read_spec_file(args.spec)
    if response is None:
        raise SpecError("spec field response: required to name the response column")
    if args.seed is not None:
        config = type(config).from_json({**config.to_json(), "seed": args.seed})
    cols = read_csv(args.data)
    if response not in cols:
        raise DataError(f"missing response column {response!r}")
    fitted = fit_spec(spec, cols, train_config=config, response=response)
    save_json(model_to_json(fitted.model, fitted.history, fitted.spec_echo), args.out)
    h = fitted.history
    print(f"train_loss={h.train_loss[h.best_epoch - 1]!r} val_loss={h.val_loss[h.best_epoch - 1]!r} "
          f"best_epoch={h.best_epoch} stopped_epoch={h.stopped_epoch}")
    return 0


def _param_columns(model, stats) -> dict:
    out = {}
    comps = model.spec.components
    width = max((c.family.n_params for c in comps), default=0)
    for k in range(width):
        for m, c in enumerate(comps):
            if k < c.family.n_params:
                out[f"{c.names[k]}_{m + 1}"] = stats["params"][m][:, k]
    return out


def cmd_predict(args) -> int:
    fitted = _load_fitted(args.model)
    _, stats = _stats_for(fitted, args.data)
    cols = _param_columns(fitted.model, stats)
    cols["mixture_mean"] = stats["mixture_mean"]
    write_csv(args.out, cols)
    return 0


def cmd_posteriors(args) -> int:
    fitted = _load_fitted(args.model)
    pis = get_pis(fitted, read_csv(args.data))
    write_csv(args.out, {f"pi_{m + 1}": pis[:, m] for m in range(pis.shape[1])})
    return 0


def cmd_stats(args) -> int:
    fitted = _load_fitted(args.model)
    _, stats = _stats_for(fitted, args.data)
    comps = fitted.model.spec.components
    names = []
    for c in comps:
        names.extend(n for n in c.names if n not in names)
    rows = {"component": [], "family": [], "weight": [], "expected_value": []}
    rows.update({n: [] for n in names})
    for m, c in enumerate(comps):
        rows["component"].append(m + 1)
        rows["family"].append(str(c.family))
        rows["weight"].append(float(stats["pi"][:, m].mean()))
        rows["expected_value"].append(float(stats["component_means"][:, m].mean()))
        for n in names:
            rows[n].append(float(stats["params"][m][:, c.names.index(n)].mean())
                           if n in c.names else "")
    write_csv(args.out, rows)
    return 0


def cmd_plotdata(args) -> int:
    fitted = _load_fitted(args.model)
    data, stats = _stats_for(fitted, args.data)
    cols = {v: data[v] for v in fitted.model.spec.variables}
    comps = fitted.model.spec.components
    for m in range(len(comps)):
        cols[f"mean_{m + 1}"] = stats["component_means"][:, m]
    if args.bands:
        for m, c in enumerate(comps):
            if c.family.has_scale:
                mean = stats["component_means"][:, m]
                scale = stats["params"][m][:, c.names.index("scale")]
                cols[f"lo_{m + 1}"] = mean - 2.0 * scale
                cols[f"hi_{m + 1}"] = mean + 2.0 * scale
    write_csv(args.out, cols)
    return 0


def cmd_simulate(args) -> int:
    cols = simulate(args.scenario, args.n, args.seed)
    cols["true_class"] = cols["true_class"].astype(np.int64)
    write_csv(args.out, cols)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="moedist", description="Mixture-of-experts distributional regression.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a model spec to a CSV file")
    f.add_argument("--data", required=True)
    f.add_argument("--spec", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--seed", type=int)
    f.set_defaults(func=cmd_fit)

    for name, func, help_ in (("predict", cmd_predict, "component parameters and mixture mean"),
                              ("posteriors", cmd_posteriors, "posterior component probabilities"),
                              ("stats", cmd_stats, "per-component summaries")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--model", required=True)
        c.add_argument("--data", required=True)
        c.add_argument("--out", required=True)
        c.set_defaults(func=func)

    pd = sub.add_parser("plot-data", help="fitted means (and +-2 sd bands) for plotting")
    pd.add_argument("--model", required=True)
    pd.add_argument("--data", required=True)
    pd.add_argument("--out", required=True)
    pd.add_argument("--bands", action="store_true")
    pd.set_defaults(func=cmd_plotdata)

    s = sub.add_parser("simulate", help="simulate a two-class example data set")
    s.add_argument("--scenario", required=True, choices=SCENARIOS)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return p


def _exit_code(exc) -> int:
    if isinstance(exc, VersionError):
        return EXIT_VERSION
    if isinstance(exc, NonFiniteLossError):
        return EXIT_NONFINITE
    if isinstance(exc, (SpecError, FormulaParseError)):
        return EXIT_SPEC
    if isinstance(exc, (DataError, SupportError, DimensionError, DegenerateRowError)):
        return EXIT_DATA
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MoeDistError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}".replace("\n", " "), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
