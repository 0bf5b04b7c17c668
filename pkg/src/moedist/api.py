"""High-level model constructors and queries on fitted models.

>>> fit = sammer("yn", "normal", 2, ["~1+x+xsq", "~1"], data=df)   # doctest: +SKIP
>>> coef(fit)["m1"]["mean"]                                        # doctest: +SKIP
{'(Intercept)': ..., 'x': ..., 'xsq': ...}

Formulas are positional: component ``m`` takes one formula per parameter
of its family, in the family's parameter order (``mean, scale`` for the
normal).  They can be given as a flat list over all components, as one
list per component, or as one ``{parameter: formula}`` dict per component.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .distributions import as_family
from .exceptions import DataError, SpecError
from .fileio import spec_to_json
from .formula import Deep, Intercept
from .mixture import (Component, Dataset, MixtureModel, MixtureSpec, assemble, make_mixture,
                      mixture_stats, posteriors)
from .train import History, TrainConfig, train


@dataclass(frozen=True)
class FittedModel:
    """A trained model, its training history and the spec it came from.

    Queries never modify the model; evaluating new data binds a view that
    shares the fitted parameters.
    """

    model: MixtureModel
    history: History
    spec_echo: dict

    @property
    def spec(self) -> MixtureSpec:
        return self.model.spec

    @property
    def response(self) -> str | None:
        return self.spec_echo.get("response")

    def coef(self) -> dict:
        return coef(self)

    def component_means(self, data=None) -> np.ndarray:
        return component_means(self, data)

    def get_pis(self, data=None, y=None) -> np.ndarray:
        return get_pis(self, data, y)

    def get_stats(self, data=None) -> dict:
        return get_stats(self, data)


def _split_formulas(families, formulas) -> list[list]:
    families = [as_family(f) for f in families]
    if isinstance(formulas, str):
        formulas = [formulas]
    formulas = list(formulas)
    nested = formulas and all(isinstance(f, (list, tuple, Mapping)) for f in formulas)
    out = []
    if nested:
        if len(formulas) != len(families):
            raise SpecError(f"got formulas for {len(formulas)} components, "
                            f"expected {len(families)}")
        for m, (fam, fs) in enumerate(zip(families, formulas), start=1):
            if isinstance(fs, Mapping):
                unknown = set(fs) - set(fam.param_names)
                if unknown:
                    raise SpecError(f"component {m} ({fam}): unknown parameters {sorted(unknown)}")
                fs = [fs[n] for n in fam.param_names if n in fs]
            if len(fs) != fam.n_params:
                raise SpecError(f"component {m} ({fam}) needs {fam.n_params} formulas "
                                f"{list(fam.param_names)}, got {len(fs)}")
            out.append(list(fs))
        return out
    need = sum(f.n_params for f in families)
    if len(formulas) != need:
        raise SpecError(f"got {len(formulas)} formulas, the components "
                        f"({', '.join(map(str, families))}) need {need}")
    pos = 0
    for fam in families:
        out.append(formulas[pos:pos + fam.n_params])
        pos += fam.n_params
    return out


def mixdistreg_spec(families, formulas, nr_comps=None, gating="~1", networks=None) -> MixtureSpec:
    """Model declaration behind :func:`mixdistreg`."""
    families = [as_family(f) for f in families]
    if nr_comps is not None and int(nr_comps) != len(families):
        raise SpecError(f"nr_comps={nr_comps} but {len(families)} families were given")
    per_comp = _split_formulas(families, formulas)
    comps = [Component(f, fs) for f, fs in zip(families, per_comp)]
    return MixtureSpec(comps, gating, networks or ())


def sammer_spec(family, nr_comps: int, formulas, gating="~1", networks=None) -> MixtureSpec:
    """``nr_comps`` components of one family sharing the same formulas."""
    if int(nr_comps) < 1:
        raise SpecError("nr_comps must be >= 1")
    fam = as_family(family)
    if isinstance(formulas, Mapping):
        formulas = [formulas]
    fs = _split_formulas([fam], formulas)[0]
    return mixdistreg_spec([fam] * int(nr_comps), [fs] * int(nr_comps),
                           gating=gating, networks=networks)


def inflareg_spec(family, inflation_values, formulas, gating="~1", networks=None) -> MixtureSpec:
    """Point masses at ``inflation_values`` followed by one ``family`` component."""
    values = [float(v) for v in inflation_values]
    if not all(np.isfinite(values)):
        raise SpecError("inflation values must be finite")
    if len(set(values)) != len(values):
        raise SpecError(f"duplicate inflation values {values}")
    fam = as_family(family)
    if isinstance(formulas, Mapping):
        formulas = [formulas]
    fs = _split_formulas([fam], formulas)[0]
    comps = make_mixture([fam], values)
    return mixdistreg_spec(comps, [[] for _ in values] + [fs], gating=gating, networks=networks)


def fit_spec(spec: MixtureSpec, data=None, y=None, train_config=None, n_init: int = 1,
             response: str | None = None) -> FittedModel:
    """Assemble and train ``spec``; with ``n_init > 1`` keep the best of several starts.

    Restart ``i`` uses initialization seed ``train_config.seed + i``; the
    validation split and batch order are the same for all restarts.  The
    winner has the lowest restored monitor loss.
    """
    if isinstance(y, str):
        response, y = y, None
    config = train_config if isinstance(train_config, TrainConfig) \
        else TrainConfig.from_json(train_config)
    dataset = Dataset.from_any(data, y, response)
    if dataset.response is None:
        raise DataError("no response given")
    if int(n_init) < 1:
        raise SpecError("n_init must be >= 1")
    best = None
    for i in range(int(n_init)):
        model = assemble(spec, dataset, seed=config.seed + i)
        model, history = train(model, config)
        score = history.val_loss[history.best_epoch - 1]
        if best is None or score < best[0]:
            best = (score, model, history, i)
    _, model, history, start = best
    history.metadata.update(n_init=int(n_init), chosen_start=start)
    echo = spec_to_json(spec)
    echo["train"] = config.to_json()
    if response is not None:
        echo["response"] = response
    return FittedModel(model, history, echo)


def mixdistreg(y, families, formulas, data=None, nr_comps=None, gating="~1", networks=None,
               train_config=None, n_init: int = 1) -> FittedModel:
    """Fit a mixture of (possibly different) families.

    Parameters
    ----------
    y : array or str
        Response values, or the name of the response column in ``data``.
    families : sequence
        One family per component (``"normal"``, ``Laplace()``, ...).
    formulas : sequence
        Positional formulas, see the module docstring.
    gating : str
        Formula of the gate predictors of components 2..M.
    networks : dict, optional
        ``{name: [LayerSpec, ...]}`` for deep terms.
    """
    spec = mixdistreg_spec(families, formulas, nr_comps, gating, networks)
    return fit_spec(spec, data, y, train_config, n_init)


def sammer(y, family, nr_comps: int, formulas, data=None, gating="~1", networks=None,
           train_config=None, n_init: int = 1) -> FittedModel:
    """Fit ``nr_comps`` components of the same family with identical formulas."""
    spec = sammer_spec(family, nr_comps, formulas, gating, networks)
    return fit_spec(spec, data, y, train_config, n_init)


def inflareg(y, family, inflation_values, formulas, data=None, gating="~1", networks=None,
             train_config=None, n_init: int = 1) -> FittedModel:
    """Fit ``family`` inflated by point masses at ``inflation_values``."""
    spec = inflareg_spec(family, inflation_values, formulas, gating, networks)
    return fit_spec(spec, data, y, train_config, n_init)


def zinreg(y, family, formulas, data=None, **kwargs) -> FittedModel:
    """Zero-inflated regression."""
    return inflareg(y, family, [0.0], formulas, data, **kwargs)


def oinreg(y, family, formulas, data=None, **kwargs) -> FittedModel:
    """One-inflated regression."""
    return inflareg(y, family, [1.0], formulas, data, **kwargs)


def zoinreg(y, family, formulas, data=None, **kwargs) -> FittedModel:
    """Zero-and-one-inflated regression."""
    return inflareg(y, family, [0.0, 1.0], formulas, data, **kwargs)


def _labeled(model: MixtureModel, predictor) -> dict:
    beta = model.coefficients(predictor)
    start = predictor.coef.start
    out = {}
    for t, sl in predictor.terms:
        vals = beta[sl.start - start:sl.stop - start]
        out[t.label()] = float(vals[0]) if isinstance(t, Intercept) or vals.size == 1 \
            else vals.copy()
    return out


def coef(fitted) -> dict:
    """Coefficients on the raw data scale, grouped by component and parameter.

    Returns ``{"m1": {"mean": {"(Intercept)": ..., "x": ...}, ...}, ...,
    "gate": {"reference": "m1", "m2": {...}, ...}}``.  Smooth terms map to
    their basis coefficient arrays; deep terms carry no coefficients and are
    left out.  Component 1's gate predictor is fixed at zero.
    """
    model = fitted.model if isinstance(fitted, FittedModel) else fitted
    out = {}
    for m, comp in enumerate(model.spec.components, start=1):
        out[f"m{m}"] = {name: _labeled(model, model.predictor(m, name)) for name in comp.names}
    gate = {"reference": "m1"}
    for p in model.predictors:
        if p.is_gate:
            gate[p.label.split(".", 1)[1]] = _labeled(model, p)
    out["gate"] = gate
    return out


def deep_terms(fitted) -> list[tuple[str, Deep]]:
    """``(predictor label, term)`` for every deep term of the fitted model."""
    model = fitted.model if isinstance(fitted, FittedModel) else fitted
    return [(p.label, t) for p, t, _, _ in model.networks()]


def _target(fitted, data):
    model = fitted.model if isinstance(fitted, FittedModel) else fitted
    if data is None:
        if model.design is None:
            raise DataError("model has no training data attached; pass data")
        return model, None
    return model, Dataset.from_any(data)


def component_means(fitted, data=None) -> np.ndarray:
    """``N x M`` matrix of component expected values."""
    model, ds = _target(fitted, data)
    return mixture_stats(model, ds)["component_means"]


def get_pis(fitted, data=None, y=None) -> np.ndarray:
    """``N x M`` posterior component probabilities.

    For new data the response is taken from ``y`` or from the response
    column recorded at fit time.
    """
    model, ds = _target(fitted, data)
    if ds is None:
        return posteriors(model)
    if y is None:
        name = fitted.response if isinstance(fitted, FittedModel) else None
        if name is None or name not in ds:
            raise DataError(f"missing response column {name!r}" if name
                            else "pass the response y for new data")
        y = ds[name]
    return posteriors(model, ds, y)


def get_stats(fitted, data=None) -> dict:
    """Per-row component parameters, gates, component means and mixture mean."""
    model, ds = _target(fitted, data)
    return mixture_stats(model, ds)
