"""Mixture-of-experts distributional regression models.

The density of ``y`` given features ``x`` is

    f(y | x) = sum_m pi_m(x) f_m(y | theta_m(x))

where every component parameter ``theta_{m,k}`` is a response transform of
its own additive predictor, and the gates ``pi_m`` are a softmax over
additive predictors with component 1 pinned to 0 (the reference).

All trainable quantities live in one flat vector ``model.theta``;
``model.index_map`` names its disjoint segments.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg

from . import distributions as dist
from .deepnet import LayerSpec, Network, init_network
from .distributions import Family, ResponseTransform, as_family
from .exceptions import DataError, DegenerateRowError, DimensionError, SpecError
from .formula import (Deep, Formula, Intercept, Lasso, Linear, Smooth, build_design,
                      difference_penalty, get_column, parse_formula, variable_ranges)


@dataclass(frozen=True)
class Component:
    """One mixture component: a family and one formula per parameter."""

    family: Family
    formulas: tuple = ()
    names: tuple = ()

    def __post_init__(self):
        family = as_family(self.family)
        object.__setattr__(self, "family", family)
        formulas = tuple(parse_formula(f) for f in self.formulas)
        object.__setattr__(self, "formulas", formulas)
        if len(formulas) != family.n_params:
            raise SpecError(f"component {family} needs {family.n_params} formulas "
                            f"({', '.join(family.param_names) or 'none'}), got {len(formulas)}")
        object.__setattr__(self, "names", tuple(self.names) or family.param_names)

    @property
    def transforms(self) -> list[ResponseTransform]:
        return dist.default_transforms(self.family)


@dataclass(frozen=True)
class MixtureSpec:
    """Full model declaration: components, gating formula and deep networks."""

    components: tuple
    gating: Formula = field(default_factory=lambda: parse_formula("~1"))
    networks: tuple = ()

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(*c) for c in self.components)
        if not comps:
            raise SpecError("a mixture needs at least one component")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "gating", parse_formula(self.gating))
        nets = self.networks.items() if isinstance(self.networks, Mapping) else self.networks
        nets = tuple(sorted((str(k), tuple(LayerSpec.from_json(l) for l in v)) for k, v in nets))
        object.__setattr__(self, "networks", nets)
        declared = dict(nets)
        for name, layers in nets:
            if not layers:
                raise SpecError(f"network {name!r} has no layers")
            if layers[-1].units != 1:
                raise SpecError(f"network {name!r} must end in a 1-unit head")
        for f in self.all_formulas():
            for t in f.deep_terms:
                if t.net not in declared:
                    raise SpecError(f"unknown network {t.net!r} in term {t.render()}")

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def families(self) -> list[Family]:
        return [c.family for c in self.components]

    @property
    def network_layers(self) -> dict:
        return dict(self.networks)

    def all_formulas(self) -> list[Formula]:
        out = [f for c in self.components for f in c.formulas]
        if self.n_components > 1:
            out.append(self.gating)
        return out

    @property
    def variables(self) -> list[str]:
        out = []
        for f in self.all_formulas():
            out.extend(v for v in f.variables if v not in out)
        return out


def make_mixture(families, point_locations=()) -> list[Family]:
    """Component list with point masses first, then the parametric families."""
    comps = [dist.PointMass(a) for a in point_locations]
    comps += [as_family(f) for f in families]
    if not comps:
        raise SpecError("empty mixture: give at least one family or point location")
    return comps


@dataclass
class Dataset:
    """Named feature columns of equal length plus an optional response."""

    columns: dict
    response: np.ndarray | None = None

    def __post_init__(self):
        cols = {}
        n = None
        for name, values in dict(self.columns).items():
            try:
                arr = np.asarray(values, dtype=float)
            except (TypeError, ValueError):
                raise DataError(f"column {name!r} is not numeric") from None
            if arr.ndim != 1:
                raise DataError(f"column {name!r} must be one-dimensional")
            if n is not None and len(arr) != n:
                raise DataError(f"column {name!r} has length {len(arr)}, expected {n}")
            n = len(arr)
            cols[name] = arr
        self.columns = cols
        if self.response is not None:
            y = np.asarray(self.response, dtype=float).reshape(-1)
            if n is not None and len(y) != n:
                raise DataError(f"response has length {len(y)}, expected {n}")
            if np.any(np.isnan(y)):
                raise DataError("response contains NaN")
            self.response = y
            n = len(y) if n is None else n
        self._n = 0 if n is None else n

    @property
    def n_rows(self) -> int:
        return self._n

    def __getitem__(self, name):
        return self.columns[name]

    def __contains__(self, name):
        return name in self.columns

    def keys(self):
        return self.columns.keys()

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset({k: v[rows] for k, v in self.columns.items()},
                       None if self.response is None else self.response[rows])

    @classmethod
    def from_any(cls, data=None, y=None, response: str | None = None) -> "Dataset":
        """Build from a mapping or DataFrame; ``y`` is an array or a column name."""
        if isinstance(data, Dataset) and y is None:
            return data
        if data is None:
            cols = {}
        elif isinstance(data, Dataset):
            cols = data.columns
        else:
            cols = {str(k): np.asarray(data[k]) for k in data.keys()}
        if isinstance(y, str):
            response, y = y, None
        if y is None and response is not None:
            if response not in cols:
                raise DataError(f"missing response column {response!r}")
            y = cols[response]
        if y is None and isinstance(data, Dataset):
            y = data.response
        return cls(cols, y)


@dataclass
class Predictor:
    """Layout of one additive predictor inside ``theta``."""

    label: str
    formula: Formula
    transform: ResponseTransform | None
    coef: slice
    terms: list
    nets: list = field(default_factory=list)
    # internal design = raw design @ basis; raw coefficients = basis @ internal
    basis: np.ndarray = None

    @property
    def is_gate(self) -> bool:
        return self.transform is None


@dataclass
class Design:
    """Design matrices of every predictor for one dataset."""

    n_rows: int
    y: np.ndarray | None
    X: list
    deep: list


def _term_width(term) -> int:
    return term.n_basis if isinstance(term, Smooth) else 1


def _net_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(seed) % (1 << 63), index]).generate_state(
        1, np.uint64)[0])


def column_moments(formulas, data) -> dict:
    """Training mean and covariance of every linear/lasso variable."""
    names = []
    for f in formulas:
        for t in f.terms:
            if isinstance(t, (Linear, Lasso)) and t.var not in names:
                names.append(t.var)
    if not names:
        return {"vars": [], "mean": [], "cov": []}
    Z = np.column_stack([get_column(data, v) for v in names])
    cov = np.atleast_2d(np.cov(Z, rowvar=False, bias=True))
    return {"vars": names, "mean": Z.mean(axis=0).tolist(), "cov": cov.tolist()}


def _whitener(second_moment):
    """Upper-triangular ``W`` with ``W.T @ S @ W = I``; diagonal fallback if singular."""
    S = np.asarray(second_moment, dtype=float)
    d = np.sqrt(np.diag(S))
    d[~(d > 0)] = 1.0
    try:
        L = linalg.cholesky(S, lower=True)
        if np.all(np.diag(L) > 1e-8 * d):
            return linalg.solve_triangular(L, np.eye(len(S)), lower=True).T
    except linalg.LinAlgError:
        pass
    return np.diag(1.0 / d)


def _basis(formula, terms, start, width, moments):
    A = np.eye(width)
    names = moments["vars"]
    lin = [(sl.start - start, names.index(t.var)) for t, sl in terms if isinstance(t, Linear)]
    las = [(sl.start - start, names.index(t.var)) for t, sl in terms if isinstance(t, Lasso)]
    icpt = [sl.start - start for t, sl in terms if isinstance(t, Intercept)]
    if not lin and not las:
        return A
    mean = np.asarray(moments["mean"], dtype=float)
    S = np.asarray(moments["cov"], dtype=float)
    if not icpt:
        S = S + np.outer(mean, mean)
    if lin:
        cols, vi = map(list, zip(*lin))
        A[np.ix_(cols, cols)] = _whitener(S[np.ix_(vi, vi)])
    for c, v in las:
        # lasso columns are only rescaled so the L1 penalty stays separable
        sd = np.sqrt(S[v, v])
        A[c, c] = 1.0 / sd if sd > 0 else 1.0
    if icpt:
        cols = [c for c, _ in lin + las]
        vi = [v for _, v in lin + las]
        A[icpt[0], cols] = -mean[vi] @ A[np.ix_(cols, cols)]
    return A


class MixtureModel:
    """A mixture specification laid out over a flat parameter vector.

    Linear columns enter the optimization whitened with the training
    moments (centered only when the predictor has an intercept) and lasso
    columns standardized; :meth:`coefficients` maps back to the raw scale.

    Parameters
    ----------
    spec : MixtureSpec
    ranges : dict
        ``{variable: (min, max)}`` knot ranges of smooth terms.
    moments : dict
        Output of :func:`column_moments` for the linear and lasso variables.
    seed : int
        Keys the random initialization (networks and location slopes).
    """

    def __init__(self, spec: MixtureSpec, ranges=None, moments=None, seed: int = 0):
        self.spec = spec
        self.ranges = {k: (float(v[0]), float(v[1])) for k, v in (ranges or {}).items()}
        self.moments = {k: list(v) for k, v in (moments or {"vars": [], "mean": [], "cov": []}).items()}
        self.seed = int(seed)
        self.predictors: list[Predictor] = []
        self.index_map: dict[str, slice] = {}
        pos = 0
        nets_to_build = []
        layers = spec.network_layers

        def add(label, formula, transform):
            nonlocal pos
            terms, start = [], pos
            for t in formula.terms:
                if isinstance(t, Deep):
                    continue
                w = _term_width(t)
                terms.append((t, slice(pos, pos + w)))
                pos += w
            coef = slice(start, pos)
            self.index_map[label] = coef
            for t, sl in terms:
                if isinstance(t, (Linear, Lasso)) and t.var not in self.moments["vars"]:
                    raise DataError(f"no column moments for variable {t.var!r}")
            basis = _basis(formula, terms, start, pos - start, self.moments)
            p = Predictor(label, formula, transform, coef, terms, [], basis)
            for t in formula.deep_terms:
                net = Network(layers[t.net], len(t.vars))
                sl = slice(pos, pos + net.n_params)
                pos += net.n_params
                self.index_map[f"{label}.{t.render()}"] = sl
                p.nets.append((t, net, sl))
                nets_to_build.append((t, net, sl))
            self.predictors.append(p)

        for m, comp in enumerate(spec.components, start=1):
            for name, formula, tr in zip(comp.names, comp.formulas, comp.transforms):
                add(f"m{m}.{name}", formula, tr)
        for m in range(2, spec.n_components + 1):
            add(f"gate.m{m}", spec.gating, None)

        self.theta = np.zeros(pos)
        for i, (t, net, sl) in enumerate(nets_to_build):
            fresh = init_network(net.layers, net.input_dim, _net_seed(self.seed, i))
            net.bind(self.theta[sl], copy=False)
            net.params[:] = fresh.params

        self._smooth_pen = []
        l1_idx, l1_w = [], []
        for p in self.predictors:
            for t, sl in p.terms:
                if isinstance(t, Smooth):
                    if t.var not in self.ranges:
                        raise DataError(f"no knot range for smooth variable {t.var!r}")
                    if t.lam > 0:
                        self._smooth_pen.append((sl, t.lam * difference_penalty(
                            t.n_basis, t.penalty_order)))
                elif isinstance(t, Lasso) and t.lam > 0:
                    # penalty acts on the raw-scale coefficient
                    l1_idx.append(sl.start)
                    c = sl.start - p.coef.start
                    l1_w.append(t.lam * p.basis[c, c])
        self._l1_idx = np.array(l1_idx, dtype=int)
        self._l1_w = np.array(l1_w, dtype=float)
        self.design: Design | None = None
        self.data: Dataset | None = None

    @property
    def n_components(self) -> int:
        return self.spec.n_components

    @property
    def families(self) -> list[Family]:
        return self.spec.families

    @property
    def n_params(self) -> int:
        return self.theta.size

    def segment(self, label: str) -> np.ndarray:
        """View of ``theta`` for the named segment."""
        return self.theta[self.index_map[label]]

    def networks(self):
        for p in self.predictors:
            for t, net, sl in p.nets:
                yield p, t, net, sl

    def set_theta(self, values) -> None:
        """Overwrite all parameters in place (network views stay valid)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.theta.shape:
            raise DimensionError(f"theta needs shape {self.theta.shape}, got {values.shape}")
        self.theta[:] = values

    def bind(self, data, y=None) -> "MixtureModel":
        """Model sharing this one's parameters, with designs built on ``data``."""
        data = Dataset.from_any(data, y)
        other = object.__new__(MixtureModel)
        other.__dict__.update(self.__dict__)
        X, deep = [], []
        for p in self.predictors:
            blocks, dins = build_design(p.formula, data, self.ranges)
            n = data.n_rows
            if blocks:
                X.append(np.hstack([b.matrix for b in blocks]) @ p.basis)
            else:
                X.append(np.zeros((n, 0)))
            deep.append([np.ascontiguousarray(d.matrix) for d in dins])
        if data.response is not None:
            for fam in self.families:
                if not fam.is_point_mass:
                    dist.check_support(fam, data.response)
        other.design = Design(data.n_rows, data.response, X, deep)
        other.data = data
        return other

    def initialize(self, y) -> None:
        """Data-driven starting values for the coefficients.

        Component ``m`` of ``M`` gets its location intercept at the
        ``m / (M + 1)`` quantile of ``y`` and uniform random slopes on its
        whitened linear columns; scale intercepts start at ``sd(y)``.
        Everything else (smooths, gates) starts at zero.
        """
        y = np.asarray(y, dtype=float)
        M = self.n_components
        rng = np.random.Generator(np.random.Philox(key=_net_seed(self.seed, 1 << 20)))
        sd_y = float(y.std()) or 1.0
        for p in self.predictors:
            self.theta[p.coef] = 0.0
        for m, comp in enumerate(self.spec.components, start=1):
            if comp.family.is_point_mass:
                continue
            loc = self.predictor(m, comp.names[0])
            spread = sd_y if loc.transform is ResponseTransform.IDENTITY else 1.0
            for t, sl in loc.terms:
                if isinstance(t, Intercept):
                    q = np.quantile(y, m / (M + 1))
                    self.theta[sl] = loc.transform.inverse(q)
                elif isinstance(t, (Linear, Lasso)):
                    self.theta[sl] = rng.uniform(-spread, spread, sl.stop - sl.start)
            if comp.family.has_scale:
                sc = self.predictor(m, "scale")
                for t, sl in sc.terms:
                    if isinstance(t, Intercept):
                        self.theta[sl] = sc.transform.inverse(sd_y)

    def coefficients(self, predictor: Predictor) -> np.ndarray:
        """Coefficients of ``predictor`` on the raw (untransformed) column scale."""
        return predictor.basis @ self.theta[predictor.coef]

    def set_coefficients(self, predictor: Predictor, beta) -> None:
        """Inverse of :meth:`coefficients`."""
        beta = np.asarray(beta, dtype=float)
        self.theta[predictor.coef] = np.linalg.solve(predictor.basis, beta)

    def predictor(self, component: int, param: str) -> Predictor:
        label = f"m{component}.{param}"
        for p in self.predictors:
            if p.label == label:
                return p
        raise KeyError(label)

    def penalty(self) -> float:
        """Smoothness plus L1 penalty at the current parameters."""
        total = 0.0
        for sl, P in self._smooth_pen:
            b = self.theta[sl]
            total += float(b @ P @ b)
        if self._l1_idx.size:
            total += float(self._l1_w @ np.abs(self.theta[self._l1_idx]))
        return total

    def copy(self) -> "MixtureModel":
        other = MixtureModel(self.spec, self.ranges, self.moments, self.seed)
        other.set_theta(self.theta)
        if self.data is not None:
            other = other.bind(self.data)
        return other


def assemble(spec: MixtureSpec, data, y=None, seed: int = 0) -> MixtureModel:
    """Build designs on ``data`` and initialize all parameters."""
    data = Dataset.from_any(data, y)
    if data.response is None:
        raise DataError("assemble() needs a response")
    ranges = variable_ranges(spec.all_formulas(), data)
    moments = column_moments(spec.all_formulas(), data)
    model = MixtureModel(spec, ranges, moments, seed)
    model.initialize(data.response)
    return model.bind(data)


def softmax_gate(gate_eta) -> np.ndarray:
    """Gate probabilities from the free logits of components 2..M.

    ``gate_eta`` has shape ``(N, M - 1)``; the reference logit 0 is prepended.
    """
    g = np.atleast_2d(np.asarray(gate_eta, dtype=float))
    return np.exp(log_softmax_gate(g))


def log_softmax_gate(gate_eta) -> np.ndarray:
    g = np.asarray(gate_eta, dtype=float)
    logits = np.concatenate([np.zeros((g.shape[0], 1)), g], axis=1)
    mx = logits.max(axis=1, keepdims=True)
    shifted = logits - mx
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def mixture_logpdf(log_pi, log_dens) -> np.ndarray:
    """Row-wise ``log sum_m exp(log_pi + log_dens)`` with max subtraction.

    Entries of ``-inf`` (zero weight or a missed point mass) drop out; a row
    is ``-inf`` only when every component has zero likelihood.
    """
    a = np.atleast_2d(log_pi) + np.atleast_2d(log_dens)
    mx = a.max(axis=1)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        return safe + np.log(np.exp(a - safe[:, None]).sum(axis=1))


def responsibilities(log_pi, log_dens) -> np.ndarray:
    """Posterior component probabilities ``pi_m f_m / sum_j pi_j f_j``."""
    a = np.atleast_2d(log_pi) + np.atleast_2d(log_dens)
    ll = mixture_logpdf(log_pi, log_dens)
    bad = ~np.isfinite(ll)
    if np.any(bad):
        raise DegenerateRowError(f"row {int(np.flatnonzero(bad)[0])} has zero likelihood "
                                 f"under every component")
    return np.exp(a - ll[:, None])


@dataclass
class ForwardPass:
    """Intermediate quantities of one likelihood evaluation."""

    rows: np.ndarray | None
    y: np.ndarray
    etas: list
    params: list
    log_pi: np.ndarray
    log_dens: np.ndarray
    ll: np.ndarray
    designs: list = field(default_factory=list, repr=False)


def _require_design(model):
    if model.design is None:
        raise DataError("model is not bound to data; call model.bind(data)")
    return model.design


def forward_pass(model: MixtureModel, rows=None, keep_cache: bool = False,
                 need_y: bool = True) -> ForwardPass:
    """Evaluate predictors, parameters, gates and (optionally) the likelihood."""
    des = _require_design(model)
    if rows is not None:
        rows = np.asarray(rows)
    theta = model.theta
    etas, designs = [], []
    for p, X, dins in zip(model.predictors, des.X, des.deep):
        Xr = X if rows is None else X[rows]
        designs.append(Xr)
        eta = Xr @ theta[p.coef]
        for (t, net, sl), D in zip(p.nets, dins):
            Dr = D if rows is None else D[rows]
            eta = eta + (net.forward(Dr) if keep_cache else net.evaluate(Dr))
        etas.append(eta)
    n = des.n_rows if rows is None else len(rows)
    M = model.n_components
    params = []
    i = 0
    for comp in model.spec.components:
        k = comp.family.n_params
        params.append([tr(etas[i + j]) for j, tr in enumerate(comp.transforms)])
        i += k
    gate_eta = np.column_stack(etas[i:]) if M > 1 else np.zeros((n, 0))
    log_pi = log_softmax_gate(gate_eta)
    y = log_dens = ll = None
    if need_y:
        if des.y is None:
            raise DataError("no response bound to the model")
        y = des.y if rows is None else des.y[rows]
        log_dens = np.empty((n, M))
        with np.errstate(divide="ignore"):
            for m, comp in enumerate(model.spec.components):
                log_dens[:, m] = dist.logpdf(comp.family, params[m], y)
        ll = mixture_logpdf(log_pi, log_dens)
    return ForwardPass(rows, y, etas, params, log_pi, log_dens, ll, designs)


def gating_weights(model: MixtureModel, rows=None) -> np.ndarray:
    """``(N, M)`` mixture weights; each row sums to one."""
    return np.exp(forward_pass(model, rows, need_y=False).log_pi)


def component_params(model: MixtureModel, rows=None) -> list[np.ndarray]:
    """Per component, an ``(N, k_m)`` matrix of transformed parameters."""
    fp = forward_pass(model, rows, need_y=False)
    n = fp.log_pi.shape[0]
    return [np.column_stack(ps) if ps else np.zeros((n, 0)) for ps in fp.params]


def log_likelihood(model: MixtureModel, rows=None) -> np.ndarray:
    """Per-observation mixture log-likelihood."""
    return forward_pass(model, rows).ll


def log_likelihood_obs(model: MixtureModel, i: int) -> float:
    return float(log_likelihood(model, np.array([i]))[0])


def penalized_nll(model: MixtureModel, rows=None) -> float:
    """Mean negative log-likelihood over ``rows`` plus the (unscaled) penalty."""
    ll = log_likelihood(model, rows)
    if ll.size == 0:
        raise DataError("penalized_nll needs at least one row")
    return float(-ll.mean() + model.penalty())


def _bound(model, data, y=None):
    if data is None and y is None:
        return model
    return model.bind(data if data is not None else model.data, y)


def posteriors(model: MixtureModel, data=None, y=None) -> np.ndarray:
    """``(N, M)`` responsibilities; raises on rows with zero likelihood."""
    fp = forward_pass(_bound(model, data, y))
    return responsibilities(fp.log_pi, fp.log_dens)


def component_means(model: MixtureModel, data=None) -> np.ndarray:
    """``(N, M)`` expected value of each component."""
    fp = forward_pass(_bound(model, data), need_y=False)
    n = fp.log_pi.shape[0]
    out = np.empty((n, model.n_components))
    for m, (fam, ps) in enumerate(zip(model.families, fp.params)):
        out[:, m] = dist.expected_value(fam, ps)
    return out


def mixture_stats(model: MixtureModel, data=None) -> dict:
    """Component parameters, gates, component means and the mixture mean."""
    bound = _bound(model, data)
    fp = forward_pass(bound, need_y=False)
    n = fp.log_pi.shape[0]
    pi = np.exp(fp.log_pi)
    means = np.empty((n, model.n_components))
    for m, (fam, ps) in enumerate(zip(model.families, fp.params)):
        means[:, m] = dist.expected_value(fam, ps)
    return {
        "params": [np.column_stack(ps) if ps else np.zeros((n, 0)) for ps in fp.params],
        "param_names": [c.names for c in model.spec.components],
        "families": [str(f) for f in model.families],
        "pi": pi,
        "component_means": means,
        "mixture_mean": (pi * means).sum(axis=1),
    }
