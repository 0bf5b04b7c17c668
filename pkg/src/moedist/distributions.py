"""Parametric component families and response transforms.

A component density is evaluated on parameters ``theta`` that are obtained
from unconstrained additive predictors through a response transform,
``theta = transform(eta)``.  Five families are available: ``normal``,
``laplace``, ``poisson``, ``bernoulli`` and ``pointmass`` (a one-point
distribution at a fixed location).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln

from .exceptions import InvalidParameterError, SpecError, SupportError

POINT_TOLERANCE = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2 = math.log(2.0)
# exp() overflows above this
_MAX_EXP_ARG = 709.0


class ResponseTransform(str, enum.Enum):
    """Monotone map from a real predictor to a parameter's domain."""

    IDENTITY = "identity"
    SOFTPLUS = "softplus"
    EXP = "exp"
    SIGMOID = "sigmoid"

    def __call__(self, eta):
        return apply_transform(self, eta)

    def derivative(self, eta):
        return transform_derivative(self, eta)

    def inverse(self, theta):
        """Predictor value that maps to ``theta`` (used for initialization)."""
        theta = np.asarray(theta, dtype=float)
        if self is ResponseTransform.IDENTITY:
            return theta
        if self is ResponseTransform.SOFTPLUS:
            theta = np.maximum(theta, 1e-12)
            # log(exp(t) - 1), stable for large t
            return theta + np.log(-np.expm1(-theta))
        if self is ResponseTransform.EXP:
            return np.log(np.maximum(theta, 1e-12))
        p = np.clip(theta, 1e-12, 1 - 1e-12)
        return np.log(p) - np.log1p(-p)


def softplus(eta):
    """``log(1 + exp(eta))`` without overflow."""
    return np.logaddexp(0.0, eta)


def apply_transform(t, eta):
    """Apply response transform ``t`` to ``eta`` (scalar or array)."""
    t = ResponseTransform(t)
    scalar = np.ndim(eta) == 0
    eta = np.asarray(eta, dtype=float)
    if t is ResponseTransform.IDENTITY:
        out = eta.copy() if not scalar else eta
    elif t is ResponseTransform.SOFTPLUS:
        out = softplus(eta)
    elif t is ResponseTransform.EXP:
        out = np.exp(np.minimum(eta, _MAX_EXP_ARG))
    else:
        out = expit(eta)
    return float(out) if scalar else out


def transform_derivative(t, eta):
    """Derivative of the response transform with respect to ``eta``."""
    t = ResponseTransform(t)
    scalar = np.ndim(eta) == 0
    eta = np.asarray(eta, dtype=float)
    if t is ResponseTransform.IDENTITY:
        out = np.ones_like(eta)
    elif t is ResponseTransform.SOFTPLUS:
        out = expit(eta)
    elif t is ResponseTransform.EXP:
        out = np.where(eta < _MAX_EXP_ARG, np.exp(np.minimum(eta, _MAX_EXP_ARG)), 0.0)
    else:
        s = expit(eta)
        out = s * (1.0 - s)
    return float(out) if scalar else out


_PARAM_NAMES = {
    "normal": ("mean", "scale"),
    "laplace": ("location", "scale"),
    "poisson": ("rate",),
    "bernoulli": ("prob",),
    "pointmass": (),
}

_DEFAULT_TRANSFORMS = {
    "normal": (ResponseTransform.IDENTITY, ResponseTransform.SOFTPLUS),
    "laplace": (ResponseTransform.IDENTITY, ResponseTransform.SOFTPLUS),
    "poisson": (ResponseTransform.EXP,),
    "bernoulli": (ResponseTransform.SIGMOID,),
    "pointmass": (),
}


@dataclass(frozen=True)
class Family:
    """A component distribution.

    Parameters
    ----------
    kind : str
        One of ``"normal"``, ``"laplace"``, ``"poisson"``, ``"bernoulli"``,
        ``"pointmass"``.
    at : float, optional
        Location of the atom; required for ``pointmass`` and forbidden
        otherwise.
    """

    kind: str
    at: float | None = None

    def __post_init__(self):
        kind = str(self.kind).lower()
        if kind not in _PARAM_NAMES:
            raise SpecError(f"unknown family {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "pointmass":
            if self.at is None or not math.isfinite(float(self.at)):
                raise SpecError("pointmass needs a finite location 'at'")
            object.__setattr__(self, "at", float(self.at))
        elif self.at is not None:
            raise SpecError(f"family {kind!r} takes no location")

    @property
    def n_params(self) -> int:
        return len(_PARAM_NAMES[self.kind])

    @property
    def param_names(self) -> tuple[str, ...]:
        return _PARAM_NAMES[self.kind]

    @property
    def is_point_mass(self) -> bool:
        return self.kind == "pointmass"

    @property
    def has_scale(self) -> bool:
        return "scale" in _PARAM_NAMES[self.kind]

    def to_json(self) -> dict:
        if self.is_point_mass:
            return {"family": "pointmass", "at": self.at}
        return {"family": self.kind}

    @classmethod
    def from_json(cls, obj) -> "Family":
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj["family"], obj.get("at"))

    def __str__(self):
        return f"pointmass({self.at:g})" if self.is_point_mass else self.kind


def Normal() -> Family:
    return Family("normal")


def Laplace() -> Family:
    return Family("laplace")


def Poisson() -> Family:
    return Family("poisson")


def Bernoulli() -> Family:
    return Family("bernoulli")


def PointMass(at: float) -> Family:
    return Family("pointmass", at)


def as_family(obj) -> Family:
    if isinstance(obj, Family):
        return obj
    return Family.from_json(obj)


def default_transforms(family: Family) -> list[ResponseTransform]:
    """Response transform for each parameter of ``family``, in order."""
    return list(_DEFAULT_TRANSFORMS[as_family(family).kind])


def check_support(family: Family, y) -> None:
    """Raise :class:`SupportError` if any ``y`` lies outside the support."""
    y = np.asarray(y, dtype=float)
    if family.kind == "poisson":
        bad = (y < 0) | (y != np.round(y))
    elif family.kind == "bernoulli":
        bad = (y != 0) & (y != 1)
    else:
        bad = ~np.isfinite(y)
    if np.any(bad):
        first = y[bad].flat[0]
        raise SupportError(f"response value {first!r} outside the support of {family}")


def _check_params(family: Family, params):
    if len(params) != family.n_params:
        raise InvalidParameterError(
            f"{family} takes {family.n_params} parameters, got {len(params)}"
        )
    for name, value in zip(family.param_names, params):
        v = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError(f"{family} parameter {name} is not finite")
        if name in ("scale", "rate") and np.any(v <= 0):
            raise InvalidParameterError(f"{family} parameter {name} must be positive")
        if name == "prob" and np.any((v <= 0) | (v >= 1)):
            raise InvalidParameterError(f"{family} parameter prob must lie in (0, 1)")


def log_density(family: Family, params, y):
    """Log density (or log mass) of ``y`` under ``family`` with ``params``.

    Validates parameters and support; for a point mass the result is ``0``
    when ``|y - at| <= POINT_TOLERANCE`` and ``-inf`` otherwise.
    """
    family = as_family(family)
    params = [np.asarray(p, dtype=float) for p in np.atleast_1d(params)] \
        if family.n_params else []
    _check_params(family, params)
    if not family.is_point_mass:
        check_support(family, y)
    scalar = np.ndim(y) == 0 and all(np.ndim(p) == 0 for p in params)
    out = logpdf(family, params, np.asarray(y, dtype=float))
    return float(out) if scalar else out


def logpdf(family: Family, params, y):
    """Unchecked, vectorized log density; ``params`` is a sequence of arrays."""
    kind = family.kind
    if kind == "normal":
        mu, sigma = params
        z = (y - mu) / sigma
        return -0.5 * _LOG_2PI - np.log(sigma) - 0.5 * z * z
    if kind == "laplace":
        mu, b = params
        return -_LOG_2 - np.log(b) - np.abs(y - mu) / b
    if kind == "poisson":
        (lam,) = params
        return y * np.log(lam) - lam - gammaln(y + 1.0)
    if kind == "bernoulli":
        (p,) = params
        return np.where(y > 0.5, np.log(p), np.log1p(-p))
    hit = np.abs(y - family.at) <= POINT_TOLERANCE
    return np.where(hit, 0.0, -np.inf)


def logpdf_grad(family: Family, params, y):
    """Partial derivatives of :func:`logpdf` with respect to each parameter."""
    kind = family.kind
    if kind == "normal":
        mu, sigma = params
        r = y - mu
        inv = 1.0 / sigma
        return [r * inv * inv, (r * r * inv * inv - 1.0) * inv]
    if kind == "laplace":
        mu, b = params
        r = y - mu
        inv = 1.0 / b
        return [np.sign(r) * inv, (np.abs(r) * inv - 1.0) * inv]
    if kind == "poisson":
        (lam,) = params
        return [y / lam - 1.0]
    if kind == "bernoulli":
        (p,) = params
        return [np.where(y > 0.5, 1.0 / p, -1.0 / (1.0 - p))]
    return []


def expected_value(family: Family, params):
    """Component mean ``E[Y]`` given the parameter arrays."""
    if family.is_point_mass:
        return family.at
    return params[0]
