"""Transport-cost weighting functions (distance decay).

Three families are supported and can be swapped wherever a model weights
transport costs:

* power:        ``t ** -lam``
* exponential:  ``exp(-lam * t)``
* logistic:     ``1 / (1 + exp(a + b * t))``

Specs serialize as ``power:2.0``, ``exponential:0.1`` or ``logistic:-5.0,0.5``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from marketflow.errors import DomainError, ValidationError


class DecayKind(str, enum.Enum):
    POWER = "power"
    EXPONENTIAL = "exponential"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, text: str | DecayKind) -> DecayKind:
        if isinstance(text, DecayKind):
            return text
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValidationError(
                f"unknown decay kind {text!r}; expected one of power, exponential, logistic"
            ) from None

    @property
    def n_params(self) -> int:
        return 2 if self is DecayKind.LOGISTIC else 1


@dataclass(frozen=True)
class DecaySpec:
    """A decay family plus its parameters.

    ``lam`` is the decay strength for power and exponential decay; ``a`` and
    ``b`` shape the logistic curve. ``lam == 0`` is accepted and means "no
    decay" (every weight is 1 for exponential, every weight is 1 for power).
    """

    kind: DecayKind
    lam: float | None = None
    a: float | None = None
    b: float | None = None

    def __post_init__(self):
        kind = DecayKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is DecayKind.LOGISTIC:
            if self.a is None or self.b is None:
                raise ValidationError("logistic decay needs parameters a and b")
            if not (np.isfinite(self.a) and np.isfinite(self.b)):
                raise ValidationError("logistic parameters must be finite")
            if self.b <= 0:
                raise ValidationError(f"logistic decay needs b > 0, got {self.b}")
            object.__setattr__(self, "a", float(self.a))
            object.__setattr__(self, "b", float(self.b))
        else:
            if self.lam is None or not np.isfinite(self.lam):
                raise ValidationError(f"{kind.value} decay needs a finite lambda")
            if self.lam < 0:
                raise ValidationError(f"{kind.value} decay needs lambda >= 0, got {self.lam}")
            object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def power(cls, lam: float) -> DecaySpec:
        return cls(DecayKind.POWER, lam=lam)

    @classmethod
    def exponential(cls, lam: float) -> DecaySpec:
        return cls(DecayKind.EXPONENTIAL, lam=lam)

    @classmethod
    def logistic(cls, a: float, b: float) -> DecaySpec:
        return cls(DecayKind.LOGISTIC, a=a, b=b)

    @classmethod
    def from_vector(cls, kind: DecayKind | str, params) -> DecaySpec:
        """Build a spec from the flat parameter vector used by the optimizer."""
        kind = DecayKind.parse(kind)
        params = [float(v) for v in params]
        if len(params) != kind.n_params:
            raise ValidationError(f"{kind.value} decay takes {kind.n_params} parameter(s)")
        if kind is DecayKind.LOGISTIC:
            return cls.logistic(*params)
        return cls(kind, lam=params[0])

    @property
    def params(self) -> tuple[float, ...]:
        if self.kind is DecayKind.LOGISTIC:
            return (self.a, self.b)
        return (self.lam,)

    def as_dict(self) -> dict[str, float | str]:
        if self.kind is DecayKind.LOGISTIC:
            return {"kind": self.kind.value, "a": self.a, "b": self.b}
        return {"kind": self.kind.value, "lambda": self.lam}

    def __str__(self) -> str:
        return format_decay(self)


def _as_costs(t):
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)) or np.any(arr < 0):
        raise DomainError("transport costs must be non-negative")
    return arr


def eval_decay(spec: DecaySpec, t):
    """Weight of transport cost ``t`` (scalar or array) under ``spec``.

    Raises:
        DomainError: for negative costs, or ``t == 0`` with power decay
            (callers are expected to apply a cost floor first).
    """
    arr = _as_costs(t)
    if spec.kind is DecayKind.POWER:
        if np.any(arr == 0):
            raise DomainError("power decay is undefined at zero transport cost")
        out = arr ** -spec.lam
    elif spec.kind is DecayKind.EXPONENTIAL:
        out = np.exp(-spec.lam * arr)
    else:
        out = expit(-(spec.a + spec.b * arr))
    return float(out) if out.ndim == 0 else out


def log_decay(spec: DecaySpec, t):
    """Natural log of :func:`eval_decay`, evaluated without underflow."""
    arr = _as_costs(t)
    if spec.kind is DecayKind.POWER:
        if np.any(arr == 0):
            raise DomainError("power decay is undefined at zero transport cost")
        out = -spec.lam * np.log(arr)
    elif spec.kind is DecayKind.EXPONENTIAL:
        out = -spec.lam * arr
    else:
        out = -np.logaddexp(0.0, spec.a + spec.b * arr)
    return float(out) if out.ndim == 0 else out


def parse_decay(text: str) -> DecaySpec:
    """Parse ``kind:p1[,p2]`` into a :class:`DecaySpec`.

    >>> parse_decay("logistic:-5.0,0.5")
    DecaySpec(kind=<DecayKind.LOGISTIC: 'logistic'>, lam=None, a=-5.0, b=0.5)
    """
    kind_text, sep, rest = text.partition(":")
    kind = DecayKind.parse(kind_text)
    if not sep or not rest.strip():
        raise ValidationError(f"decay {text!r} is missing parameters (e.g. power:2.0)")
    try:
        values = [float(v) for v in rest.split(",")]
    except ValueError:
        raise ValidationError(f"cannot parse decay parameters in {text!r}") from None
    return DecaySpec.from_vector(kind, values)


def format_decay(spec: DecaySpec) -> str:
    return f"{spec.kind.value}:" + ",".join(repr(v) for v in spec.params)
