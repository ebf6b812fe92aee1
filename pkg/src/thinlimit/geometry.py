"""Thin-domain geometry for N = 1.

The thin domain is the strip ``{(x, y) : a < x < b, 0 < y < eps * g(x)}``.
Solvers work on the flattened rectangle ``[a, b] x [0, 1]`` through the
terrain-following coordinate ``s = y / (eps * g(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

EPSILON_MAX = 0.5
_SAMPLES = 2001


class DomainError(ValueError):
    """Raised when a point lies outside the closed interval [a, b]."""


@dataclass(frozen=True)
class Domain:
    a: float
    b: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError("domain endpoints must be finite")
        if not self.a < self.b:
            raise ValueError(f"domain requires a < b, got a={self.a}, b={self.b}")

    @property
    def length(self) -> float:
        return self.b - self.a

    def check(self, x):
        """Return ``x`` as an array, raising DomainError if it leaves [a, b]."""
        x = np.asarray(x, dtype=float)
        slack = 1e-12 * self.length
        if np.any(x < self.a - slack) or np.any(x > self.b + slack):
            raise DomainError(f"x outside [{self.a}, {self.b}]")
        return x

    def outward_normal(self, x: float) -> float:
        """Lateral outward normal: -1 at a, +1 at b."""
        if np.isclose(x, self.a):
            return -1.0
        if np.isclose(x, self.b):
            return 1.0
        raise DomainError(f"{x} is not an endpoint of [{self.a}, {self.b}]")


@dataclass(frozen=True)
class Profile:
    """Thickness function ``g`` of the thin domain.

    ``constant``: ``g(x) = c0``.
    ``cos_bump``: ``g(x) = c0 + c1 * cos(k * pi * (x - a) / (b - a))``.
    """

    kind: Literal["constant", "cos_bump"]
    domain: Domain
    c0: float
    c1: float = 0.0
    k: float = 0.0

    @classmethod
    def constant(cls, c: float, domain: Domain) -> "Profile":
        return cls("constant", domain, float(c))

    @classmethod
    def cos_bump(cls, c0: float, c1: float, k: float, domain: Domain) -> "Profile":
        return cls("cos_bump", domain, float(c0), float(c1), float(k))

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "cos_bump"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "constant" and (self.c1 != 0.0 or self.k != 0.0):
            raise ValueError("constant profile takes a single parameter")
        if not all(np.isfinite(v) for v in (self.c0, self.c1, self.k)):
            raise ValueError("profile parameters must be finite")
        if self.c0 - abs(self.c1) <= 0.0:
            raise ValueError("profile must satisfy inf g > 0 (need c0 - |c1| > 0)")
        g, _, _ = profile_eval(self, np.linspace(self.domain.a, self.domain.b, _SAMPLES))
        if g.min() <= 0.0:
            raise ValueError("profile must satisfy inf g > 0")

    @property
    def g_min(self) -> float:
        return self.c0 - abs(self.c1)

    @property
    def g_max(self) -> float:
        return self.c0 + abs(self.c1)


def profile_eval(profile: Profile, x):
    """Return ``(g, g', g'')`` at ``x``; scalars in, scalars out."""
    xs = profile.domain.check(x)
    if profile.kind == "constant":
        g = np.full_like(xs, profile.c0)
        gp = np.zeros_like(xs)
        gpp = np.zeros_like(xs)
    else:
        w = profile.k * np.pi / profile.domain.length
        theta = w * (xs - profile.domain.a)
        g = profile.c0 + profile.c1 * np.cos(theta)
        gp = -profile.c1 * w * np.sin(theta)
        gpp = -profile.c1 * w * w * np.cos(theta)
    if xs.ndim == 0:
        return float(g), float(gp), float(gpp)
    return g, gp, gpp


@dataclass(frozen=True)
class ThinDomain:
    domain: Domain
    profile: Profile
    epsilon: float

    def __post_init__(self) -> None:
        if self.profile.domain != self.domain:
            raise ValueError("profile is defined on a different domain")
        if not 0.0 < self.epsilon <= EPSILON_MAX:
            raise ValueError(f"epsilon must lie in (0, {EPSILON_MAX}], got {self.epsilon}")

    def height(self, x):
        g, _, _ = profile_eval(self.profile, x)
        return self.epsilon * g

    def physical_y(self, x, s):
        """Map the reference coordinate ``s`` in [0, 1] to physical ``y``."""
        return self.height(x) * np.asarray(s, dtype=float)


@dataclass(frozen=True)
class ChainRuleBundle:
    """Derivatives of ``s(x, y) = y / (eps g(x))`` needed by the chain rule.

    Attributes may be scalars or arrays broadcast over grid nodes.
    """

    s_x: np.ndarray | float
    s_xx: np.ndarray | float
    ds_x_dy: np.ndarray | float
    inv_eg: np.ndarray | float


def top_normal(thin: ThinDomain, x):
    """Outward unit normal to the top boundary ``y = eps g(x)``."""
    _, gp, _ = profile_eval(thin.profile, x)
    eg = thin.epsilon * np.asarray(gp)
    norm = np.sqrt(1.0 + eg * eg)
    return np.stack([-eg / norm, 1.0 / norm], axis=-1)


def chain_rule_bundle(thin: ThinDomain, x, s) -> ChainRuleBundle:
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0) or np.any(s > 1.0):
        raise DomainError("s outside [0, 1]")
    g, gp, gpp = profile_eval(thin.profile, x)
    ratio = gp / g
    bundle = ChainRuleBundle(
        s_x=-s * ratio,
        s_xx=s * (2.0 * ratio**2 - gpp / g),
        ds_x_dy=-gp / (thin.epsilon * g * g),
        inv_eg=1.0 / (thin.epsilon * g),
    )
    if np.ndim(bundle.s_x) == 0 and np.ndim(bundle.inv_eg) == 0:
        return ChainRuleBundle(*(float(v) for v in (bundle.s_x, bundle.s_xx, bundle.ds_x_dy, bundle.inv_eg)))
    return bundle
