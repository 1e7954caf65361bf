"""Named example systems, buildable from a plain config mapping.

Config shape::

    {"name": "linear_oscillator", "params": {...}, "epsilon": 0.1,
     "M_X": 3.1, "lambda": 1.0,
     "omega": {"m": 1.0, "M": 1.0, "lambda_omega": 0.01}}

``M_X`` and ``lambda`` override the bound and Lipschitz constant the
constructor derives from the parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from .inclusion import PhaseVelocity, SetValuedField
from .sets import CompactSet


@dataclass
class System:
    name: str
    field: SetValuedField
    omega: PhaseVelocity
    domain: tuple
    info: dict = field(default_factory=dict)


def _box(lo, hi, dim):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    return lo, hi


def linear_oscillator(a=-1.0, center=0.0, amplitude=1.0, disturbance=0.0, domain=(-2.0, 2.0)):
    """Scalar field v in {a (x - center) + amplitude cos(phi)} + [-disturbance, disturbance]."""
    a, c, amp, r = float(a), float(center), float(amplitude), float(disturbance)
    lo, hi = _box(domain[0], domain[1], 1)
    reach = max(abs(lo[0] - c), abs(hi[0] - c))

    def fn(phi, x):
        base = a * (x[:, 0] - c) + amp * np.cos(phi)
        out = np.empty((x.shape[0], 2, 1))
        out[:, 0, 0] = base - r
        out[:, 1, 0] = base + r
        return out

    bound = abs(a) * reach + abs(amp) + r
    fld = SetValuedField(1, fn, max(bound, 1e-12), abs(a), convex=True, name="linear_oscillator")
    info = {}
    if a < 0:
        # averaged field a (y - c) + [-r, r] has the critical point c when r = 0
        info["critical_point"] = [c]
        half = r / abs(a)
        info["invariant_set"] = [[c - half], [c + half]]
    return fld, (lo, hi), info


def pendulum(gravity=9.81, length_lo=0.9, length_hi=1.1, damping=0.5, forcing=0.2, domain=(-4.0, 4.0)):
    """Damped pendulum with interval-uncertain length and phase forcing.

    State (angle, rate). The unknown length enters through g/l, so the two
    length extremes give the two vertices of each value.
    """
    g, l0, l1, b, f = map(float, (gravity, length_lo, length_hi, damping, forcing))
    if not 0 < l0 <= l1:
        raise ValueError("need 0 < length_lo <= length_hi")
    lo, hi = _box(domain[0], domain[1], 2)

    def fn(phi, x):
        th, om = x[:, 0], x[:, 1]
        out = np.empty((x.shape[0], 2, 2))
        for i, ell in enumerate((l0, l1)):
            out[:, i, 0] = om
            out[:, i, 1] = -(g / ell) * np.sin(th) - b * om + f * np.cos(phi)
        return out

    rmax = np.abs(np.concatenate([lo, hi])).max()
    bound = float(np.hypot(rmax, g / l0 + b * rmax + f))
    lip = 1.0 + g / l0 + b
    return SetValuedField(2, fn, bound, lip, name="pendulum"), (lo, hi), {}


def rotation(rate=1.0, domain=(-2.0, 2.0)):
    """Planar rotation v = rate * (-x2, x1)."""
    w = float(rate)
    lo, hi = _box(domain[0], domain[1], 2)

    def fn(phi, x):
        return np.stack([-w * x[:, 1], w * x[:, 0]], axis=1)[:, None, :]

    rmax = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    return SetValuedField(2, fn, max(abs(w) * rmax, 1e-12), abs(w), name="rotation"), (lo, hi), {}


def linear_contracting(dim=2, rate=1.0, forcing=0.5, disturbance=0.05, domain=(-2.0, 2.0)):
    """v in {-rate x + forcing cos(phi) e_1} + disturbance box, in any dimension."""
    dim, k, f, r = int(dim), float(rate), float(forcing), float(disturbance)
    lo, hi = _box(domain[0], domain[1], dim)
    corners = np.array(np.meshgrid(*[[-r, r]] * dim, indexing="ij")).reshape(dim, -1).T

    def fn(phi, x):
        base = -k * x
        base[:, 0] += f * np.cos(phi)
        return base[:, None, :] + corners[None, :, :]

    rmax = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    bound = k * rmax + abs(f) + r * np.sqrt(dim)
    info = {"critical_point": None}
    return SetValuedField(dim, fn, bound, k, name="linear_contracting"), (lo, hi), info


REGISTRY = {
    "linear_oscillator": linear_oscillator,
    "pendulum": pendulum,
    "rotation": rotation,
    "linear_contracting": linear_contracting,
}

_TOP_KEYS = {"name", "params", "epsilon", "M_X", "lambda", "omega"}
_OMEGA_KEYS = {"m", "M", "lambda_omega"}


def available_systems():
    return sorted(REGISTRY)


def build_system(config):
    """Construct a :class:`System` from a config mapping (unknown keys rejected)."""
    unknown = set(config) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown system keys: {sorted(unknown)}")
    name = config.get("name")
    if name not in REGISTRY:
        raise ValueError(f"unknown system {name!r}; available: {', '.join(available_systems())}")
    params = dict(config.get("params", {}))
    try:
        fld, domain, info = REGISTRY[name](**params)
    except TypeError as exc:
        raise ValueError(f"bad params for {name}: {exc}") from None
    bound = float(config.get("M_X", fld.bound))
    lip = float(config.get("lambda", fld.lipschitz))
    eps = float(config.get("epsilon", 1.0))
    fld = SetValuedField(fld.dim, fld._fn, bound, lip, eps, fld.convex, name)
    om_cfg = dict(config.get("omega", {}))
    bad = set(om_cfg) - _OMEGA_KEYS
    if bad:
        raise ValueError(f"unknown omega keys: {sorted(bad)}")
    m = float(om_cfg.get("m", 1.0))
    M = float(om_cfg.get("M", m))
    omega = PhaseVelocity.constant(m, M)
    omega.lipschitz = float(om_cfg.get("lambda_omega", 0.0))
    if info.get("invariant_set") is not None:
        info["invariant_set"] = CompactSet(info["invariant_set"])
    return System(name, fld, omega, domain, info)
