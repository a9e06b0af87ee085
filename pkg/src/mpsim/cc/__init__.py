"""Congestion controllers and a name-based factory."""

from .aimd import Balia, CoupledGroup, Lia, NewReno, Olia
from .base import INIT_CWND, MAX_RTO, MIN_RTO, CongestionControl, RateSample, SubflowTelemetry, WindowedMax
from .bbr import Bbr, CoupledBbr, CoupledBbrGroup, average_gain_identity, coupled_bbr_update
from .fixed import FixedRate

CONTROLLERS = {
    "newreno": NewReno,
    "reno": NewReno,
    "bbr": Bbr,
    "coupled-bbr": CoupledBbr,
    "lia": Lia,
    "olia": Olia,
    "balia": Balia,
    "fixed": FixedRate,
}

_RANDOMISED = (Bbr, FixedRate)


def controller_names() -> list[str]:
    return sorted(CONTROLLERS)


def make_group(name: str):
    """Shared coupling state for one connection, or None for uncoupled controllers."""
    cls = _lookup(name)
    if issubclass(cls, CoupledBbr):
        return CoupledBbrGroup()
    if issubclass(cls, (Lia, Olia, Balia)):
        return CoupledGroup()
    return None


def make_controller(name: str, draw=None, group=None, **params) -> CongestionControl:
    cls = _lookup(name)
    if issubclass(cls, _RANDOMISED):
        cc = cls(draw=draw, **params)
    else:
        cc = cls(**params)
    if group is not None:
        group.add(cc)
    return cc


def _lookup(name: str):
    try:
        return CONTROLLERS[name]
    except KeyError:
        raise ValueError(f"unknown congestion control {name!r}; choose from {controller_names()}") from None


__all__ = [
    "Balia", "Bbr", "CONTROLLERS", "CongestionControl", "CoupledBbr", "CoupledBbrGroup",
    "CoupledGroup", "FixedRate", "INIT_CWND", "Lia", "MAX_RTO", "MIN_RTO", "NewReno", "Olia",
    "RateSample", "SubflowTelemetry", "WindowedMax", "average_gain_identity",
    "controller_names", "coupled_bbr_update", "make_controller", "make_group",
]
