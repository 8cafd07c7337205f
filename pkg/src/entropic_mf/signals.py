"""Broadcast control signals ``t -> zeta_t``."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ControlSignal:
    """A scalar signal evaluable at any ``t >= 0``.

    kinds and their parameters:

    * ``constant``: ``value``
    * ``piecewise``: ``breakpoints`` (increasing, first > 0) and ``values``
      (one more than breakpoints); right-continuous steps
    * ``sinusoid``: ``amplitude``, ``omega`` (rad/time), ``phase``, ``offset``
    * ``sampled``: ``times`` and ``values``, zero-order hold

    RK4 steps whose stages straddle a jump lose local order; put jumps on
    the step grid when that matters.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("constant", "piecewise", "sinusoid", "sampled"):
            raise ValueError(f"unknown signal kind {self.kind!r}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        p = self.params
        if self.kind == "constant":
            out = np.full(t.shape, float(p["value"]))
        elif self.kind == "sinusoid":
            out = p.get("offset", 0.0) + p["amplitude"] * np.sin(p["omega"] * t + p.get("phase", 0.0))
        elif self.kind == "piecewise":
            idx = np.searchsorted(np.asarray(p["breakpoints"], dtype=float), t, side="right")
            out = np.asarray(p["values"], dtype=float)[idx]
        else:
            times = np.asarray(p["times"], dtype=float)
            idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, times.size - 1)
            out = np.asarray(p["values"], dtype=float)[idx]
        return float(out) if out.ndim == 0 else out

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "sinusoid" and self.params["amplitude"] == 0)

    def value_range(self, t_end: float) -> tuple[float, float]:
        """Exact ``(min, max)`` of the signal over ``[0, t_end]``."""
        p = self.params
        if self.kind == "constant":
            return float(p["value"]), float(p["value"])
        if self.kind == "sinusoid":
            amp, w = abs(p["amplitude"]), p["omega"]
            off = p.get("offset", 0.0)
            if w * t_end >= 2 * np.pi:
                return off - amp, off + amp
            ts = np.linspace(0.0, t_end, 4097)
            # add the interior extrema sin(.) = +-1
            ph = p.get("phase", 0.0)
            k = np.arange(-2, int(w * t_end / np.pi) + 3)
            ext = ((np.pi / 2 + k * np.pi) - ph) / w if w else np.array([])
            ts = np.concatenate([ts, ext[(ext >= 0) & (ext <= t_end)]])
            vals = self(ts)
            return float(vals.min()), float(vals.max())
        if self.kind == "piecewise":
            bps = np.asarray(p["breakpoints"], dtype=float)
            n_active = int(np.searchsorted(bps, t_end, side="right")) + 1
            vals = np.asarray(p["values"], dtype=float)[:n_active]
        else:
            times = np.asarray(p["times"], dtype=float)
            n_active = max(1, int(np.searchsorted(times, t_end, side="right")))
            vals = np.asarray(p["values"], dtype=float)[:n_active]
        return float(vals.min()), float(vals.max())

    def discontinuities(self) -> np.ndarray:
        if self.kind == "piecewise":
            return np.asarray(self.params["breakpoints"], dtype=float)
        if self.kind == "sampled":
            return np.asarray(self.params["times"], dtype=float)[1:]
        return np.array([])


def constant(value: float) -> ControlSignal:
    return ControlSignal("constant", {"value": float(value)})


def sinusoid(amplitude: float, omega: float, phase: float = 0.0, offset: float = 0.0) -> ControlSignal:
    return ControlSignal("sinusoid", {"amplitude": float(amplitude), "omega": float(omega), "phase": float(phase), "offset": float(offset)})


def piecewise(breakpoints, values) -> ControlSignal:
    breakpoints = [float(b) for b in breakpoints]
    values = [float(v) for v in values]
    if len(values) != len(breakpoints) + 1:
        raise ValueError("piecewise signal needs one more value than breakpoints")
    if any(b1 <= b0 for b0, b1 in zip(breakpoints, breakpoints[1:])):
        raise ValueError("breakpoints must increase")
    return ControlSignal("piecewise", {"breakpoints": breakpoints, "values": values})


def sampled(times, values) -> ControlSignal:
    times = [float(t) for t in times]
    values = [float(v) for v in values]
    if len(times) != len(values) or not times:
        raise ValueError("sampled signal needs matching non-empty times and values")
    return ControlSignal("sampled", {"times": times, "values": values})


def parse_signal(text: str) -> ControlSignal:
    """Parse a command-line signal description.

    ``const:c``, ``sin:amplitude:omega[:phase[:offset]]``,
    ``pwc:b1,b2,...:v0,v1,v2,...``, ``sampled:t0,t1,...:v0,v1,...``.
    """
    kind, _, rest = text.partition(":")
    parts = rest.split(":") if rest else []
    try:
        if kind in ("const", "constant"):
            return constant(float(parts[0]))
        if kind in ("sin", "sinusoid"):
            return sinusoid(*[float(x) for x in parts])
        if kind in ("pwc", "piecewise"):
            bps = [float(x) for x in parts[0].split(",") if x]
            return piecewise(bps, [float(x) for x in parts[1].split(",")])
        if kind == "sampled":
            return sampled([float(x) for x in parts[0].split(",")], [float(x) for x in parts[1].split(",")])
    except (IndexError, TypeError, ValueError) as exc:
        raise ValueError(f"bad signal {text!r}: {exc}") from None
    raise ValueError(f"unknown signal kind in {text!r}")
