"""Catalog of coefficient functions with closed-form derivatives.

The model coefficients (own-motion diffusion, correlation kernel, branching
variance, branching drift) and the solver test functions are all drawn from a
small catalog so that first and second derivatives are available exactly
instead of by numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import UnsupportedDerivative

KINDS = ("zero", "constant", "gaussian-bump", "cosine-bump", "tabulated-grid")


@dataclass(frozen=True)
class FunctionSpec:
    """A bounded function on the line with bounded first two derivatives.

    kind: one of zero | constant | gaussian-bump | cosine-bump | tabulated-grid
    params: per-kind parameters:
        constant:       level
        gaussian-bump:  amplitude, center, width   -> A exp(-(x-c)^2 / (2 w^2))
        cosine-bump:    amplitude, center, width   -> A cos^2(pi (x-c) / (2 w)) on |x-c| <= w
        tabulated-grid: lo, hi, values             -> clamped cubic spline through the table
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown function kind {self.kind!r}")
        if self.kind == "constant" and "level" not in self.params:
            raise ValueError("constant kind needs a 'level' parameter")
        if self.kind in ("gaussian-bump", "cosine-bump"):
            for key in ("amplitude", "width"):
                if key not in self.params:
                    raise ValueError(f"{self.kind} needs a {key!r} parameter")
            if self.params["width"] <= 0:
                raise ValueError("width must be positive")
        if self.kind == "tabulated-grid":
            for key in ("lo", "hi", "values"):
                if key not in self.params:
                    raise ValueError(f"tabulated-grid needs a {key!r} parameter")
            values = np.asarray(self.params["values"], dtype=float)
            if values.ndim != 1 or values.size < 4:
                raise ValueError("tabulated-grid needs at least 4 values")
            if not self.params["hi"] > self.params["lo"]:
                raise ValueError("tabulated-grid needs hi > lo")
            xs = np.linspace(self.params["lo"], self.params["hi"], values.size)
            # frozen dataclass, so stash the interpolant via object.__setattr__
            object.__setattr__(self, "_spline", CubicSpline(xs, values, bc_type="clamped"))

    def __call__(self, x, order: int = 0):
        """Evaluate the function or one of its first two derivatives.

        Accepts scalars or arrays; returns the matching shape.
        """
        if order not in (0, 1, 2):
            raise UnsupportedDerivative(f"order {order} not in {{0, 1, 2}}")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = self._eval(x, order)
        return float(out[0]) if scalar else out

    def _eval(self, x: np.ndarray, order: int) -> np.ndarray:
        kind = self.kind
        if kind == "zero":
            return np.zeros_like(x)
        if kind == "constant":
            if order == 0:
                return np.full_like(x, float(self.params["level"]))
            return np.zeros_like(x)
        if kind == "gaussian-bump":
            amp = float(self.params["amplitude"])
            center = float(self.params.get("center", 0.0))
            width = float(self.params["width"])
            u = (x - center) / width
            bump = amp * np.exp(-0.5 * u * u)
            if order == 0:
                return bump
            if order == 1:
                return -u / width * bump
            return (u * u - 1.0) / (width * width) * bump
        if kind == "cosine-bump":
            amp = float(self.params["amplitude"])
            center = float(self.params.get("center", 0.0))
            width = float(self.params["width"])
            u = (x - center) / width
            inside = np.abs(u) <= 1.0
            out = np.zeros_like(x)
            if order == 0:
                # cos^2(pi u / 2) written via the double angle to keep it cheap
                out[inside] = 0.5 * amp * (1.0 + np.cos(np.pi * u[inside]))
            elif order == 1:
                out[inside] = -0.5 * amp * np.pi / width * np.sin(np.pi * u[inside])
            else:
                out[inside] = -0.5 * amp * (np.pi / width) ** 2 * np.cos(np.pi * u[inside])
            return out
        # tabulated-grid
        if order > 1:
            raise UnsupportedDerivative("tabulated-grid functions support order <= 1 only")
        lo = float(self.params["lo"])
        hi = float(self.params["hi"])
        clamped = np.clip(x, lo, hi)
        values = self._spline(clamped, nu=order)
        if order == 1:
            # flat continuation outside the table
            values = np.where((x < lo) | (x > hi), 0.0, values)
        return np.asarray(values, dtype=float)

    @property
    def is_zero(self) -> bool:
        if self.kind == "zero":
            return True
        if self.kind == "constant":
            return float(self.params["level"]) == 0.0
        if self.kind in ("gaussian-bump", "cosine-bump"):
            return float(self.params["amplitude"]) == 0.0
        return bool(np.all(np.asarray(self.params["values"]) == 0.0))

    def sup_on(self, xs: np.ndarray) -> float:
        return float(np.max(np.abs(self(xs))))

    def to_dict(self) -> dict[str, Any]:
        params = dict(self.params)
        if "values" in params:
            params["values"] = list(np.asarray(params["values"], dtype=float))
        return {"kind": self.kind, "params": params}

    @staticmethod
    def from_dict(obj: dict) -> "FunctionSpec":
        return FunctionSpec(str(obj["kind"]), dict(obj.get("params", {})))


def zero() -> FunctionSpec:
    return FunctionSpec("zero")


def constant(level: float) -> FunctionSpec:
    return FunctionSpec("constant", {"level": float(level)})


def gaussian_bump(amplitude: float, width: float = 1.0, center: float = 0.0) -> FunctionSpec:
    return FunctionSpec(
        "gaussian-bump",
        {"amplitude": float(amplitude), "width": float(width), "center": float(center)},
    )


def cosine_bump(amplitude: float, width: float = 1.0, center: float = 0.0) -> FunctionSpec:
    return FunctionSpec(
        "cosine-bump",
        {"amplitude": float(amplitude), "width": float(width), "center": float(center)},
    )


def tabulated(lo: float, hi: float, values) -> FunctionSpec:
    return FunctionSpec(
        "tabulated-grid",
        {"lo": float(lo), "hi": float(hi), "values": list(np.asarray(values, dtype=float))},
    )
