"""Sampled time/frequency traces shared by the simulators and fitters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


@dataclass
class DecayCurve:
    """A sampled trace: strictly increasing abscissa, values, optional
    one-sigma uncertainties.  Used for FID/T1/T2/Rabi data and spectra."""

    t: np.ndarray
    y: np.ndarray
    y_err: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.y_err is not None:
            self.y_err = np.asarray(self.y_err, dtype=float)
        self.validate()

    def validate(self):
        if self.t.ndim != 1 or self.y.ndim != 1:
            raise InputError("curve arrays must be one-dimensional")
        if self.t.size != self.y.size:
            raise InputError("time and signal columns differ in length")
        if self.t.size == 0:
            raise InputError("curve is empty")
        if np.any(~np.isfinite(self.t)) or np.any(~np.isfinite(self.y)):
            raise InputError("curve contains non-finite values")
        if np.any(np.diff(self.t) <= 0):
            bad = int(np.argmax(np.diff(self.t) <= 0)) + 1
            raise InputError(f"times must be strictly increasing (row {bad + 1})")
        if self.y_err is not None:
            if self.y_err.size != self.t.size:
                raise InputError("uncertainty column differs in length")
            if np.any(~np.isfinite(self.y_err)) or np.any(self.y_err <= 0):
                raise InputError("uncertainties must be finite and positive")
        return self

    def __len__(self):
        return self.t.size
