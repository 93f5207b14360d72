"""Feature lifts and the diagonal selector algebra on lifted vectors.

A lift maps a scalar feature value to a vector whose last channel is the
constant 1 (the bias channel). Selectors scale the data channels while
leaving the bias untouched, so feature inclusion/exclusion never changes
the network topology. For binary and polynomial lifts the all-off state
``[0, ..., 0, 1]`` coincides with lifting the reference input 0; Fourier
lifts have phi(0) != 0, so their off state is a synthetic baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BINARY = "binary"
POLY = "poly"
FOURIER = "fourier"


@dataclass(frozen=True)
class FeatureMap:
    """One feature's lift descriptor.

    kind ``"binary"`` ignores ``k`` and ``omega`` (output dim 2);
    ``"poly"`` uses powers 1..k (dim k+1); ``"fourier"`` uses
    sin/cos harmonics 1..k at base frequency ``omega`` (dim 2k+1).
    """

    kind: str
    k: int = 1
    omega: float = np.pi

    def __post_init__(self):
        if self.kind not in (BINARY, POLY, FOURIER):
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind != BINARY and self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def dim(self) -> int:
        if self.kind == BINARY:
            return 2
        if self.kind == POLY:
            return self.k + 1
        return 2 * self.k + 1

    def apply(self, x: float) -> np.ndarray:
        """Lifted vector [phi(x), 1] for a scalar input."""
        return self.apply_batch(np.asarray([x], dtype=np.float64))[0]

    def apply_batch(self, x: np.ndarray) -> np.ndarray:
        """Lift a 1-D array of raw values into a (len(x), dim) array."""
        x = np.asarray(x, dtype=np.float64)
        out = np.ones((x.shape[0], self.dim))
        if self.kind == BINARY:
            out[:, 0] = x
        elif self.kind == POLY:
            for p in range(1, self.k + 1):
                out[:, p - 1] = x**p
        else:
            for j in range(1, self.k + 1):
                out[:, 2 * (j - 1)] = np.sin(j * self.omega * x)
                out[:, 2 * j - 1] = np.cos(j * self.omega * x)
        return out

    def to_json_dict(self) -> dict:
        if self.kind == BINARY:
            return {"kind": BINARY}
        if self.kind == POLY:
            return {"kind": POLY, "k": self.k}
        return {"kind": FOURIER, "k": self.k, "omega": self.omega}

    @staticmethod
    def from_json_dict(obj: dict) -> "FeatureMap":
        kind = obj["kind"]
        if kind == BINARY:
            return FeatureMap(BINARY)
        if kind == POLY:
            return FeatureMap(POLY, k=int(obj["k"]))
        if kind == FOURIER:
            return FeatureMap(FOURIER, k=int(obj["k"]), omega=float(obj["omega"]))
        raise ValueError(f"unknown feature map kind {kind!r}")


class LiftSpec:
    """Per-feature feature maps for an n-feature model."""

    def __init__(self, maps) -> None:
        self.maps = tuple(maps)
        if not self.maps:
            raise ValueError("need at least one feature map")

    @staticmethod
    def binary(n: int) -> "LiftSpec":
        return LiftSpec([FeatureMap(BINARY)] * n)

    @property
    def n(self) -> int:
        return len(self.maps)

    @property
    def dims(self) -> tuple:
        return tuple(m.dim for m in self.maps)

    def lift(self, i: int, x: float) -> np.ndarray:
        """Lift feature i's raw value (i is 0-based here)."""
        return self.maps[i].apply(x)

    def lift_instance(self, x) -> list:
        """Lift a full raw instance into one vector per feature."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"expected instance of length {self.n}, got shape {x.shape}")
        return [m.apply(v) for m, v in zip(self.maps, x)]

    def to_json_list(self) -> list:
        return [m.to_json_dict() for m in self.maps]

    @staticmethod
    def from_json_list(objs) -> "LiftSpec":
        return LiftSpec([FeatureMap.from_json_dict(o) for o in objs])


def selector_apply(t: float, v: np.ndarray) -> np.ndarray:
    """Apply Diag(t * I_{d-1}, 1): scale data channels, keep the bias."""
    out = np.array(v, dtype=np.float64)
    out[..., :-1] *= t
    return out


def signed_toggle(v: np.ndarray) -> np.ndarray:
    """Apply Diag(I_{d-1}, 0) = S(1) - S(0): keep data channels, zero the bias."""
    out = np.array(v, dtype=np.float64)
    out[..., -1] = 0.0
    return out


def off_state(dim: int) -> np.ndarray:
    """The all-off lifted vector [0, ..., 0, 1]."""
    v = np.zeros(dim)
    v[-1] = 1.0
    return v
