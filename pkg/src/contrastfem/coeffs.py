"""Piecewise-constant diffusivity and the face weights derived from it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

AVERAGINGS = ("diffusive", "arithmetic")


@dataclass(frozen=True)
class DiffusionField:
    """Diffusivity value per subdomain tag (tags start at 1)."""

    lambda_by_subdomain: Mapping[int, float]

    def __post_init__(self):
        values = {int(k): float(v) for k, v in dict(self.lambda_by_subdomain).items()}
        if not values:
            raise ValueError("at least one subdomain diffusivity is required")
        bad = {k: v for k, v in values.items() if not (v > 0 and np.isfinite(v))}
        if bad:
            raise ValueError(f"diffusivity must be finite and strictly positive, got {bad}")
        object.__setattr__(self, "lambda_by_subdomain", values)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "DiffusionField":
        return cls({i + 1: v for i, v in enumerate(values)})

    @classmethod
    def parse(cls, text: str) -> "DiffusionField":
        """Parse the CLI form ``"1,1e6"``."""
        return cls.from_list([float(s) for s in text.split(",") if s.strip()])

    def as_list(self) -> list[float]:
        return [self.lambda_by_subdomain[k] for k in sorted(self.lambda_by_subdomain)]

    def __getitem__(self, tag: int) -> float:
        return self.lambda_by_subdomain[int(tag)]

    def scaled(self, c: float) -> "DiffusionField":
        return DiffusionField({k: c * v for k, v in self.lambda_by_subdomain.items()})

    def cell_values(self, mesh) -> np.ndarray:
        """lambda_K for every cell of ``mesh``."""
        missing = set(np.unique(mesh.subdomain).tolist()) - set(self.lambda_by_subdomain)
        if missing:
            raise ValueError(f"no diffusivity given for subdomain(s) {sorted(missing)}")
        lut = np.zeros(max(self.lambda_by_subdomain) + 1)
        for k, v in self.lambda_by_subdomain.items():
            lut[k] = v
        return lut[mesh.subdomain]


def theta_weights(lam_l: float, lam_r: float | None) -> tuple[float, float]:
    """Diffusive weights (theta_l, theta_r); ``lam_r=None`` marks a boundary face."""
    if lam_r is None:
        return 1.0, 0.0
    s = lam_l + lam_r
    return lam_r / s, lam_l / s


def lambda_face(lam_l: float, lam_r: float | None) -> float:
    """Harmonic-mean face diffusivity; lambda_{K_l} on boundary faces."""
    if lam_r is None:
        return lam_l
    return 2.0 * lam_l * lam_r / (lam_l + lam_r)


def weighted_average(values, theta, variant: str = "theta", boundary: bool = False):
    """{v}_theta or {v}_thetabar of the one-sided values ``(v_l, v_r)``.

    On a boundary face ``{v}_theta = v_l`` and ``{v}_thetabar = 0``.
    """
    v_l, v_r = values
    t_l, t_r = theta
    if variant == "theta":
        return v_l if boundary else t_l * v_l + t_r * v_r
    if variant == "thetabar":
        return 0.0 * v_l if boundary else t_r * v_l + t_l * v_r
    raise ValueError(f"variant must be 'theta' or 'thetabar', got {variant!r}")


@dataclass(frozen=True)
class FaceWeights:
    theta_l: np.ndarray
    theta_r: np.ndarray
    lambda_F: np.ndarray
    lambda_l: np.ndarray
    lambda_r: np.ndarray  # 0 on boundary faces


def face_weights(mesh, field: DiffusionField, averaging: str = "diffusive") -> FaceWeights:
    """Weights and face diffusivity on every face of ``mesh``.

    ``averaging="arithmetic"`` gives theta = 1/2 and the arithmetic mean of the
    two diffusivities as face value; it exists only to compare against the
    diffusive choice.
    """
    if averaging not in AVERAGINGS:
        raise ValueError(f"averaging must be one of {AVERAGINGS}, got {averaging!r}")
    fs = mesh.faces
    lam = field.cell_values(mesh)
    bnd = fs.is_boundary
    lam_l = lam[fs.left]
    lam_r = np.where(bnd, 0.0, lam[np.where(bnd, 0, fs.right)])
    s = lam_l + lam_r
    if averaging == "diffusive":
        th_l = np.where(bnd, 1.0, lam_r / s)
        th_r = np.where(bnd, 0.0, lam_l / s)
        lam_F = np.where(bnd, lam_l, 2.0 * lam_l * lam_r / s)
    else:
        th_l = np.where(bnd, 1.0, 0.5)
        th_r = np.where(bnd, 0.0, 0.5)
        lam_F = np.where(bnd, lam_l, 0.5 * s)
    return FaceWeights(th_l, th_r, lam_F, lam_l, lam_r)
