"""Mixed-variable Navier-Stokes residuals and the WPINN / WXPINN / WCPINN loss functionals.

The network predicts the stream function psi, pressure p and the stress components
s11, s12, s22. Velocities come from psi (u = psi_y, v = -psi_x), so continuity holds
identically and only psi needs second derivatives in the default residual form.
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import torch

from errors import (
    ConfigurationError,
    DegenerateLossError,
    EmptyTargetError,
    InsufficientDerivativeOrderError,
    NonFiniteInputError,
)
from geometry import FlowConfig
from network import DTYPE, PRESSURE, PSI, S11, S12, S22, PointEvaluation

X, Y, T = 0, 1, 2
RESIDUAL_COLUMNS = ["x", "y", "t", "R_u", "R_v", "R_p", "R_s11", "R_s12", "R_s22"]

Scalar = Union[float, torch.Tensor]


class Variant(str, Enum):
    WPINN = "WPINN"
    WXPINN = "WXPINN"
    WCPINN = "WCPINN"

    @classmethod
    def parse(cls, value: Union[str, "Variant"]) -> "Variant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ConfigurationError(f"unknown variant '{value}', expected one of WPINN, WXPINN, WCPINN")


class ResidualForm(str, Enum):
    SIGMA = "sigma"      # momentum from the stress divergence, psi derivatives up to order 2
    DIRECT = "direct"    # momentum written out in velocity/pressure, psi derivatives up to order 3

    @property
    def derivative_order(self) -> int:
        return 3 if self is ResidualForm.DIRECT else 2

    @classmethod
    def parse(cls, value: Union[str, "ResidualForm"]) -> "ResidualForm":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"unknown residual form '{value}', expected 'sigma' or 'direct'")


@dataclass
class LossWeights:
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be > 0, got {self.beta}")
        if not self.gamma >= 0:
            raise ConfigurationError(f"gamma must be >= 0, got {self.gamma}")
        if not self.delta >= 0:
            raise ConfigurationError(f"delta must be >= 0, got {self.delta}")


@dataclass
class VelocityField:
    u: torch.Tensor
    v: torch.Tensor
    u_x: torch.Tensor
    u_y: torch.Tensor
    v_x: torch.Tensor
    v_y: torch.Tensor
    u_t: torch.Tensor
    v_t: torch.Tensor

    @property
    def divergence(self) -> torch.Tensor:
        return self.u_x + self.v_y


@dataclass
class GoverningResiduals:
    r_u: torch.Tensor
    r_v: torch.Tensor
    r_p: torch.Tensor
    r_s11: torch.Tensor
    r_s12: torch.Tensor
    r_s22: torch.Tensor

    def stacked(self) -> torch.Tensor:
        return torch.stack([self.r_u, self.r_v, self.r_p, self.r_s11, self.r_s12, self.r_s22], dim=-1)

    def squared_sum(self) -> torch.Tensor:
        return (self.stacked() ** 2).sum(dim=-1)


@dataclass
class InterfaceResiduals:
    r_u: torch.Tensor
    r_v: torch.Tensor
    r_p: torch.Tensor

    def squared_sum(self) -> torch.Tensor:
        return self.r_u ** 2 + self.r_v ** 2 + self.r_p ** 2


@dataclass
class FluxResiduals:
    r_m: torch.Tensor
    r_mu: torch.Tensor

    def squared_sum(self) -> torch.Tensor:
        return self.r_m ** 2 + self.r_mu ** 2


def _require_order(evaluation: PointEvaluation, order: int):
    if evaluation.order < order:
        raise InsufficientDerivativeOrderError(
            f"evaluation carries derivatives up to order {evaluation.order}, {order} required"
        )


def primitive_from_evaluation(evaluation: PointEvaluation) -> torch.Tensor:
    """(u', v', p') per point; needs only first derivatives of psi."""
    d = evaluation.first_derivs
    return torch.stack([d[:, PSI, Y], -d[:, PSI, X], evaluation.outputs[:, PRESSURE]], dim=-1)


def velocity_from_stream(evaluation: PointEvaluation) -> VelocityField:
    _require_order(evaluation, 2)
    d1 = evaluation.first_derivs[:, PSI]
    d2 = evaluation.second_derivs  # d2[:, j, k]: psi differentiated by j, then by k
    return VelocityField(
        u=d1[:, Y],
        v=-d1[:, X],
        u_x=d2[:, Y, X],
        u_y=d2[:, Y, Y],
        v_x=-d2[:, X, X],
        v_y=-d2[:, X, Y],
        u_t=d2[:, Y, T],
        v_t=-d2[:, X, T],
    )


def governing_residuals(evaluation: PointEvaluation, flow: FlowConfig,
                        form: Union[str, ResidualForm] = ResidualForm.SIGMA) -> GoverningResiduals:
    form = ResidualForm.parse(form)
    _require_order(evaluation, form.derivative_order)
    rho, mu = flow.density, flow.viscosity
    vel = velocity_from_stream(evaluation)
    out = evaluation.outputs
    d1 = evaluation.first_derivs
    p, s11, s12, s22 = out[:, PRESSURE], out[:, S11], out[:, S12], out[:, S22]

    inertia_u = rho * vel.u_t + rho * (vel.u * vel.u_x + vel.v * vel.u_y)
    inertia_v = rho * vel.v_t + rho * (vel.u * vel.v_x + vel.v * vel.v_y)

    if form is ResidualForm.SIGMA:
        r_u = inertia_u - (d1[:, S11, X] + d1[:, S12, Y])
        r_v = inertia_v - (d1[:, S12, X] + d1[:, S22, Y])
    else:
        d3 = evaluation.third_derivs
        p_x, p_y = d1[:, PRESSURE, X], d1[:, PRESSURE, Y]
        u_xx = d3[:, Y, X, X]
        v_yy = -d3[:, X, Y, Y]
        shear_y = d3[:, Y, Y, Y] - d3[:, X, X, Y]   # (u_y + v_x)_y
        shear_x = d3[:, Y, Y, X] - d3[:, X, X, X]   # (v_x + u_y)_x
        r_u = inertia_u - (-p_x + 2.0 * mu * u_xx) - mu * shear_y
        r_v = inertia_v - mu * shear_x - (-p_y + 2.0 * mu * v_yy)

    return GoverningResiduals(
        r_u=r_u,
        r_v=r_v,
        r_p=p + 0.5 * (s11 + s22),
        r_s11=(-p + 2.0 * mu * vel.u_x) - s11,
        r_s12=mu * (vel.u_y + vel.v_x) - s12,
        r_s22=(-p + 2.0 * mu * vel.v_y) - s22,
    )


def _as_targets(targets) -> torch.Tensor:
    if isinstance(targets, torch.Tensor):
        return targets.to(DTYPE)
    # numpy maps None to NaN under a float dtype
    return torch.as_tensor(np.asarray(targets, dtype=float), dtype=DTYPE)


def boundary_initial_residuals(predicted: torch.Tensor, targets) -> torch.Tensor:
    """Sum of squared (u', v', p') mismatches over the targets present (NaN or None = absent)."""
    predicted = torch.as_tensor(predicted, dtype=DTYPE)
    target = _as_targets(targets)
    present = ~torch.isnan(target)
    if target.numel() and (~present.any(dim=-1)).any():
        raise EmptyTargetError("boundary/initial point without any target value")
    diff = torch.where(present, predicted - torch.nan_to_num(target), torch.zeros_like(predicted))
    return (diff ** 2).sum(dim=-1)


def _check_finite(*tensors: torch.Tensor):
    for t in tensors:
        if not torch.isfinite(torch.as_tensor(t)).all():
            raise NonFiniteInputError("interface predictions contain non-finite values")


def interface_residuals(pred_i: torch.Tensor, pred_j: torch.Tensor) -> InterfaceResiduals:
    """Side-i deviation from the two-sided average, (pred_i - pred_j) / 2 per component."""
    pred_i = torch.as_tensor(pred_i, dtype=DTYPE)
    pred_j = torch.as_tensor(pred_j, dtype=DTYPE)
    _check_finite(pred_i, pred_j)
    half_jump = (pred_i - pred_j) / 2.0
    return InterfaceResiduals(half_jump[..., 0], half_jump[..., 1], half_jump[..., 2])


def flux_residuals(pred_i: torch.Tensor, pred_j: torch.Tensor, rho: float,
                   normal: Optional[Sequence[float]] = None) -> FluxResiduals:
    """Mismatch of rho*u_n and rho*u_n^2 + p across an interface.

    u_n is the velocity component along the interface normal; without a normal the
    x-component is used (interfaces of x-slabs).
    """
    pred_i = torch.as_tensor(pred_i, dtype=DTYPE)
    pred_j = torch.as_tensor(pred_j, dtype=DTYPE)
    _check_finite(pred_i, pred_j)
    if normal is None:
        un_i, un_j = pred_i[..., 0], pred_j[..., 0]
    else:
        nx, ny = float(normal[0]), float(normal[1])
        un_i = pred_i[..., 0] * nx + pred_i[..., 1] * ny
        un_j = pred_j[..., 0] * nx + pred_j[..., 1] * ny
    r_m = rho * (un_i - un_j)
    r_mu = (rho * un_i ** 2 + pred_i[..., 2]) - (rho * un_j ** 2 + pred_j[..., 2])
    return FluxResiduals(r_m, r_mu)


@dataclass
class SubdomainTerms:
    """Per-point residual pieces of one subdomain; interface/flux lists hold one entry per neighbour."""
    governing: GoverningResiduals
    boundary_sq: torch.Tensor
    initial_sq: torch.Tensor
    interfaces: List[InterfaceResiduals] = field(default_factory=list)
    fluxes: List[FluxResiduals] = field(default_factory=list)


@dataclass
class LossBreakdown:
    loss_g: Scalar
    loss_bc_ic: Scalar
    loss_interface: Scalar
    loss_flux: Scalar
    weights: LossWeights
    variant: Variant
    total: Scalar

    @classmethod
    def compose(cls, loss_g: Scalar, loss_bc_ic: Scalar, loss_interface: Scalar, loss_flux: Scalar,
                weights: LossWeights, variant: Union[str, Variant]) -> "LossBreakdown":
        """total = L_g + beta L_bc/ic (+ gamma L_interface) (+ delta L_flux) per variant.

        Terms the variant lacks, or whose weight is zero, are left out of the sum.
        """
        variant = Variant.parse(variant)
        total = loss_g + weights.beta * loss_bc_ic
        if variant in (Variant.WXPINN, Variant.WCPINN) and weights.gamma != 0:
            total = total + weights.gamma * loss_interface
        if variant is Variant.WCPINN and weights.delta != 0:
            total = total + weights.delta * loss_flux
        return cls(loss_g, loss_bc_ic, loss_interface, loss_flux, weights, variant, total)

    @classmethod
    def combine(cls, parts: Sequence["LossBreakdown"]) -> "LossBreakdown":
        """Sum of per-subdomain breakdowns, reduced in index order."""
        if not parts:
            raise DegenerateLossError("no subdomain losses to combine")
        first = parts[0]
        fields_ = [p.loss_g for p in parts], [p.loss_bc_ic for p in parts], \
            [p.loss_interface for p in parts], [p.loss_flux for p in parts], [p.total for p in parts]
        sums = []
        for values in fields_:
            acc = values[0]
            for value in values[1:]:
                acc = acc + value
            sums.append(acc)
        return cls(sums[0], sums[1], sums[2], sums[3], first.weights, first.variant, sums[4])

    def to_record(self) -> dict:
        def as_float(value):
            return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        return {
            "loss_g": as_float(self.loss_g),
            "loss_bc_ic": as_float(self.loss_bc_ic),
            "loss_interface": as_float(self.loss_interface),
            "loss_flux": as_float(self.loss_flux),
            "total": as_float(self.total),
        }


def _mean_or_zero(values: torch.Tensor) -> torch.Tensor:
    if values.numel() == 0:
        return torch.zeros((), dtype=DTYPE)
    return values.mean()


def assemble_loss(terms: SubdomainTerms, weights: LossWeights,
                  variant: Union[str, Variant]) -> LossBreakdown:
    """Loss of one subdomain: means over point counts, neighbour terms summed."""
    variant = Variant.parse(variant)
    g_sq = terms.governing.squared_sum()
    if g_sq.numel() == 0:
        raise DegenerateLossError("no interior collocation points to evaluate the governing loss")
    loss_g = g_sq.mean()
    loss_bc_ic = _mean_or_zero(terms.boundary_sq) + _mean_or_zero(terms.initial_sq)

    loss_interface = torch.zeros((), dtype=DTYPE)
    loss_flux = torch.zeros((), dtype=DTYPE)
    if variant is not Variant.WPINN:
        for residual in terms.interfaces:
            loss_interface = loss_interface + _mean_or_zero(residual.squared_sum())
    if variant is Variant.WCPINN:
        for residual in terms.fluxes:
            loss_flux = loss_flux + _mean_or_zero(residual.squared_sum())
    return LossBreakdown.compose(loss_g, loss_bc_ic, loss_interface, loss_flux, weights, variant)


def residual_frame(points: np.ndarray, residuals: GoverningResiduals) -> pd.DataFrame:
    values = residuals.stacked().detach().cpu().numpy()
    return pd.DataFrame(np.hstack([np.asarray(points, dtype=float)[:, :3], values]), columns=RESIDUAL_COLUMNS)
