"""Large intelligent surface model: element grid, phase-profile synthesis,
discrete quantization, and array-factor / reflection-gain evaluation.

Panel-local frame: elements lie in the local x-y plane centered on the panel
pose; the illuminated side is local +z. Incident directions are propagation
directions (pointing into the panel), outgoing directions point away from it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import BacksidePanel, ValidationError
from .scene import Pose

SPEED_OF_LIGHT = 299_792_458.0

TWO_PI = 2.0 * math.pi

#: Floor used instead of -inf when the array factor vanishes.
GAIN_FLOOR_DB = -200.0


@dataclass(frozen=True)
class WaveContext:
    frequency_hz: float

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ValidationError("frequency_hz must be > 0")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.frequency_hz

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength_m


@dataclass(frozen=True)
class RisPanel:
    rows: int
    cols: int
    spacing_m: float
    pose: Pose = Pose((0.0, 0.0, 0.0))
    element_gain_dbi: float = 5.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValidationError("rows and cols must be >= 1")
        if self.spacing_m <= 0:
            raise ValidationError("spacing_m must be > 0")

    @property
    def num_elements(self) -> int:
        return self.rows * self.cols

    def element_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened panel-frame element coordinates, grid centered on the pose."""
        r = np.arange(self.rows) - (self.rows - 1) / 2.0
        c = np.arange(self.cols) - (self.cols - 1) / 2.0
        yy, xx = np.meshgrid(r * self.spacing_m, c * self.spacing_m, indexing="ij")
        return xx.ravel().astype(float), yy.ravel().astype(float)

    def element_world_positions(self) -> np.ndarray:
        ex, ey = self.element_xy()
        local = np.column_stack([ex, ey, np.zeros_like(ex)])
        return self.pose.pos() + local @ self.pose.matrix().T

    def to_local(self, direction) -> np.ndarray:
        """Rotate a world direction into the panel frame."""
        return self.pose.matrix().T @ np.asarray(direction, dtype=float)

    @property
    def normal_world(self) -> np.ndarray:
        return self.pose.matrix() @ np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class PhaseProfile:
    phases_rad: np.ndarray  # rows x cols, values in [0, 2*pi)
    quantization_bits: int = 0

    def __post_init__(self):
        arr = np.asarray(self.phases_rad, dtype=float)
        arr = np.mod(arr, TWO_PI)
        arr.setflags(write=False)
        object.__setattr__(self, "phases_rad", arr)
        if self.quantization_bits < 0:
            raise ValidationError("quantization_bits must be >= 0")
        if self.quantization_bits >= 1:
            step = TWO_PI / (1 << self.quantization_bits)
            if not np.allclose(np.mod(arr / step, 1.0) * (np.mod(arr / step, 1.0) - 1.0), 0.0, atol=1e-9):
                raise ValidationError("phases are not on the declared quantization grid")

    @property
    def shape(self) -> tuple[int, int]:
        return self.phases_rad.shape  # type: ignore[return-value]


def _unit(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    n = np.linalg.norm(arr)
    if abs(n - 1.0) > 1e-6:
        raise ValidationError(f"{name} must be unit-norm, |v| = {n}")
    return arr


def _check_illuminated(panel: RisPanel, incident_local, outgoing_local) -> None:
    # both vectors point from the panel toward their endpoint; the symmetric
    # convention makes a tx/rx swap leave the exponent sum unchanged
    if incident_local[2] <= 0:
        raise BacksidePanel("incident endpoint is behind the panel face")
    if outgoing_local[2] <= 0:
        raise BacksidePanel("outgoing endpoint is behind the panel face")


def design_steering_profile(panel: RisPanel, incident_dir, target_dir,
                            wave: WaveContext) -> PhaseProfile:
    """Continuous profile co-phasing all element contributions toward target_dir."""
    uin = panel.to_local(_unit(incident_dir, "incident_dir"))
    uout = panel.to_local(_unit(target_dir, "target_dir"))
    _check_illuminated(panel, uin, uout)
    w = uin + uout
    ex, ey = panel.element_xy()
    phases = -wave.wavenumber * (ex * w[0] + ey * w[1])
    return PhaseProfile(np.mod(phases, TWO_PI).reshape(panel.rows, panel.cols))


def design_focusing_profile(panel: RisPanel, source_pos, focus_pos,
                            wave: WaveContext) -> PhaseProfile:
    """Profile equalizing the total source-element-focus path phase."""
    src = np.asarray(source_pos, dtype=float)
    foc = np.asarray(focus_pos, dtype=float)
    for name, p in (("source_pos", src), ("focus_pos", foc)):
        local = panel.to_local(p - panel.pose.pos())
        if local[2] <= 0:
            raise BacksidePanel(f"{name} is behind or on the panel plane")
    elems = panel.element_world_positions()
    dist = np.linalg.norm(src - elems, axis=1) + np.linalg.norm(foc - elems, axis=1)
    phases = -wave.wavenumber * dist
    return PhaseProfile(np.mod(phases, TWO_PI).reshape(panel.rows, panel.cols))


def quantize_profile(profile: PhaseProfile, bits: int) -> PhaseProfile:
    """Round each phase to the nearest of the 2**bits levels on the circle.

    Exactly-midway phases snap to the lower-index level.
    """
    if bits < 1:
        raise ValidationError("bits must be >= 1")
    levels = 1 << bits
    step = TWO_PI / levels
    x = np.mod(profile.phases_rad, TWO_PI) / step
    k_lo = np.floor(x)
    d_lo = x - k_lo
    d_hi = 1.0 - d_lo
    k_lo_idx = (k_lo.astype(int)) % levels
    k_hi_idx = (k_lo.astype(int) + 1) % levels
    pick_hi = (d_hi < d_lo) | ((d_hi == d_lo) & (k_hi_idx < k_lo_idx))
    idx = np.where(pick_hi, k_hi_idx, k_lo_idx)
    return PhaseProfile(idx * step, quantization_bits=bits)


def array_factor(panel: RisPanel, profile: PhaseProfile, incident_dir,
                 outgoing_dir, wave: WaveContext) -> complex:
    """Complex element sum AF = sum_n exp(j(phi_n + k r_n . (u_in + u_out)))."""
    if profile.shape != (panel.rows, panel.cols):
        raise ValidationError(
            f"profile shape {profile.shape} does not match panel {panel.rows}x{panel.cols}"
        )
    uin = panel.to_local(_unit(incident_dir, "incident_dir"))
    uout = panel.to_local(_unit(outgoing_dir, "outgoing_dir"))
    w = uin + uout
    ex, ey = panel.element_xy()
    return kernels.array_factor_sum(
        profile.phases_rad.ravel(), ex, ey, float(w[0]), float(w[1]), wave.wavenumber
    )


def reflection_gain_db(panel: RisPanel, profile: PhaseProfile, incident_dir,
                       outgoing_dir, wave: WaveContext) -> float:
    """Absolute reflection gain 20*log10|AF| + element gain, floored at -200 dB."""
    af = abs(array_factor(panel, profile, incident_dir, outgoing_dir, wave))
    if af <= 0.0:
        return GAIN_FLOOR_DB
    return max(20.0 * math.log10(af) + panel.element_gain_dbi, GAIN_FLOOR_DB)
