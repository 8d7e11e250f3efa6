"""Frequency-domain transfer-matrix model of a reservoir-pipe-valve line.

State vectors are ``(q, h)``: discharge and head oscillation amplitudes.
All positions are absolute coordinates along the pipe; hyperbolic
arguments use the distance from the upstream reservoir ``p_up``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateSignalError, InvalidParameterError

__all__ = [
    "PipeSystem",
    "MeasurementGrid",
    "derived_geometry",
    "propagation_function",
    "characteristic_impedance",
    "field_matrix",
    "junction_matrix",
    "leak_field_matrix",
    "no_leak_head",
    "upstream_flow_from_probe",
    "steering_vector",
    "steering_matrix",
    "forward_heads",
    "phi_grid",
]


def derived_geometry(D, f, Q0, g):
    """Cross-section area and steady Darcy-Weisbach resistance.

    Returns
    -------
    A : float
        ``pi * D**2 / 4``.
    R : float
        ``f * Q0 / (g * D * A**2)``.
    """
    if D <= 0:
        raise InvalidParameterError(f"diameter must be positive, got {D}")
    if g <= 0:
        raise InvalidParameterError(f"gravity must be positive, got {g}")
    if Q0 < 0:
        raise InvalidParameterError(f"steady discharge must be non-negative, got {Q0}")
    A = np.pi * D**2 / 4.0
    R = f * Q0 / (g * D * A**2)
    return A, R


@dataclass(frozen=True)
class PipeSystem:
    """Physical constants of a single pipe between a reservoir and a valve.

    Defaults are the desk-scale benchmark line: 2 km, 0.5 m bore, 1000 m/s
    wave speed, with a leak orifice under 23.5 m of steady head.
    """

    length: float = 2000.0
    diameter: float = 0.5
    wave_speed: float = 1000.0
    friction: float = 0.02
    discharge: float = 0.0153
    gravity: float = 9.8
    leak_head: float = 23.5
    leak_elevation: float = 0.0
    p_up: float = 0.0
    p_down: float | None = None

    def __post_init__(self):
        if self.p_down is None:
            object.__setattr__(self, "p_down", self.p_up + self.length)
        if self.length <= 0 or self.wave_speed <= 0:
            raise InvalidParameterError("length and wave_speed must be positive")
        if not self.p_up < self.p_down:
            raise InvalidParameterError("p_up must be strictly upstream of p_down")
        if not np.isclose(self.p_down - self.p_up, self.length, rtol=1e-12, atol=0):
            raise InvalidParameterError("p_down - p_up must equal the pipe length")
        if self.leak_head - self.leak_elevation <= 0:
            raise InvalidParameterError("leak_head must exceed leak_elevation")
        # validates diameter / gravity / discharge
        derived_geometry(self.diameter, self.friction, self.discharge, self.gravity)

    @property
    def area(self):
        return derived_geometry(self.diameter, self.friction, self.discharge, self.gravity)[0]

    @property
    def resistance(self):
        return derived_geometry(self.diameter, self.friction, self.discharge, self.gravity)[1]

    @property
    def fundamental_frequency(self):
        """First resonant angular frequency ``a * pi / (2 l)``."""
        return self.wave_speed * np.pi / (2.0 * self.length)

    @property
    def leak_coefficient(self):
        """``sqrt(g / (2 (H0L - eL)))``; multiply by the leak size for the junction gain."""
        return np.sqrt(self.gravity / (2.0 * (self.leak_head - self.leak_elevation)))


def _freeze(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MeasurementGrid:
    """Sensor positions crossed with angular frequencies.

    Entry ``n = m * J + j`` (0-based) of every snapshot holds the quantity
    for sensor ``m`` at frequency ``j``; frequency runs fastest.
    """

    sensors: np.ndarray
    frequencies: np.ndarray
    pipe: PipeSystem = field(default_factory=PipeSystem)

    def __post_init__(self):
        x = _freeze(np.atleast_1d(self.sensors))
        w = _freeze(np.atleast_1d(self.frequencies))
        object.__setattr__(self, "sensors", x)
        object.__setattr__(self, "frequencies", w)
        if x.ndim != 1 or w.ndim != 1 or x.size == 0 or w.size == 0:
            raise InvalidParameterError("sensors and frequencies must be non-empty 1-D")
        if np.any(np.diff(x) <= 0):
            raise InvalidParameterError("sensor positions must be strictly increasing")
        if np.any(x <= self.pipe.p_up) or np.any(x > self.pipe.p_down):
            raise InvalidParameterError("sensor positions must lie in (p_up, p_down]")
        if np.any(w <= 0):
            raise InvalidParameterError("angular frequencies must be strictly positive")

    @classmethod
    def harmonic(cls, pipe=None, sensors=(1800.0, 2000.0), n_frequencies=32):
        """Frequencies ``j * w_th`` for ``j = 1..n_frequencies``."""
        pipe = PipeSystem() if pipe is None else pipe
        w = pipe.fundamental_frequency * np.arange(1, n_frequencies + 1)
        return cls(sensors=sensors, frequencies=w, pipe=pipe)

    @property
    def n_sensors(self):
        return self.sensors.size

    @property
    def n_frequencies(self):
        return self.frequencies.size

    @property
    def n_features(self):
        return self.n_sensors * self.n_frequencies

    def index(self, m, j):
        """Flat index of (sensor ``m``, frequency ``j``), both 0-based."""
        if not (0 <= m < self.n_sensors and 0 <= j < self.n_frequencies):
            raise IndexError((m, j))
        return m * self.n_frequencies + j

    def unravel(self, n):
        return divmod(n, self.n_frequencies)


def _check_w(w):
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise InvalidParameterError("angular frequency must be strictly positive")
    return w


def propagation_function(w, pipe):
    """Complex propagation constant ``mu`` (principal branch, ``Re mu >= 0``)."""
    w = _check_w(w)
    A, R = pipe.area, pipe.resistance
    return np.sqrt(-(w**2) + 1j * pipe.gravity * A * w * R + 0j) / pipe.wave_speed


def characteristic_impedance(w, pipe, mu=None):
    w = _check_w(w)
    if mu is None:
        mu = propagation_function(w, pipe)
    return mu * pipe.wave_speed**2 / (1j * w * pipe.gravity * pipe.area)


def _transfer(x, w, pipe):
    mu = propagation_function(w, pipe)
    Z = characteristic_impedance(w, pipe, mu)
    ch, sh = np.cosh(mu * x), np.sinh(mu * x)
    out = np.empty(np.broadcast(ch, Z).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = ch
    out[..., 0, 1] = -sh / Z
    out[..., 1, 0] = -Z * sh
    out[..., 1, 1] = ch
    return out


def field_matrix(x, w, pipe):
    """Transfer matrix of a leak-free segment of length ``x``; shape ``(..., 2, 2)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise InvalidParameterError("segment length must be non-negative")
    return _transfer(x, w, pipe)


def junction_matrix(s, pipe):
    """Point transfer matrix of an orifice of size ``s`` (m^2)."""
    lam = s * pipe.leak_coefficient
    return np.array([[1.0, -lam], [0.0, 1.0]], dtype=complex)


def leak_field_matrix(phi, x_m, w, pipe):
    """Size-independent leak perturbation ``M1`` so that the leaky transfer is ``M0(x) + s M1``."""
    d_phi = phi - pipe.p_up
    d_x = x_m - pipe.p_up
    if d_phi < 0 or phi > x_m:
        raise InvalidParameterError("leak must satisfy p_up <= phi <= x_m")
    mu = propagation_function(w, pipe)
    Z = characteristic_impedance(w, pipe, mu)
    sp, cp = np.sinh(mu * d_phi), np.cosh(mu * d_phi)
    sx, cx = np.sinh(mu * (d_x - d_phi)), np.cosh(mu * (d_x - d_phi))
    out = np.empty(np.shape(Z) + (2, 2), dtype=complex)
    out[..., 0, 0] = Z * sp * cx
    out[..., 0, 1] = -cp * cx
    out[..., 1, 0] = -(Z**2) * sp * sx
    out[..., 1, 1] = Z * cp * sx
    return pipe.leak_coefficient * out


def no_leak_head(x_m, w, q_up, pipe):
    """Head at ``x_m`` without a leak, given upstream flow and zero upstream head."""
    mu = propagation_function(w, pipe)
    Z = characteristic_impedance(w, pipe, mu)
    return -Z * np.sinh(mu * (x_m - pipe.p_up)) * q_up


def upstream_flow_from_probe(h_probe, eps, w, pipe):
    """Invert :func:`no_leak_head` from a head measured ``eps`` metres below the reservoir."""
    if eps <= 0:
        raise ZeroDivisionError("probe offset eps must be strictly positive")
    mu = propagation_function(w, pipe)
    Z = characteristic_impedance(w, pipe, mu)
    return -np.asarray(h_probe) / (Z * np.sinh(mu * eps))


def _q_up(grid, q_up):
    if q_up is None:
        return np.ones(grid.n_frequencies, dtype=complex)
    q_up = np.asarray(q_up, dtype=complex)
    if q_up.shape != (grid.n_frequencies,):
        raise InvalidParameterError(
            f"upstream flow spectrum needs {grid.n_frequencies} entries, got {q_up.shape}"
        )
    return q_up


def steering_matrix(phis, grid, q_up=None):
    """Rows are steering vectors ``g(phi)`` for each ``phi`` in ``phis``; shape ``(P, N)``."""
    pipe = grid.pipe
    phis = np.atleast_1d(np.asarray(phis, dtype=float))
    if np.any(phis < pipe.p_up) or np.any(phis > pipe.p_down):
        raise InvalidParameterError("leak location must lie in [p_up, p_down]")
    q = _q_up(grid, q_up)
    w = grid.frequencies
    mu = propagation_function(w, pipe)
    Z = characteristic_impedance(w, pipe, mu)
    d_phi = (phis - pipe.p_up)[:, None]
    head_side = Z * np.sinh(mu * d_phi) * q
    blocks = []
    for x in grid.sensors:
        d_x = x - pipe.p_up
        blocks.append(-pipe.leak_coefficient * Z * np.sinh(mu * (d_x - d_phi)) * head_side)
    return np.concatenate(blocks, axis=1)


def steering_vector(phi, grid, q_up=None):
    """Signature ``g(phi)`` of a unit-size leak, in grid order."""
    return steering_matrix([phi], grid, q_up)[0]


def forward_heads(phi, s, grid, q_up=None):
    """Sensor heads from the explicit chain ``M0(x - phi) J(s) M0(phi)``.

    Independent of the closed-form steering vector; used to cross-check it.
    """
    pipe = grid.pipe
    if not pipe.p_up <= phi <= pipe.p_down:
        raise InvalidParameterError("leak location must lie in [p_up, p_down]")
    q = _q_up(grid, q_up)
    junction = junction_matrix(s, pipe)
    out = np.empty(grid.n_features, dtype=complex)
    for m, x in enumerate(grid.sensors):
        for j, w in enumerate(grid.frequencies):
            state = np.array([q[j], 0.0], dtype=complex)
            state = _transfer(phi - pipe.p_up, w, pipe) @ state
            state = junction @ state
            # x - phi < 0 (leak past the sensor) is evaluated formally, matching g(phi)
            state = _transfer(x - phi, w, pipe) @ state
            out[grid.index(m, j)] = state[1]
    return out


def phi_grid(pipe, step=1.0, guard=1.0):
    """Candidate leak locations on ``[p_up + guard, p_down]``.

    The guard band excludes the reservoir end where every steering vector
    vanishes and the location statistic is 0/0.
    """
    if step <= 0:
        raise InvalidParameterError("grid step must be positive")
    if guard < 0 or guard >= pipe.length:
        raise InvalidParameterError("guard band must lie in [0, length)")
    start = pipe.p_up + guard
    n = int(np.floor((pipe.p_down - start) / step + 1e-9)) + 1
    grid = start + step * np.arange(n)
    if grid[-1] < pipe.p_down - 1e-9 * pipe.length:
        grid = np.append(grid, pipe.p_down)
    if guard == 0 and grid.size > 1:
        grid = grid[1:]  # p_up itself is degenerate
    return grid


def check_nondegenerate(G):
    if not np.any(np.abs(G) > 0):
        raise DegenerateSignalError("steering vectors vanish on the whole grid")
    return G
