"""Experiment configuration: INI-style sections of ``key = value`` pairs.

Every key is optional; an empty file yields the benchmark defaults. Example::

    [pipe]
    length = 2000
    diameter = 0.5

    [grid]
    sensors = 1800, 2000
    n_frequencies = 32

    [experiment]
    K = 600
    detectors = oracle, ld_scm, rd_scm
    pfa = 0.01
    snr_db = -9, -6, -3, 0
    trials = 10000
    seed = 0

Sections and keys are listed in ``SCHEMA`` below.
"""

import configparser
from dataclasses import dataclass, field, replace

from ..exceptions import ConfigError, InvalidParameterError
from ..hydraulics import MeasurementGrid, PipeSystem

DETECTORS = ("oracle", "ld_scm", "rd_scm", "ld_rscm")
CFAR_DETECTORS = ("ld_scm", "rd_scm")
MIN_TRIALS_PER_TAIL = 50


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _names(text):
    return tuple(v.strip() for v in text.replace(",", " ").split() if v.strip())


# section -> key -> (attribute, parser)
SCHEMA = {
    "pipe": {
        "length": ("length", float),
        "diameter": ("diameter", float),
        "wave_speed": ("wave_speed", float),
        "friction": ("friction", float),
        "discharge": ("discharge", float),
        "gravity": ("gravity", float),
        "leak_head": ("leak_head", float),
        "leak_elevation": ("leak_elevation", float),
        "p_up": ("p_up", float),
    },
    "grid": {
        "sensors": ("sensors", _floats),
        "n_frequencies": ("n_frequencies", int),
    },
    "leak": {
        "size": ("leak_size", float),
        "location": ("leak_location", float),
    },
    "noise": {
        "correlation": ("correlation", float),
    },
    "experiment": {
        "k": ("K", int),
        "detectors": ("detectors", _names),
        "pfa": ("pfa", _floats),
        "snr_db": ("snr_db", _floats),
        "trials": ("trials", int),
        "calibration_trials": ("calibration_trials", int),
        "seed": ("seed", int),
        "roc_snr_db": ("roc_snr_db", float),
        "roc_points": ("roc_points", int),
    },
    "search": {
        "phi_step": ("phi_step", float),
        "phi_guard": ("phi_guard", float),
        "rho_step": ("rho_step", float),
        "kappa": ("kappa", float),
    },
    "theory": {
        "rho": ("theory_rho", _floats),
        "snr_db": ("theory_snr_db", float),
    },
    "output": {
        "path": ("output", str),
    },
}

PIPE_KEYS = tuple(SCHEMA["pipe"])


@dataclass(frozen=True)
class ExperimentConfig:
    pipe: PipeSystem = field(default_factory=PipeSystem)
    sensors: tuple = (1800.0, 2000.0)
    n_frequencies: int = 32
    leak_size: float = 1.4e-4
    leak_location: float = 600.0
    correlation: float = 0.9
    K: int = 600
    detectors: tuple = ("oracle", "ld_scm", "rd_scm")
    pfa: tuple = (0.01,)
    snr_db: tuple = (-9.0, -6.0, -3.0, 0.0)
    trials: int = 10_000
    calibration_trials: int | None = None
    seed: int = 0
    roc_snr_db: float = -3.0
    roc_points: int = 25
    phi_step: float = 1.0
    phi_guard: float = 1.0
    rho_step: float = 0.01
    kappa: float = 0.05
    theory_rho: tuple = (0.1, 0.5, 0.9)
    theory_snr_db: float = -3.0
    output: str | None = None

    @property
    def grid(self):
        return MeasurementGrid.harmonic(self.pipe, self.sensors, self.n_frequencies)

    @property
    def n_features(self):
        return len(self.sensors) * self.n_frequencies

    @property
    def n_calibration_trials(self):
        return self.trials if self.calibration_trials is None else self.calibration_trials

    def validate(self):
        for name in self.detectors:
            if name not in DETECTORS:
                raise ConfigError(f"experiment.detectors: unknown detector {name!r}")
        if not self.detectors:
            raise ConfigError("experiment.detectors: at least one detector is required")
        if not self.pfa or any(not 0 < p <= 1 for p in self.pfa):
            raise ConfigError("experiment.pfa: values must lie in (0, 1]")
        need = MIN_TRIALS_PER_TAIL / min(self.pfa)
        if self.trials < need:
            raise ConfigError(
                f"experiment.trials: {self.trials} trials cannot resolve P_FA={min(self.pfa)};"
                f" need >= {need:.0f}"
            )
        if self.n_calibration_trials < need:
            raise ConfigError(f"experiment.calibration_trials: need >= {need:.0f}")
        if not self.snr_db:
            raise ConfigError("experiment.snr_db: SNR grid must be non-empty")
        if self.K < 1:
            raise ConfigError("experiment.K: must be >= 1")
        if not 0 <= self.correlation < 1:
            raise ConfigError("noise.correlation: must lie in [0, 1)")
        if not self.pipe.p_up < self.leak_location <= self.pipe.p_down:
            raise ConfigError("leak.location: must lie inside the pipe")
        if not 0 < self.kappa < 1:
            raise ConfigError("search.kappa: must lie in (0, 1)")
        if any(not 0 < r <= 1 for r in self.theory_rho):
            raise ConfigError("theory.rho: values must lie in (0, 1]")
        try:
            self.grid
        except InvalidParameterError as exc:
            raise ConfigError(f"grid: {exc}") from exc
        return self

    def paper_scale(self):
        """Original protocol: 1e5 trials at P_FA = 1e-3."""
        return replace(self, trials=100_000, pfa=(1e-3,), calibration_trials=None).validate()

    def override(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate() if kw else self


def parse_config(text, source="<string>"):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    pipe_kw, kw = {}, {}
    for section in parser.sections():
        keys = SCHEMA.get(section.lower())
        if keys is None:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in keys:
                raise ConfigError(f"{source}: unknown key {section}.{key}")
            attr, conv = keys[key]
            try:
                value = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key}: {raw!r}") from exc
            (pipe_kw if section.lower() == "pipe" else kw)[attr] = value
    try:
        pipe = PipeSystem(**pipe_kw)
    except InvalidParameterError as exc:
        raise ConfigError(f"{source}: pipe: {exc}") from exc
    return ExperimentConfig(pipe=pipe, **kw).validate()


def load_config(path=None):
    """Read a config file; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig().validate()
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))
