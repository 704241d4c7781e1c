"""Experiment configuration: TOML schema, validation and round-trip emission."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
import warnings

import tomli
import tomli_w

from .potentials import FAMILIES, AssumptionError, PotentialSpec

DIM_MODES = ("line_1d", "radial_3d")


class ConfigError(ValueError):
    pass


class AssumptionWarning(UserWarning):
    pass


class AssumptionViolations(AssumptionError):
    def __init__(self, violations):
        self.violations = list(violations)
        labels = "; ".join(f"{lab}: {msg}" for lab, msg in self.violations)
        ValueError.__init__(self, labels)
        self.label = self.violations[0][0]


@dataclass(frozen=True)
class Packet:
    center: tuple = (0.0,)
    momentum: tuple = (0.0,)
    width: float = 1.0
    norm: float = 1.0


@dataclass(frozen=True)
class GridParams:
    heavy_points: int = 128
    heavy_half_width: float = 16.0
    light_points: int = 512
    light_half_width: float = 144.0


@dataclass(frozen=True)
class DecoherenceParams:
    R0: float = 4.0
    P0: float = 4.0
    sigma: float = 1.0
    grid_points: int = 1024
    grid_half_width: float = 32.0


@dataclass(frozen=True)
class DecayParams:
    t_grid: tuple = (2.0, 3.0, 4.5, 6.5, 9.5, 14.0, 20.0)
    R_samples: tuple = (0.0,)
    width: float = 0.5
    points: int = 4096
    half_width: float = 256.0


@dataclass(frozen=True)
class CommutatorParams:
    family: str = "compact_bump"
    amplitude: float = 1.0
    range: float = 2.0
    f_width: float = 1.0
    t_grid: tuple = (0.01, 0.0165, 0.0272, 0.045, 0.074, 0.122, 0.2)
    horizon: float = 0.2
    points: int = 512
    half_width: float = 16.0


@dataclass(frozen=True)
class SystemConfig:
    K: int = 1
    N: int = 1
    dim_mode: str = "line_1d"
    epsilon: tuple = (0.125, 0.0625, 0.03125, 0.015625)
    alpha: float = 1.5
    potential: PotentialSpec = PotentialSpec("gaussian")
    heavy_potential: PotentialSpec | None = None
    grid: GridParams = GridParams()
    initial_phi: Packet = Packet((0.0,), (-2.0,), 1.0)
    initial_chis: tuple = (Packet((-10.0,), (2.0,), 1.5),)
    time: tuple = (1.0,)
    dt_fraction: float = 0.1
    dt_max: float = 0.01
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    allow_attractive: bool = False
    decoherence: DecoherenceParams = DecoherenceParams()
    decay: DecayParams = DecayParams()
    commutators: CommutatorParams = CommutatorParams()

    def __hash__(self):
        return hash(emit(self))

    def replace(self, **kw) -> "SystemConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SystemConfig(**d)


DEFAULT_TOLERANCES = {
    "wave_operator": 1e-3,
    "interaction": 5e-4,
    "unitarity": 1e-10,
    "boundary": 1e-6,
    "self_convergence": 0.05,
    "wave_operator_dt": 0.05,
}

_SECTIONS = {
    "system": {"K", "N", "dim_mode", "epsilon", "alpha", "allow_attractive"},
    "grid": set(GridParams.__dataclass_fields__),
    "potential": {"family", "amplitude", "range", "heavy"},
    "initial": {"phi", "chis"},
    "time": {"t", "dt_fraction", "dt_max"},
    "tolerances": set(DEFAULT_TOLERANCES),
    "decoherence": set(DecoherenceParams.__dataclass_fields__),
    "decay": set(DecayParams.__dataclass_fields__),
    "commutators": set(CommutatorParams.__dataclass_fields__),
}
REQUIRED = ("system", "grid", "potential", "initial", "time", "tolerances")
_PACKET_KEYS = set(Packet.__dataclass_fields__)
_POT_KEYS = {"family", "amplitude", "range"}


def _check_keys(where: str, got, allowed):
    extra = set(got) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(extra)}")


def _tuple(v):
    return tuple(float(x) for x in (v if isinstance(v, (list, tuple)) else [v]))


def _packet(where: str, d: dict) -> Packet:
    _check_keys(where, d, _PACKET_KEYS)
    return Packet(_tuple(d.get("center", 0.0)), _tuple(d.get("momentum", 0.0)),
                  float(d.get("width", 1.0)), float(d.get("norm", 1.0)))


def _potential(where: str, d: dict, allow_attractive: bool) -> PotentialSpec:
    _check_keys(where, d, _POT_KEYS)
    fam = d.get("family", "gaussian")
    if fam not in FAMILIES:
        raise ConfigError(f"[{where}] family must be one of {FAMILIES}")
    amp = float(d.get("amplitude", 1.0))
    return PotentialSpec(fam, amp, float(d.get("range", 1.0)),
                         sign_constraint=not allow_attractive)


def parse_config(data: dict) -> SystemConfig:
    _check_keys("top level", data, _SECTIONS)
    missing = [s for s in REQUIRED if s not in data]
    if missing:
        raise ConfigError(f"missing required section(s): {missing}")
    for sec, keys in _SECTIONS.items():
        if sec in data:
            _check_keys(sec, data[sec], keys)
    s = data["system"]
    allow = bool(s.get("allow_attractive", False))
    p = dict(data["potential"])
    heavy = p.pop("heavy", None)
    try:
        potential = _potential("potential", p, allow or int(s.get("K", 1)) > 1)
    except AssumptionError as exc:
        raise AssumptionViolations([("(A-5)", "V >= 0 is required for K = 1; amplitude "
                                     f"{p.get('amplitude')} is attractive")]) from exc
    heavy_pot = (PotentialSpec(heavy.get("family", "gaussian"), float(heavy.get("amplitude", 1.0)),
                               float(heavy.get("range", 1.0)), sign_constraint=False)
                 if heavy else None)
    if heavy:
        _check_keys("potential.heavy", heavy, _POT_KEYS)
    init = data["initial"]
    if "phi" not in init or "chis" not in init:
        raise ConfigError("[initial] needs phi and chis")
    chis = tuple(_packet(f"initial.chis[{i}]", c) for i, c in enumerate(init["chis"]))
    t = data["time"]
    tol = dict(DEFAULT_TOLERANCES)
    tol.update({k: float(v) for k, v in data["tolerances"].items()})
    sub = {}
    for name, cls in (("decoherence", DecoherenceParams), ("decay", DecayParams),
                      ("commutators", CommutatorParams)):
        raw = dict(data.get(name, {}))
        for k, v in raw.items():
            if isinstance(v, list):
                raw[k] = tuple(v)
        sub[name] = cls(**raw)
    cfg = SystemConfig(
        K=int(s.get("K", 1)), N=int(s.get("N", len(chis))), dim_mode=s.get("dim_mode", "line_1d"),
        epsilon=_tuple(s.get("epsilon", 0.0625)), alpha=float(s.get("alpha", 0.0)),
        potential=potential, heavy_potential=heavy_pot,
        grid=GridParams(**{k: type(getattr(GridParams(), k))(v) for k, v in data["grid"].items()}),
        initial_phi=_packet("initial.phi", init["phi"]), initial_chis=chis,
        time=_tuple(t.get("t", 1.0)), dt_fraction=float(t.get("dt_fraction", 0.1)),
        dt_max=float(t.get("dt_max", 0.01)), tolerances=tol, allow_attractive=allow, **sub)
    validate(cfg)
    return cfg


def validate(cfg: SystemConfig) -> list[str]:
    """Raise AssumptionViolations for hard violations; return warning messages."""
    bad = []
    if cfg.dim_mode not in DIM_MODES:
        raise ConfigError(f"dim_mode must be one of {DIM_MODES}")
    if cfg.K < 1 or cfg.N < 1:
        raise ConfigError("K and N must be positive")
    if len(cfg.initial_chis) != cfg.N:
        raise ConfigError(f"N = {cfg.N} but {len(cfg.initial_chis)} light packets given")
    if any(not 0 < e <= 1 for e in cfg.epsilon):
        raise ConfigError("every epsilon must lie in (0, 1]")
    if cfg.alpha < 0:
        raise ConfigError("alpha must be nonnegative")
    if abs(cfg.initial_phi.norm - 1.0) > 1e-12:
        bad.append(("(A-2)", f"||phi|| = {cfg.initial_phi.norm} but must equal 1"))
    label = "(A-6)" if cfg.K == 1 else "(A-4)"
    for j, c in enumerate(cfg.initial_chis):
        if abs(c.norm - 1.0) > 1e-12:
            bad.append((label, f"||chi_{j + 1}|| = {c.norm} but must equal 1"))
    for p in [cfg.initial_phi, *cfg.initial_chis]:
        if not p.width > 0:
            bad.append((label, "packet width must be positive"))
    if cfg.K == 1 and cfg.potential.amplitude < 0 and not cfg.allow_attractive:
        bad.append(("(A-5)", "V >= 0 is required for K = 1"))
    if bad:
        raise AssumptionViolations(bad)
    notes = []
    if cfg.K > 1 and cfg.alpha > 0:
        from .potentials import smallness_thresholds
        rep = smallness_thresholds(cfg.potential, cfg.K, cfg.alpha)
        if not rep.admissible:
            msg = (f"smallness condition violated: alpha = {cfg.alpha:g} is not below alpha* = "
                   f"{rep.alpha_star:.4g} for K = {cfg.K}")
            warnings.warn(msg, AssumptionWarning, stacklevel=2)
            notes.append(msg)
    return notes


def load_config(path) -> SystemConfig:
    with open(path, "rb") as fh:
        return parse_config(tomli.load(fh))


def loads_config(text: str) -> SystemConfig:
    return parse_config(tomli.loads(text))


def _pot_dict(p: PotentialSpec) -> dict:
    return {"family": p.family, "amplitude": p.amplitude, "range": p.range}


def _packet_dict(p: Packet) -> dict:
    return {"center": list(p.center), "momentum": list(p.momentum), "width": p.width,
            "norm": p.norm}


def to_dict(cfg: SystemConfig) -> dict:
    pot = _pot_dict(cfg.potential)
    if cfg.heavy_potential is not None:
        pot["heavy"] = _pot_dict(cfg.heavy_potential)

    def plain(dc):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(dc).items()}

    return {
        "system": {"K": cfg.K, "N": cfg.N, "dim_mode": cfg.dim_mode,
                   "epsilon": list(cfg.epsilon), "alpha": cfg.alpha,
                   "allow_attractive": cfg.allow_attractive},
        "grid": asdict(cfg.grid),
        "potential": pot,
        "initial": {"phi": _packet_dict(cfg.initial_phi),
                    "chis": [_packet_dict(c) for c in cfg.initial_chis]},
        "time": {"t": list(cfg.time), "dt_fraction": cfg.dt_fraction, "dt_max": cfg.dt_max},
        "tolerances": dict(cfg.tolerances),
        "decoherence": plain(cfg.decoherence),
        "decay": plain(cfg.decay),
        "commutators": plain(cfg.commutators),
    }


def emit(cfg: SystemConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def dt_for(cfg: SystemConfig, epsilon: float) -> float:
    """Joint time step: dt <= min(dt_max, dt_fraction * epsilon)."""
    return min(cfg.dt_max, cfg.dt_fraction * epsilon)


def fast_dt(cfg: SystemConfig, epsilon: float) -> float:
    return dt_for(cfg, epsilon) / epsilon


__all__ = ["SystemConfig", "Packet", "GridParams", "load_config", "loads_config", "emit",
           "parse_config", "validate", "ConfigError", "AssumptionViolations", "dt_for"]
