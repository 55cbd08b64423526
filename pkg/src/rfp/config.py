"""Run configuration: parsing, validation, defaults, serialization.

Config files are line-oriented ``key = value`` with ``#`` comments and
dotted section prefixes, e.g.::

    domain.p_min = 0.3
    run.t_final  = 10.0    # normalized collision times

Unknown keys are rejected so typos fail fast.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

from .indicators import AmrConfig
from .integrators import SolverConfig
from .physics import PlasmaParams


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # domain / root grid / level window
    p_min: float = 0.3
    p_max: float = 60.0
    xi_min: float = -1.0
    xi_max: float = 1.0
    n_p: int = 48
    n_xi: int = 8
    min_level: int = 0
    max_level: int = 4
    # numerics
    advection: str = "muscl"
    limiter: str = "vanleer"
    bc_mode: str = "physical"          # physical | mms | zeroflux
    integrator: str = "esdirk2"        # esdirk2 | ssp-rk3
    cfl: float = 0.9                   # explicit integrator only
    # physics
    E: float = 0.0
    alpha: float = 0.0
    vt_hat: float = 0.1
    Z: float = 1.0
    ln_lambda: float = 15.0
    knock_on: bool = False
    # manufactured-solution mode
    mms_solution: str = "sin_exp"
    mms_epsilon: float = 0.05
    mms_levels: str = "2-4,3-5,4-6,5-7"
    # implicit solver
    solver: SolverConfig = field(default_factory=SolverConfig)
    # adaptation
    amr: AmrConfig = field(default_factory=AmrConfig)
    # run control
    t_final: float = float("nan")
    dt_init: float = 1e-3
    output_dir: str = "out"
    snapshot_every: int = 0
    ic: str = "maxwellian_bump"        # maxwellian | maxwellian_bump | mms
    # prediction study
    rf_list: str = "32"
    window_start: float = 0.5
    threads: int = 1

    def validate(self) -> None:
        if not (self.p_min > 0.0 and self.p_min < self.p_max):
            raise ConfigError("need 0 < domain.p_min < domain.p_max")
        if math.isnan(self.t_final) or self.t_final <= 0.0:
            raise ConfigError("run.t_final is required and must be positive")
        if self.bc_mode not in ("physical", "mms", "zeroflux"):
            raise ConfigError(f"unknown bc.mode {self.bc_mode!r}")
        if self.bc_mode == "physical" and not (self.xi_min == -1.0 and self.xi_max == 1.0):
            raise ConfigError("physical runs require xi in [-1, 1]")
        if self.integrator not in ("esdirk2", "ssp-rk3"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")
        if self.advection not in ("muscl", "quick"):
            raise ConfigError(f"unknown advection scheme {self.advection!r}")
        if self.limiter not in ("minmod", "vanleer"):
            raise ConfigError(f"unknown limiter {self.limiter!r}")
        if not (0 <= self.min_level <= self.max_level):
            raise ConfigError("need 0 <= levels.min <= levels.max")
        if self.bc_mode == "mms" and self.knock_on:
            raise ConfigError("knock-on source is not available in mms mode")
        if self.ic not in ("maxwellian", "maxwellian_bump", "mms"):
            raise ConfigError(f"unknown initial condition {self.ic!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        try:
            AmrConfig(**{f.name: getattr(self.amr, f.name) for f in fields(AmrConfig)})
        except ValueError as err:
            raise ConfigError(str(err)) from err
        try:
            self.params()
        except ValueError as err:
            raise ConfigError(str(err)) from err
        for spec in self.rf_list.split(","):
            if spec.strip() and not spec.strip().isdigit():
                raise ConfigError(f"bad prediction.rf_list entry {spec!r}")
        for rng in self.mms_levels.split(","):
            parts = rng.strip().split("-")
            if len(parts) != 2 or not all(s.isdigit() for s in parts):
                raise ConfigError(f"bad mms.levels entry {rng!r}")

    def params(self) -> PlasmaParams:
        if self.bc_mode == "mms":
            model = "constant" if self.mms_solution == "sin_exp" else "off"
            return PlasmaParams(E=self.E, alpha=0.0, vt_hat=self.vt_hat,
                                Z=self.Z, ln_lambda=self.ln_lambda,
                                knock_on=False, collision_model=model,
                                epsilon=self.mms_epsilon)
        return PlasmaParams(E=self.E, alpha=self.alpha, vt_hat=self.vt_hat,
                            Z=self.Z, ln_lambda=self.ln_lambda,
                            knock_on=self.knock_on)

    def level_setups(self) -> list[tuple[int, int]]:
        out = []
        for rng in self.mms_levels.split(","):
            lo, hi = (int(s) for s in rng.strip().split("-"))
            out.append((lo, hi))
        return out

    def rf_values(self) -> list[int]:
        return [int(s) for s in self.rf_list.split(",") if s.strip()]


_KEYMAP = {
    "domain.p_min": ("p_min", float),
    "domain.p_max": ("p_max", float),
    "domain.xi_min": ("xi_min", float),
    "domain.xi_max": ("xi_max", float),
    "grid.n_p": ("n_p", int),
    "grid.n_xi": ("n_xi", int),
    "levels.min": ("min_level", int),
    "levels.max": ("max_level", int),
    "scheme.advection": ("advection", str),
    "scheme.limiter": ("limiter", str),
    "bc.mode": ("bc_mode", str),
    "integrator.kind": ("integrator", str),
    "integrator.cfl": ("cfl", float),
    "params.E": ("E", float),
    "params.alpha": ("alpha", float),
    "params.vt_hat": ("vt_hat", float),
    "params.Z": ("Z", float),
    "params.ln_lambda": ("ln_lambda", float),
    "params.knock_on": ("knock_on", bool),
    "mms.solution": ("mms_solution", str),
    "mms.epsilon": ("mms_epsilon", float),
    "mms.levels": ("mms_levels", str),
    "run.t_final": ("t_final", float),
    "run.dt_init": ("dt_init", float),
    "run.output_dir": ("output_dir", str),
    "run.snapshot_every": ("snapshot_every", int),
    "run.ic": ("ic", str),
    "run.threads": ("threads", int),
    "prediction.rf_list": ("rf_list", str),
    "prediction.window_start": ("window_start", float),
}

_SOLVER_KEYS = {
    "solver.newton_rtol": ("newton_rtol", float),
    "solver.newton_atol": ("newton_atol", float),
    "solver.newton_max_iter": ("newton_max_iter", int),
    "solver.gmres_rtol": ("gmres_rtol", float),
    "solver.gmres_restart": ("gmres_restart", int),
    "solver.gmres_max_restarts": ("gmres_max_restarts", int),
    "solver.jfnk_scale": ("jfnk_scale", float),
    "solver.step_tol": ("step_tol", float),
    "solver.step_atol": ("step_atol", float),
    "solver.step_rtol": ("step_rtol", float),
    "solver.step_safety": ("step_safety", float),
    "solver.dt_min": ("dt_min", float),
    "solver.dt_max": ("dt_max", float),
    "solver.precond": ("precond", str),
}

_AMR_KEYS = {
    "amr.indicator": ("indicator", str),
    "amr.chi_min": ("chi_min", float),
    "amr.chi_max": ("chi_max", float),
    "amr.epsilon": ("epsilon", float),
    "amr.n_adapt": ("n_adapt", int),
    "amr.n_pred": ("n_pred", int),
    "amr.pred_cfl": ("pred_cfl", float),
}


def _convert(key: str, raw: str, typ):
    raw = raw.strip()
    try:
        if typ is bool:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for {key}: {raw!r}") from err


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    amr_kw = {}
    solver_kw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key in _KEYMAP:
            attr, typ = _KEYMAP[key]
            setattr(cfg, attr, _convert(key, raw, typ))
        elif key in _SOLVER_KEYS:
            attr, typ = _SOLVER_KEYS[key]
            solver_kw[attr] = _convert(key, raw, typ)
        elif key in _AMR_KEYS:
            attr, typ = _AMR_KEYS[key]
            amr_kw[attr] = _convert(key, raw, typ)
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    try:
        if solver_kw:
            cfg.solver = SolverConfig(**{**_solver_asdict(cfg.solver), **solver_kw})
        if amr_kw:
            cfg.amr = AmrConfig(**{**_amr_asdict(cfg.amr), **amr_kw})
    except ValueError as err:
        raise ConfigError(str(err)) from err
    cfg.validate()
    return cfg


def _solver_asdict(s: SolverConfig) -> dict:
    return {f.name: getattr(s, f.name) for f in fields(SolverConfig)}


def _amr_asdict(a: AmrConfig) -> dict:
    return {f.name: getattr(a, f.name) for f in fields(AmrConfig)}


def load_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """Apply ``key=value`` strings on top of a parsed configuration."""
    lines = [ov if "=" in ov else f"{ov}=" for ov in overrides]
    merged = serialize_config(cfg) + "\n" + "\n".join(lines)
    return parse_config(merged)


def serialize_config(cfg: RunConfig) -> str:
    """Round-trippable textual form of a configuration."""
    out = []
    for key, (attr, typ) in _KEYMAP.items():
        val = getattr(cfg, attr)
        if isinstance(val, float) and math.isnan(val):
            continue
        out.append(f"{key} = {val}")
    for key, (attr, _) in _SOLVER_KEYS.items():
        out.append(f"{key} = {getattr(cfg.solver, attr)}")
    for key, (attr, _) in _AMR_KEYS.items():
        out.append(f"{key} = {getattr(cfg.amr, attr)}")
    return "\n".join(out) + "\n"
