"""Scenario files and assembly of every controller mode from one scenario."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import zq_lwe as zq
from .controllers import (ActuatorCodec, QuantizedController, RingController,
                          additive_controller, build_integer, encrypt_controller)
from .convert import GivenController, convert_controller, load_controller_json
from .quantize import ScaleSet, size_window

MODES = ("ideal", "converted", "quantized", "integer", "ring", "encrypted", "additive")
PROFILE_NAMES = ("paper", "desk")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario."""


def profile_params(name: str) -> zq.LweParams:
    from .plant_sim.preset import PROFILES

    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return zq.setup(**PROFILES[name])


def seed_streams(seed: int):
    """Independent seeds for the key, controller encryption and the actuator."""
    return [int(seed), 0], [int(seed), 1], [int(seed), 2]


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce a run.

    ``plant`` and ``controller`` name a preset or hold inline matrices (the
    controller may also be a path to a controller JSON file, relative to the
    scenario file).
    """

    name: str
    plant: object = "three_inertia"
    controller: object = "three_inertia"
    scales: ScaleSet = None
    quantized_scales: ScaleSet = None
    charpoly: list | None = None
    targets: list | None = None
    profile: str = "paper"
    horizon: int = 600
    reference: object = field(default_factory=lambda: [1.0])
    modes: tuple = ("ideal", "encrypted")
    seed: int = 0
    u_range: tuple | None = None
    eps: float = 0.01
    M: float | None = None
    eta: float | None = None
    out_dir: str = "out"
    base_dir: str = "."

    def __post_init__(self):
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown modes {bad}; allowed {list(MODES)}")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.profile not in PROFILE_NAMES:
            raise ConfigError(f"unknown profile {self.profile!r}")
        if self.scales is None:
            raise ConfigError("scenario needs 'scales'")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "ScenarioConfig":
        d = dict(d)
        try:
            d["scales"] = ScaleSet.from_json(d["scales"]) if "scales" in d else None
            if d.get("quantized_scales") is not None:
                d["quantized_scales"] = ScaleSet.from_json(d["quantized_scales"])
            if "u_range" in d and d["u_range"] is not None:
                d["u_range"] = (list(d["u_range"]["min"]), list(d["u_range"]["max"]))
            d["modes"] = tuple(d.get("modes", ("ideal", "encrypted")))
            return cls(base_dir=base_dir, **d)
        except (KeyError, TypeError) as e:
            raise ConfigError(f"malformed scenario: {e}") from e

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: {e}") from e
        return cls.from_dict(d, os.path.dirname(os.path.abspath(path)))

    # ------------------------------------------------------------ assembly

    def build_plant(self):
        from .plant_sim.plant import PlantLti
        from .plant_sim.preset import three_inertia_plant

        if self.plant == "three_inertia":
            return three_inertia_plant()
        if isinstance(self.plant, dict):
            p = self.plant
            n = len(p["Ap"])
            return PlantLti(p["Ap"], p["Bp"], p["Cp"], p.get("xp0", [0.0] * n), p["Ts"],
                            p.get("substeps", 20))
        raise ConfigError(f"unknown plant {self.plant!r}")

    def build_controller(self) -> GivenController:
        from .plant_sim.preset import three_inertia_preset

        if self.controller == "three_inertia":
            return three_inertia_preset()[1]
        if isinstance(self.controller, dict):
            return GivenController.from_json(self.controller)
        if isinstance(self.controller, str):
            path = os.path.join(self.base_dir, self.controller)
            if not os.path.exists(path):
                raise FileNotFoundError(path)
            return load_controller_json(path)
        raise ConfigError(f"unknown controller {self.controller!r}")


class Scenario:
    """A loaded scenario with its derived objects (conversion, window, keys)."""

    def __init__(self, cfg: ScenarioConfig, profile: str | None = None, seed: int | None = None,
                 reenc_rule: str = "paper", params: zq.LweParams | None = None):
        self.cfg = cfg
        self.plant = cfg.build_plant()
        self.ctl = cfg.build_controller()
        self.seed = cfg.seed if seed is None else seed
        self.rule = reenc_rule
        self.profile = profile or cfg.profile
        self._params = params
        self._conv = None
        self._ideal = None

    @property
    def params(self) -> zq.LweParams:
        if self._params is None:
            self._params = profile_params(self.profile)
        return self._params

    @property
    def conv(self):
        if self._conv is None:
            self._conv = convert_controller(self.ctl, targets=self.cfg.targets,
                                            charpoly=self.cfg.charpoly)
        return self._conv

    @property
    def scales(self) -> ScaleSet:
        return self.cfg.scales

    def reference(self):
        from .plant_sim.runner import make_reference

        return make_reference(self.cfg.reference, self.ctl.nr)

    def ideal_trace(self):
        from .plant_sim.runner import IdealLoop, run_closed_loop

        if self._ideal is None:
            self._ideal = run_closed_loop(self.plant, IdealLoop(self.ctl), self.cfg.horizon,
                                          self.reference(), self.ctl.nr)
        return self._ideal

    def u_range(self):
        """Configured input range, or the range of the ideal run."""
        if self.cfg.u_range is not None:
            return self.cfg.u_range
        U = self.ideal_trace().U
        return list(U.min(axis=0)), list(U.max(axis=0))

    def window(self, q: int | None = None):
        lo, hi = self.u_range()
        w = size_window(lo, hi, self.cfg.eps, self.scales, crypto_q=q)
        return w if q is None else w.with_modulus(q)

    def integer(self):
        return build_integer(self.ctl, self.conv, self.scales)

    def key(self) -> zq.SecretKey:
        return zq.keygen(self.params, seed_streams(self.seed)[0])

    def encrypted_parts(self, additive: bool = False):
        """``(encrypted controller, actuator codec, ring reference)``."""
        p = self.params
        sk = self.key()
        _, s_ctl, s_act = seed_streams(self.seed)
        win = self.window(p.q)
        ring = RingController(self.integer(), win)
        make = additive_controller if additive else encrypt_controller
        ectl = make(ring, sk, zq.make_rng(s_ctl))
        codec = ActuatorCodec(sk, win, self.scales, zq.make_rng(s_act), self.rule)
        return ectl, codec, RingController(self.integer(), win)

    def loop(self, mode: str, diagnostics: bool = False):
        from .plant_sim import runner as R

        if mode == "ideal":
            return R.IdealLoop(self.ctl)
        if mode == "converted":
            return R.ConvertedLoop(self.ctl, self.conv)
        if mode == "quantized":
            sc = self.cfg.quantized_scales or self.scales
            return R.QuantizedLoop(QuantizedController(self.ctl, sc))
        if mode == "integer":
            if diagnostics:
                return R.IntegerLoop(self.integer(), diag=(self.ctl, self.conv),
                                     bounds=self.bound_inputs())
            return R.IntegerLoop(self.integer())
        if mode == "ring":
            return R.RingLoop(RingController(self.integer(), self.window()), self.integer())
        if mode in ("encrypted", "additive"):
            ectl, codec, ring = self.encrypted_parts(additive=mode == "additive")
            cls = R.AdditiveLoop if mode == "additive" else R.EncryptedLoop
            if diagnostics:
                return cls(R.LocalLink(ectl), codec, ring=ring, oracle=self.integer())
            return cls(R.LocalLink(ectl), codec)
        raise ConfigError(f"unknown mode {mode!r}")

    def run(self, mode: str, diagnostics: bool = False, realtime: bool = False):
        from .plant_sim.runner import run_closed_loop

        if mode == "ideal" and not realtime:
            return self.ideal_trace()
        return run_closed_loop(self.plant, self.loop(mode, diagnostics), self.cfg.horizon,
                               self.reference(), self.ctl.nr, realtime=realtime)

    def signal_bound(self) -> float:
        """Configured ``M`` or the peak of ``[y; r; x; u]`` on the ideal run."""
        if self.cfg.M is not None:
            return float(self.cfg.M)
        from .plant_sim.runner import IdealLoop, run_closed_loop

        loop = IdealLoop(self.ctl)
        peak = [0.0]
        inner = loop.control

        def control(t, y, r):
            peak[0] = max(peak[0], float(np.abs(loop.c.x).max(initial=0.0)))
            return inner(t, y, r)
        loop.control = control
        tr = run_closed_loop(self.plant, loop, self.cfg.horizon, self.reference(), self.ctl.nr)
        return max(peak[0], float(np.abs(tr.Y).max()), float(np.abs(tr.U).max()),
                   float(np.abs(np.array(tr.r)).max()))

    def bound_inputs(self):
        from .plant_sim.bounds import BoundInputs, estimate_eta

        eta = self.cfg.eta if self.cfg.eta is not None else estimate_eta(
            self.plant, self.ctl, self.cfg.eps)
        return BoundInputs.from_controller(self.ctl, self.conv, self.signal_bound(),
                                           self.cfg.eps, eta)


def shipped_scenario_path(name: str = "three_inertia") -> str:
    return str(resources.files("ectl") / "data" / f"{name}.json")


def load_scenario(path_or_name: str) -> ScenarioConfig:
    if os.path.exists(path_or_name):
        return ScenarioConfig.load(path_or_name)
    shipped = shipped_scenario_path(path_or_name)
    if os.path.exists(shipped):
        return ScenarioConfig.load(shipped)
    raise FileNotFoundError(path_or_name)
