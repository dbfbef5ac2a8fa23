"""Experiment configuration: a single JSON document, validated before any run.

Schema (all sections required except ``outputs``)::

    {
      "name": "baseline_disk",
      "domain":    {"shape": "ball" | "annulus", "dimension": 2,
                    "outer_radius": 1.0, "inner_radius": 0.0},
      "grid":      {"mode": "cartesian", "n": 64}
                 | {"mode": "polar", "radial_steps": 32, "angular_steps": 64},
      "integrand": {"name": "power", "params": {"p": 1.5, "lam": 4.0},
                    "growth": {...optional GrowthParams overrides...}},
      "pipeline":  {"seq_len": 6, "eps_schedule": null, "rng_seed": 0,
                    "probe_count": 256, "step_budget": 2000, "polar_trials": 20},
      "outputs":   {"dir": "out", "stem": null}
    }

``eps_schedule`` defaults to ``4^-h``.  Every module invariant that can be
checked without running is checked here; failures raise
:class:`~symekeland.errors.ConfigError` naming the violated constraint.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError, SymEkelandError
from .functional import DiscreteFunctional, Integrand, integrand_names, make_integrand
from .geometry import DomainSpec, Grid, Shape

MEASURE_TOLERANCE = 0.01
BUNDLED = ("baseline_disk", "wiggle_disk")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    domain: dict
    grid: dict
    integrand: dict
    pipeline: dict
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        missing = [k for k in ("domain", "grid", "integrand", "pipeline") if k not in d]
        if missing:
            raise ConfigError(f"missing config sections: {', '.join(missing)}")
        unknown = set(d) - {"name", "domain", "grid", "integrand", "pipeline", "outputs"}
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
        return cls(d.get("name", "experiment"), dict(d["domain"]), dict(d["grid"]),
                   dict(d["integrand"]), dict(d["pipeline"]), dict(d.get("outputs", {})))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    # ------------------------------------------------------------- build
    def build_domain(self) -> DomainSpec:
        d = self.domain
        try:
            shape = Shape(d.get("shape", "ball"))
            return DomainSpec(shape, int(d.get("dimension", 2)), float(d.get("outer_radius", 1.0)),
                              float(d.get("inner_radius", 0.0 if shape is Shape.BALL else 0.5)))
        except (ValueError, SymEkelandError) as exc:
            raise ConfigError(f"domain: {exc}") from None

    def build_grid(self) -> Grid:
        domain = self.build_domain()
        g = self.grid
        mode = g.get("mode", "cartesian")
        try:
            if mode == "cartesian":
                grid = Grid.cartesian(domain, int(g.get("n", 64)))
            elif mode == "polar":
                grid = Grid.polar(domain, int(g.get("radial_steps", 32)),
                                  int(g.get("angular_steps", 64)))
            else:
                raise ConfigError(f"grid: unknown mode {mode!r}")
        except (ValueError, SymEkelandError) as exc:
            raise ConfigError(f"grid: {exc}") from None
        if grid.measure_defect > MEASURE_TOLERANCE:
            raise ConfigError(
                f"grid: total cell measure differs from the domain measure by "
                f"{100 * grid.measure_defect:.2f}% (limit 1%); refine the grid")
        return grid

    def build_integrand(self, grid: Grid) -> Integrand:
        spec = self.integrand
        name = spec.get("name")
        if name not in integrand_names():
            raise ConfigError(f"integrand: unknown name {name!r}; known: {integrand_names()}")
        try:
            j = make_integrand(name, grid, **spec.get("params", {}))
            overrides = spec.get("growth", {})
            if overrides:
                j = dataclasses.replace(j, growth=dataclasses.replace(j.growth, **overrides))
        except (TypeError, ValueError, SymEkelandError) as exc:
            raise ConfigError(f"integrand: {exc}") from None
        return j

    def build_functional(self) -> DiscreteFunctional:
        grid = self.build_grid()
        return DiscreteFunctional(self.build_integrand(grid), grid)

    def pipeline_args(self) -> dict:
        p = self.pipeline
        try:
            seq_len = int(p["seq_len"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("pipeline: seq_len must be a positive integer") from None
        sched = p.get("eps_schedule")
        if sched is None:
            base = float(p.get("eps_base", 4.0))
            if base <= 1:
                raise ConfigError("pipeline: eps_base must exceed 1")
            sched = [base ** -(h + 1) for h in range(seq_len)]
        sched = [float(e) for e in sched]
        if seq_len < 1 or len(sched) != seq_len:
            raise ConfigError("pipeline: eps_schedule must have seq_len entries")
        if any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("pipeline: eps_schedule must be positive and strictly decreasing")
        out = {"seq_len": seq_len, "eps_schedule": sched, "rng_seed": int(p.get("rng_seed", 0)),
               "probe_count": int(p.get("probe_count", 256)),
               "step_budget": int(p.get("step_budget", 2000)),
               "polar_trials": int(p.get("polar_trials", 20))}
        if out["probe_count"] < 0 or out["step_budget"] < 1 or out["polar_trials"] < 1:
            raise ConfigError("pipeline: probe_count >= 0, step_budget >= 1, polar_trials >= 1")
        return out

    def validate(self) -> DiscreteFunctional:
        """Build everything once; returns the functional on success."""
        J = self.build_functional()
        self.pipeline_args()
        return J


def load_config(source: str | Path) -> ExperimentConfig:
    """Read a config file, or a bundled config by name."""
    path = Path(source)
    try:
        if path.suffix != ".json" and str(source) in BUNDLED:
            text = resources.files("symekeland").joinpath(f"configs/{source}.json").read_text()
        else:
            text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {source}: {exc.strerror or exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(data)
