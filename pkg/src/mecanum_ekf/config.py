"""Run configuration: YAML loading, validation and defaults.

Every key is optional; an empty file yields the defaults listed in
``DEFAULTS``. Angles in the file are degrees, lengths inches, times seconds.
Unknown keys are rejected with their line and column.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path as FilePath
from typing import Any, Dict, Optional, Tuple

import yaml

from .guidance import AxisGains, Path, PidGains, PursuitConfig
from .paths import get_path
from .vehicle_model import NO_LANDMARK_VARIANCE, NoiseScale, RobotGeometry
from .world_sim import CameraModel, Field, Landmark, ScenarioConfig, SimClock

_NOISE = {"q_position": 1.0, "q_velocity": 1.0, "r_position": 1.0, "r_encoder": 1.0}

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    "output_dir": "out",
    "jobs": None,
    "path": "figure7",
    "geometry": {
        "wheel_radius": 1.8898,
        "half_length": 6.5,
        "half_width": 5.5,
        "encoder_track": 6.0,
        "encoder_offset": 4.0,
        "wheel_speed_cap": 30.0,
    },
    "noise": dict(_NOISE),
    "filter_noise": dict(_NOISE),
    "camera": {"fov": 70.0, "mount_offset": 0.0, "max_range": None, "margin": 2.0},
    "field": {"width": 144.0, "height": 144.0, "landmarks": None},
    "clock": {"truth_dt": 0.001, "filter_dt": 0.01},
    "gains": {
        "x": {"P": 4.0, "I": 0.0, "D": 0.5},
        "y": {"P": 4.0, "I": 0.0, "D": 0.5},
        "theta": {"P": 6.0, "I": 0.0, "D": 0.5},
    },
    "pursuit": {"lookahead_radius": 12.0, "waypoint_advance_tolerance": 2.0, "search_arc": None},
    "filter": {
        "initial_covariance": [1.0, 1.0, 0.05, 1.0, 1.0, 0.05],
        "no_landmark_variance": NO_LANDMARK_VARIANCE,
    },
    "run": {
        "time_limit": 120.0,
        "settle_speed": 2.0,
        "divergence_factor": 10.0,
        "integral_limit": 50.0,
    },
}

# default landmark walls per bundled path
PATH_LANDMARK_WALLS = {"figure7": ("top", "bottom"), "cycle": ("left", "bottom")}

_LANDMARK_KEYS = {"id", "x", "y", "facing"}
_INLINE_PATH_KEYS = {"waypoints", "headings"}


class ConfigError(ValueError):
    """Invalid configuration; the message names the field and the problem."""


# ---------------------------------------------------------------------------
# YAML with source positions


def _construct(node, marks, where=()):
    """Convert a composed YAML node to python, recording key positions."""
    marks[where] = (node.start_mark.line + 1, node.start_mark.column + 1)
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            out[key] = _construct(value_node, marks, where + (key,))
            # report errors at the key, not at its value
            marks[where + (key,)] = (key_node.start_mark.line + 1,
                                     key_node.start_mark.column + 1)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, marks, where + (i,)) for i, v in enumerate(node.value)]
    return yaml.SafeLoader(" ").construct_object(node)  # scalar


def _parse(text: str, source: str):
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"{source}: parse error{where}: {problem}") from None
    marks: Dict[tuple, Tuple[int, int]] = {}
    if node is None:
        return {}, marks
    data = _construct(node, marks)
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    return data, marks


def _dotted(where) -> str:
    return ".".join(str(p) if not isinstance(p, int) else f"[{p}]" for p in where).replace(".[", "[")


class _Ctx:
    def __init__(self, source, marks):
        self.source = source
        self.marks = marks

    def error(self, where, msg) -> ConfigError:
        pos = self.marks.get(tuple(where))
        loc = f" (line {pos[0]}, column {pos[1]})" if pos else ""
        return ConfigError(f"{self.source}: {_dotted(where)}: {msg}{loc}")


def _merge(user, default, where, ctx):
    """Overlay ``user`` onto ``default`` rejecting keys absent from the default."""
    if not isinstance(user, dict):
        raise ctx.error(where, "expected a mapping")
    out = copy.deepcopy(default)
    for key, value in user.items():
        if key not in default:
            raise ctx.error(where + (key,), "unknown key")
        if isinstance(default[key], dict) and key != "path":
            out[key] = _merge(value if value is not None else {}, default[key], where + (key,), ctx)
        else:
            out[key] = value
    return out


def _num(value, where, ctx, *, optional=False) -> Optional[float]:
    if value is None and optional:
        return None
    if isinstance(value, bool):
        raise ctx.error(where, f"expected a number, got {value!r}")
    if isinstance(value, str):
        try:
            value = float(value)  # PyYAML reads "1e9" as a string
        except ValueError:
            raise ctx.error(where, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ctx.error(where, f"expected a finite number, got {value!r}")
    return float(value)


def _section(data, name, ctx, *, optional=()):
    return {k: _num(v, (name, k), ctx, optional=k in optional) for k, v in data[name].items()}


def _build(ctor, where, ctx, **kwargs):
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ctx.error(where, str(exc)) from None


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for simulations and experiments."""

    geometry: RobotGeometry
    noise: NoiseScale
    filter_noise: NoiseScale
    camera: CameraModel
    field: Field
    clock: SimClock
    path_spec: Any
    path: Path
    gains: AxisGains
    pursuit: PursuitConfig
    initial_covariance: Tuple[float, ...]
    no_landmark_variance: float
    time_limit: float
    settle_speed: float
    divergence_factor: float
    integral_limit: float
    seed: int
    output_dir: str
    jobs: Optional[int]
    landmarks_explicit: bool
    effective: Dict[str, Any]

    def scenario(self, *, path: Optional[Path] = None, field: Optional[Field] = None,
                 clock: Optional[SimClock] = None) -> ScenarioConfig:
        return ScenarioConfig(
            geometry=self.geometry, sim_noise=self.noise, filter_noise=self.filter_noise,
            camera=self.camera, field=field or self.field, clock=clock or self.clock,
            path=path or self.path, gains=self.gains, pursuit=self.pursuit,
            initial_covariance=self.initial_covariance,
            no_landmark_variance=self.no_landmark_variance, integral_limit=self.integral_limit,
            time_limit=self.time_limit, settle_speed=self.settle_speed,
            divergence_factor=self.divergence_factor,
        )

    def field_for(self, path_name: str) -> Field:
        """Field with the landmark layout belonging to a bundled path, unless
        the configuration placed landmarks explicitly."""
        if self.landmarks_explicit:
            return self.field
        walls = PATH_LANDMARK_WALLS.get(path_name, ("top", "bottom"))
        return Field(self.field.width, self.field.height,
                     _rect_landmarks(walls, self.field.width, self.field.height))

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.effective)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.effective, sort_keys=False, default_flow_style=None)

    def write_effective(self, out_dir) -> FilePath:
        out = FilePath(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dest = out / "effective_config.yaml"
        dest.write_text(self.to_yaml())
        return dest


def _rect_landmarks(walls, width, height):
    out = []
    for wall in walls:
        for k, frac in enumerate((0.25, 0.5, 0.75), start=1):
            if wall == "top":
                out.append(Landmark(f"top-{k}", frac * width, height, -math.pi / 2))
            elif wall == "bottom":
                out.append(Landmark(f"bottom-{k}", frac * width, 0.0, math.pi / 2))
            elif wall == "left":
                out.append(Landmark(f"left-{k}", 0.0, frac * height, 0.0))
            else:
                out.append(Landmark(f"right-{k}", width, frac * height, math.pi))
    return tuple(out)


def config_from_dict(data: Optional[Dict[str, Any]], source: str = "<config>",
                     marks: Optional[dict] = None) -> RunConfig:
    ctx = _Ctx(source, marks or {})
    d = _merge(data or {}, DEFAULTS, (), ctx)

    seed = d["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ctx.error(("seed",), "must be an integer in [0, 2**64)")
    jobs = d["jobs"]
    if jobs is not None and (isinstance(jobs, bool) or not isinstance(jobs, int) or jobs < 1):
        raise ctx.error(("jobs",), "must be a positive integer or null")
    if not isinstance(d["output_dir"], str):
        raise ctx.error(("output_dir",), "must be a string")

    geometry = _build(RobotGeometry, ("geometry",), ctx, **_section(d, "geometry", ctx))
    noise = _build(NoiseScale, ("noise",), ctx, **_section(d, "noise", ctx))
    filter_noise = _build(NoiseScale, ("filter_noise",), ctx, **_section(d, "filter_noise", ctx))

    cam = _section(d, "camera", ctx, optional=("max_range",))
    if not 0 < cam["fov"] < 180:
        raise ctx.error(("camera", "fov"), "fov must be in (0, 180) degrees")
    camera = _build(CameraModel, ("camera",), ctx, fov=math.radians(cam["fov"]),
                    mount_heading_offset=math.radians(cam["mount_offset"]),
                    max_range=cam["max_range"], margin=math.radians(cam["margin"]))

    clk = _section(d, "clock", ctx)
    clock = _build(SimClock, ("clock",), ctx, **clk)

    gains = {}
    for axis in ("x", "y", "theta"):
        g = d["gains"][axis]
        unknown = set(g) - {"P", "I", "D"}
        if unknown:
            raise ctx.error(("gains", axis, sorted(unknown)[0]), "unknown key")
        gains[axis] = _build(PidGains, ("gains", axis), ctx,
                             **{k: _num(v, ("gains", axis, k), ctx) for k, v in g.items()})
    axis_gains = AxisGains(**gains)

    pursuit = _build(PursuitConfig, ("pursuit",), ctx,
                     **_section(d, "pursuit", ctx, optional=("search_arc",)))

    path_spec = d["path"]
    path = _load_path(path_spec, ctx)

    fld = d["field"]
    width = _num(fld["width"], ("field", "width"), ctx)
    height = _num(fld["height"], ("field", "height"), ctx)
    explicit = fld["landmarks"] is not None
    if explicit:
        if not isinstance(fld["landmarks"], list):
            raise ctx.error(("field", "landmarks"), "must be a list of landmarks or null")
        landmarks = []
        for i, lm in enumerate(fld["landmarks"]):
            where = ("field", "landmarks", i)
            if not isinstance(lm, dict):
                raise ctx.error(where, "expected a mapping with id, x, y, facing")
            for key in lm:
                if key not in _LANDMARK_KEYS:
                    raise ctx.error(where + (key,), "unknown key")
            missing = _LANDMARK_KEYS - set(lm)
            if missing:
                raise ctx.error(where, f"missing {sorted(missing)}")
            landmarks.append(Landmark(str(lm["id"]), _num(lm["x"], where + ("x",), ctx),
                                      _num(lm["y"], where + ("y",), ctx),
                                      math.radians(_num(lm["facing"], where + ("facing",), ctx))))
        field = _build(Field, ("field",), ctx, width=width, height=height,
                       landmarks=tuple(landmarks))
    else:
        walls = PATH_LANDMARK_WALLS.get(path_spec if isinstance(path_spec, str) else "",
                                        ("top", "bottom"))
        field = _build(Field, ("field",), ctx, width=width, height=height,
                       landmarks=_rect_landmarks(walls, width, height))

    flt = d["filter"]
    cov = flt["initial_covariance"]
    if not isinstance(cov, list) or len(cov) != 6:
        raise ctx.error(("filter", "initial_covariance"), "must be a list of 6 variances")
    cov = tuple(_num(v, ("filter", "initial_covariance", i), ctx) for i, v in enumerate(cov))
    if any(v <= 0 for v in cov):
        raise ctx.error(("filter", "initial_covariance"), "variances must be > 0")
    sentinel = _num(flt["no_landmark_variance"], ("filter", "no_landmark_variance"), ctx)
    if sentinel <= 0:
        raise ctx.error(("filter", "no_landmark_variance"), "must be > 0")

    run = _section(d, "run", ctx)
    for key, value in run.items():
        if value <= 0:
            raise ctx.error(("run", key), "must be > 0")

    effective = copy.deepcopy(d)
    effective["filter"]["initial_covariance"] = list(cov)
    for sec in ("geometry", "noise", "filter_noise", "camera", "clock", "pursuit", "run"):
        for k, v in list(effective[sec].items()):
            if v is not None:
                effective[sec][k] = _num(v, (sec, k), ctx)
    effective["filter"]["no_landmark_variance"] = sentinel
    effective["field"]["width"], effective["field"]["height"] = width, height
    effective["field"]["landmarks"] = [
        {"id": lm.id, "x": lm.x, "y": lm.y, "facing": math.degrees(lm.facing)}
        for lm in field.landmarks
    ] if explicit else None
    for axis in ("x", "y", "theta"):
        g = getattr(axis_gains, axis)
        effective["gains"][axis] = {"P": g.P, "I": g.I, "D": g.D}

    return RunConfig(
        geometry=geometry, noise=noise, filter_noise=filter_noise, camera=camera, field=field,
        clock=clock, path_spec=path_spec, path=path, gains=axis_gains, pursuit=pursuit,
        initial_covariance=cov, no_landmark_variance=sentinel, time_limit=run["time_limit"],
        settle_speed=run["settle_speed"], divergence_factor=run["divergence_factor"],
        integral_limit=run["integral_limit"], seed=seed, output_dir=d["output_dir"], jobs=jobs,
        landmarks_explicit=explicit, effective=effective,
    )


def _load_path(spec, ctx) -> Path:
    if isinstance(spec, str):
        try:
            return get_path(spec)
        except ValueError as exc:
            raise ctx.error(("path",), str(exc)) from None
    if not isinstance(spec, dict):
        raise ctx.error(("path",), "must be a bundled path name or {waypoints: [...]}")
    for key in spec:
        if key not in _INLINE_PATH_KEYS:
            raise ctx.error(("path", key), "unknown key")
    if "waypoints" not in spec:
        raise ctx.error(("path",), "inline path needs 'waypoints'")
    wps = spec["waypoints"]
    if not isinstance(wps, list):
        raise ctx.error(("path", "waypoints"), "must be a list of [x, y] pairs")
    pts = []
    for i, wp in enumerate(wps):
        if not isinstance(wp, list) or len(wp) != 2:
            raise ctx.error(("path", "waypoints", i), "expected [x, y]")
        pts.append([_num(v, ("path", "waypoints", i, j), ctx) for j, v in enumerate(wp)])
    headings = spec.get("headings")
    if headings is not None:
        headings = [None if h is None else math.radians(_num(h, ("path", "headings", i), ctx))
                    for i, h in enumerate(headings)]
    try:
        return Path(pts, headings)
    except ValueError as exc:
        raise ctx.error(("path",), str(exc)) from None


def load_config(path=None, echo_to=None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load and validate a YAML run configuration.

    ``path=None`` gives the defaults. ``overrides`` maps dotted keys (for
    example ``"clock.filter_dt"``) to values that replace the file's before
    validation. When ``echo_to`` is set, the effective configuration
    (defaults resolved) is written there as ``effective_config.yaml``.
    """
    if path is None:
        data, marks, source = {}, {}, "<defaults>"
    else:
        source = str(path)
        try:
            text = FilePath(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{source}: cannot read: {exc.strerror}") from None
        data, marks = _parse(text, source)
    for dotted, value in (overrides or {}).items():
        node = data
        *parents, leaf = dotted.split(".")
        for key in parents:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[leaf] = value
    cfg = config_from_dict(data, source, marks)
    if echo_to is not None:
        cfg.write_effective(echo_to)
    return cfg
