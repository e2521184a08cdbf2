"""Flat key=value run configuration.

Every tunable in the package lives in one flat namespace (``section.name``).
A config file is plain text, one ``key = value`` per line, ``#`` comments;
command-line overrides use the same ``key=value`` syntax. Unknown keys fail
fast with the list of valid keys so typos never silently fall back to a
default.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .errors import ConfigError


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_list(s: str) -> tuple[int, ...]:
    s = s.strip()
    if not s:
        return ()
    return tuple(int(tok) for tok in s.replace(",", " ").split())


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class _Key:
    name: str
    default: object
    parse: Callable[[str], object]
    help: str


_REGISTRY: dict[str, _Key] = {}


def _key(name: str, default, parse, help: str) -> None:
    _REGISTRY[name] = _Key(name, default, parse, help)


# --- image / camera ---------------------------------------------------------
_key("img.width", 64, int, "sensor width in pixels")
_key("img.height", 48, int, "sensor height in pixels")
_key("cam.cx", -1.0, float, "principal point x in pixels (-1: width/2)")
_key("cam.cy", -1.0, float, "principal point y in pixels (-1: height/2)")
_key("cam.k1", -1.0, float, "fisheye linear coefficient px/rad (-1: min(W,H)/pi)")
_key("cam.k3", 0.0, float, "fisheye cubic coefficient")
_key("cam.k5", 0.0, float, "fisheye quintic coefficient")
_key("cam.fov_deg", 100.0, float, "maximum half field of view in degrees")

# --- synthetic data ---------------------------------------------------------
_key("synth.seed", 0, int, "RNG seed for motion + noise")
_key("synth.duration_s", 10.0, float, "simulated duration in seconds")
_key("synth.dt_us", 1000, int, "micro-step of the simulator in microseconds")
_key("synth.contrast", 0.25, float, "event-emission log-intensity threshold C")
_key("synth.line_sigma", 1.5, float, "Gaussian cross-section of rendered limbs, px")
_key("synth.line_gain", 1.0, float, "peak log-intensity of a rendered limb")
_key("synth.background", 0.0, float, "uniform background log-intensity")
_key("synth.arm_amp_lo", 0.25, float, "arm joint-angle amplitude range low, rad")
_key("synth.arm_amp_hi", 0.9, float, "arm joint-angle amplitude range high, rad")
_key("synth.arm_freq_lo", 0.4, float, "arm angular frequency range low, Hz")
_key("synth.arm_freq_hi", 1.6, float, "arm angular frequency range high, Hz")
_key("synth.leg_amp_lo", 0.15, float, "leg amplitude low, rad")
_key("synth.leg_amp_hi", 0.5, float, "leg amplitude high, rad")
_key("synth.leg_freq_lo", 0.3, float, "leg frequency low, Hz")
_key("synth.leg_freq_hi", 1.0, float, "leg frequency high, Hz")
_key("synth.torso_amp_lo", 0.03, float, "torso amplitude low, rad")
_key("synth.torso_amp_hi", 0.15, float, "torso amplitude high, rad")
_key("synth.torso_freq_lo", 0.1, float, "torso frequency low, Hz")
_key("synth.torso_freq_hi", 0.5, float, "torso frequency high, Hz")

# --- encoder ----------------------------------------------------------------
_key("spem.widths", (8, 16, 32, 48, 64), _parse_int_list,
     "channel widths: stem then four stages")
_key("spem.stem_stride", 1, int, "stride of the stem convolution (1 or 2)")
_key("spem.ssm_stages", (2, 4), _parse_int_list,
     "1-based stage indices that carry a sequence block")
_key("spem.ssm_state", 16, int, "state modes per location in sequence blocks")
_key("spem.bandlimit", 0.5, float,
     "fraction of low-frequency state modes kept at init")
_key("spem.heads", 4, int, "deformable attention heads")
_key("spem.points", 4, int, "sampling points per deformable attention head")
_key("spem.queries", 16, int, "joint query count J")
_key("spem.query_dim", 64, int, "query feature dim D (must equal last width)")
_key("spem.decoder_heads", 4, int, "decoder attention heads")
_key("spem.ffn_mult", 2, int, "decoder feed-forward expansion factor")

# --- pose regression / fusion ----------------------------------------------
_key("prm.mode", "fused", str, "pose combination: fused | direct | naive")
_key("prm.reset_every", 0, int,
     "reset recurrent + fusion state every k windows (0: never)")
_key("prm.sigma0", 100.0, float, "initial state variance, mm^2")
_key("prm.q_init", 1.0, float, "initial process noise variance, mm^2")
_key("prm.r_init", 1.0, float, "initial observation noise variance, mm^2")
_key("prm.embed_dim", 64, int, "previous-pose embedding width")

# --- losses -----------------------------------------------------------------
_key("loss.w3d", 0.01, float, "weight of the 3D position loss")
_key("loss.wdelta", 0.01, float, "weight of the displacement loss")
_key("loss.w2d", 0.01, float, "weight of the projected 2D loss")
_key("loss.wbl", 1e-3, float, "weight of the bone-length loss")
_key("loss.wba", 1e-3, float, "weight of the bone-angle loss")

# --- training ---------------------------------------------------------------
_key("train.seq_len", 40, int, "windows per training sample N")
_key("train.window_ms", 20.0, float, "window length T in milliseconds")
_key("train.batch", 4, int, "sequences per optimisation step")
_key("train.epochs", 60, int, "training epochs")
_key("train.lr", 1e-3, float, "Adam learning rate")
_key("train.finetune_epochs", 0, int, "extra epochs at train.finetune_lr")
_key("train.finetune_lr", 1e-4, float, "fine-tune learning rate")
_key("train.seed", 0, int, "seed for init and batch shuffling")
_key("train.causal", False, _parse_bool,
     "train with causal (unidirectional) sequence blocks")
_key("train.target_mpjpe", 0.0, float,
     "stop early once train MPJPE (mm) falls below this (0: never)")

# --- inference --------------------------------------------------------------
_key("infer.mode", "causal", str, "evaluation mode: causal | non-causal")
_key("infer.window_ms", 0.0, float,
     "inference window length (0: use train.window_ms)")

# --- core numerics ----------------------------------------------------------
_key("core.dtype", "float32", str, "compute precision: float32 | float64")
_key("core.finite_checks", True, _parse_bool,
     "raise NumericFault when any op output is non-finite")


class Config:
    """A concrete assignment for every registered key."""

    def __init__(self, overrides: dict[str, object] | None = None):
        self._values = {k: key.default for k, key in _REGISTRY.items()}
        if overrides:
            for name, value in overrides.items():
                self._check_name(name)
                self._values[name] = value

    @staticmethod
    def _check_name(name: str) -> None:
        if name not in _REGISTRY:
            valid = "\n  ".join(sorted(_REGISTRY))
            raise ConfigError(f"unknown config key {name!r}; valid keys:\n  {valid}")

    def __getitem__(self, name: str):
        self._check_name(name)
        return self._values[name]

    def set(self, name: str, raw: str | object) -> None:
        """Set one key, parsing from string form when needed."""
        self._check_name(name)
        if isinstance(raw, str):
            try:
                self._values[name] = _REGISTRY[name].parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {name}: {exc}") from exc
        else:
            self._values[name] = raw

    def apply_assignment(self, text: str) -> None:
        """Apply one ``key=value`` assignment as given on the command line."""
        if "=" not in text:
            raise ConfigError(f"expected key=value, got {text!r}")
        name, _, raw = text.partition("=")
        self.set(name.strip(), raw.strip())

    def load_file(self, path: str) -> None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                body = line.split("#", 1)[0].strip()
                if not body:
                    continue
                if "=" not in body:
                    raise ConfigError(f"{path}:{lineno}: expected key = value")
                name, _, raw = body.partition("=")
                self.set(name.strip(), raw.strip())

    def as_text(self) -> str:
        """Canonical echo of the full configuration, sorted by key."""
        return "\n".join(f"{k} = {_fmt(self._values[k])}" for k in sorted(self._values))

    @classmethod
    def from_text(cls, text: str) -> "Config":
        cfg = cls()
        for line in text.splitlines():
            body = line.strip()
            if not body:
                continue
            name, _, raw = body.partition("=")
            cfg.set(name.strip(), raw.strip())
        return cfg

    # -- derived quantities ---------------------------------------------------

    def window_us(self, inference: bool = False) -> int:
        ms = self["infer.window_ms"] if inference else 0.0
        if not ms:
            ms = self["train.window_ms"]
        return int(round(ms * 1000.0))

    def validate(self) -> None:
        """Cross-field invariants; raises ConfigError with the offending key."""
        widths = self["spem.widths"]
        if len(widths) != 5 or any(w <= 0 for w in widths):
            raise ConfigError("spem.widths must list 5 positive ints (stem + 4 stages)")
        if self["spem.query_dim"] != widths[-1]:
            raise ConfigError(
                f"spem.query_dim ({self['spem.query_dim']}) must equal the last "
                f"stage width ({widths[-1]})")
        if self["spem.stem_stride"] not in (1, 2):
            raise ConfigError("spem.stem_stride must be 1 or 2")
        stages = self["spem.ssm_stages"]
        if any(s < 1 or s > 4 for s in stages):
            raise ConfigError("spem.ssm_stages entries must be in 1..4")
        if not 0.0 < self["spem.bandlimit"] <= 1.0:
            raise ConfigError("spem.bandlimit must be in (0, 1]")
        if self["spem.query_dim"] % self["spem.decoder_heads"] != 0:
            raise ConfigError("spem.query_dim must divide by spem.decoder_heads")
        if widths[1] % self["spem.heads"] or widths[2] % self["spem.heads"] \
                or widths[3] % self["spem.heads"] or widths[4] % self["spem.heads"]:
            raise ConfigError("every stage width must divide by spem.heads")
        if self["prm.mode"] not in ("fused", "direct", "naive"):
            raise ConfigError("prm.mode must be fused, direct, or naive")
        if self["infer.mode"] not in ("causal", "non-causal"):
            raise ConfigError("infer.mode must be causal or non-causal")
        if self["core.dtype"] not in ("float32", "float64"):
            raise ConfigError("core.dtype must be float32 or float64")
        if self["train.seq_len"] < 2:
            raise ConfigError("train.seq_len must be at least 2")
        if self["train.window_ms"] <= 0:
            raise ConfigError("train.window_ms must be positive")
        win = self.window_us()
        if win % self["synth.dt_us"] != 0:
            raise ConfigError(
                f"synth.dt_us ({self['synth.dt_us']}) must divide the window "
                f"length ({win} us)")
        # Spatial divisibility: stem (stride s) then four halvings.
        h, w = self["img.height"], self["img.width"]
        total = self["spem.stem_stride"] * 16
        if h % total or w % total:
            raise ConfigError(
                f"img dimensions {h}x{w} must divide by {total} "
                f"(stem stride x 16)")


def valid_keys() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def key_help() -> str:
    lines = []
    for name in sorted(_REGISTRY):
        k = _REGISTRY[name]
        lines.append(f"{name:24s} {_fmt(k.default):>18s}  {k.help}")
    return "\n".join(lines)
