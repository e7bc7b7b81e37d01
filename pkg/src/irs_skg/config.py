"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment.  Unknown keys, repeated keys
and unparsable values are rejected with the offending line number.  Every key
has a default, so an empty file describes the reference desk scenario.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Optional

from .geometry import IrsGeometry
from .scenario import SPEED_OF_LIGHT, ProbePlan, ScenarioConfig, dbm_to_watt
from .statistics import Regime

_SECTION = "run"


class ConfigError(ValueError):
    """A configuration file or override could not be turned into a RunConfig."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_int(text: str) -> int:
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _parse_floats(text: str) -> tuple[float, ...]:
    parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
    return tuple(float(p) for p in parts)


def _parse_regimes(text: str) -> tuple[str, ...]:
    low = text.strip().lower()
    if low == "both":
        return ("eps", "rps")
    return (Regime.parse(low).value,)


def _parse_choice(*choices: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        low = text.strip().lower()
        if low not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}, got {text!r}")
        return low

    return parse


# key -> (parser, default, help); the order here is the order of the reference file
KEYS: dict[str, tuple[Callable[[str], Any], str, str]] = {
    # IRS and radio
    "irs_n_h": (_parse_int, "30", "IRS elements per row"),
    "irs_n_v": (_parse_int, "30", "IRS elements per column"),
    "element_spacing": (float, "0.5", "element width and height, in wavelengths"),
    "carrier_hz": (float, "1e9", "carrier frequency"),
    "bandwidth_hz": (float, "1e7", "receiver bandwidth"),
    "noise_figure_db": (float, "5", "receiver noise figure"),
    "power_a_dbm": (float, "10", "Alice transmit power"),
    "power_b_dbm": (float, "10", "Bob transmit power"),
    # link budget
    "d_ab": (float, "70", "Alice-Bob distance, m"),
    "d_ae": (float, "0.15", "Alice-Eve distance, m"),
    "d_be": (float, "69.85", "Bob-Eve distance, m"),
    "d_ar": (float, "4", "Alice-IRS distance, m"),
    "d_br": (float, "70.04", "Bob-IRS distance, m"),
    "d_er": (float, "4", "Eve-IRS distance, m"),
    "zeta_ab": (float, "4.8", "path-loss exponent"),
    "zeta_ae": (float, "2.1", "path-loss exponent"),
    "zeta_be": (float, "4.8", "path-loss exponent"),
    "zeta_ar": (float, "2.1", "path-loss exponent"),
    "zeta_br": (float, "2.2", "path-loss exponent"),
    "zeta_er": (float, "2.1", "path-loss exponent"),
    "gain_a": (float, "4", "antenna gain, dBi"),
    "gain_b": (float, "4", "antenna gain, dBi"),
    "gain_e": (float, "4", "antenna gain, dBi"),
    "gain_r": (float, "0", "IRS element gain, dBi"),
    "ref_loss_db": (float, "-30", "path gain at the reference distance, dB"),
    "ref_distance": (float, "1", "reference distance, m"),
    # probing plan
    "t_p": (float, "100", "probing budget per coherence block, pilot symbols"),
    "t_d": (float, "10", "direct probing time, pilot symbols"),
    "t_s": (float, "2", "reflected probing time per round, pilot symbols"),
    # Monte Carlo
    "regime": (_parse_regimes, "both", "phase regime: eps, rps or both"),
    "seed": (_parse_int, "20240601", "root seed of every random stream"),
    "blocks": (_parse_int, "100000", "coherence blocks per Monte Carlo estimate"),
    "batches": (_parse_int, "100", "batches for standard errors"),
    "n_se": (float, "4", "pass band of a Monte Carlo check, in standard errors"),
    "cross_pairing": (_parse_bool, "true", "include the second Isserlis pairing in the reflected covariances"),
    # rate sweep
    "sweep": (_parse_choice("none", "t_d", "t_s"), "none", "swept probing time in the rate command"),
    "sweep_start": (float, "1", "first swept value"),
    "sweep_stop": (float, "49", "last swept value"),
    "sweep_points": (_parse_int, "49", "number of swept values (0 gives an empty table)"),
    # optimizer
    "rho_max": (float, "0.1", "cap on the round-to-round sample correlation"),
    "max_iter": (_parse_int, "20", "SCP iterations"),
    "trust_radius": (float, "0.1", "SCP trust box half-width, fraction of t_p"),
    "objective_curvature": (_parse_choice("nsd", "psd"), "nsd", "cone the objective Hessian is projected onto"),
    "es_step": (float, "0.01", "exhaustive-search grid step, fraction of t_p"),
    "power_sweep_dbm": (_parse_floats, "-10, -5, 0, 5, 10", "transmit powers of the optimize command"),
    # validation suite
    "validate_quad_blocks": (_parse_int, "1000000", "blocks for the covariance-quad check"),
    "validate_mi_blocks": (_parse_int, "1000000", "blocks for the mutual-information check"),
    "validate_gauss_draws": (_parse_int, "1000000", "draws for the fourth-moment check"),
    "validate_mi_power_dbm": (float, "20", "transmit power of the mutual-information check"),
}

_KEY_RE = re.compile(r"^[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class RunConfig:
    """Parsed settings plus where they came from."""

    values: dict
    source: Optional[str] = None

    def __getitem__(self, key: str):
        return self.values[key]

    def with_overrides(self, **raw: Optional[str]) -> "RunConfig":
        """Apply command-line overrides given as text; ``None`` means not given."""
        values = dict(self.values)
        for key, text in raw.items():
            if text is None:
                continue
            values[key] = _convert(key, str(text), where="command line")
        return replace(self, values=values)

    def canonical(self) -> str:
        """Effective settings, one ``key = value`` per line in reference order."""
        return "".join(f"{k} = {_render(self.values[k])}\n" for k in KEYS)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @property
    def regimes(self) -> tuple[Regime, ...]:
        return tuple(Regime.parse(r) for r in self.values["regime"])

    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.values["carrier_hz"]

    def scenario(self, power_dbm: Optional[float] = None) -> ScenarioConfig:
        v = self.values
        lam = self.wavelength()
        d = v["element_spacing"] * lam
        try:
            irs = IrsGeometry(v["irs_n_h"], v["irs_n_v"], d, d, lam)
            pa = dbm_to_watt(v["power_a_dbm"] if power_dbm is None else power_dbm)
            pb = dbm_to_watt(v["power_b_dbm"] if power_dbm is None else power_dbm)
            return ScenarioConfig(
                irs=irs,
                power_a=pa,
                power_b=pb,
                carrier_hz=v["carrier_hz"],
                bandwidth_hz=v["bandwidth_hz"],
                noise_figure_db=v["noise_figure_db"],
                ref_loss_db=v["ref_loss_db"],
                ref_distance=v["ref_distance"],
                **{k: v[k] for k in KEYS if k.startswith(("d_", "zeta_", "gain_"))},
            )
        except ValueError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    def plan(self) -> ProbePlan:
        try:
            return ProbePlan(self.values["t_p"], self.values["t_d"], self.values["t_s"])
        except ValueError as exc:
            raise ConfigError(f"invalid probing plan: {exc}") from None


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], str):
            return "both" if value == ("eps", "rps") else value[0]
        return ", ".join(repr(float(x)) for x in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _convert(key: str, text: str, where: str):
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key '{key}'")
    parser = KEYS[key][0]
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for '{key}': {exc}") from None


def defaults() -> RunConfig:
    return RunConfig({k: _convert(k, spec[1], "defaults") for k, spec in KEYS.items()})


def _line_of(lines: list[str], key: str) -> int:
    for i, line in enumerate(lines, start=1):
        if line.split("#", 1)[0].split("=", 1)[0].strip().lower() == key:
            return i
    return 0


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse the text of a config file on top of the defaults."""
    lines = text.splitlines()
    parser = configparser.ConfigParser(
        delimiters=("=",),
        comment_prefixes=("#",),
        inline_comment_prefixes=("#",),
        interpolation=None,
        strict=True,
        empty_lines_in_values=False,
    )
    # flat file: indentation carries no meaning, so no line may continue the previous value
    body = "\n".join(line.lstrip() for line in lines)
    # the file has no section header; prepend one, which shifts every line number by one
    try:
        parser.read_string(f"[{_SECTION}]\n" + body, source=source)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno - 1}: key '{exc.option}' given twice") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{source}:{lineno - 1}: expected 'key = value', got {line.strip()}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc.message}") from None
    extra = [s for s in parser.sections() if s != _SECTION]
    if extra:
        lineno = next(i for i, line in enumerate(lines, start=1) if line.strip() == f"[{extra[0]}]")
        raise ConfigError(f"{source}:{lineno}: section headers are not allowed, got [{extra[0]}]")

    values = dict(defaults().values)
    for key, text_value in parser.items(_SECTION):
        lineno = _line_of(lines, key)
        where = f"{source}:{lineno}"
        if not _KEY_RE.match(key):
            raise ConfigError(f"{where}: malformed key '{key}'")
        if text_value is None or not text_value.strip():
            raise ConfigError(f"{where}: key '{key}' has no value")
        values[key] = _convert(key, text_value, where)
    return RunConfig(values, source)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config(text, str(p))


def reference_config_text() -> str:
    """The shipped reference file: every key, its default and what it means."""
    out = ["# Reference run configuration: every key with its default value.", "# Lines are 'key = value'; '#' starts a comment.", ""]
    for key, (_, default, doc) in KEYS.items():
        out.append(f"{key} = {default}  # {doc}")
    return "\n".join(out) + "\n"
