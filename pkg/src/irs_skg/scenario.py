"""Link budget: path gains, noise powers, LS estimation variances and inter-node correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import j0

from .geometry import CorrelationMatrix, IrsGeometry, scale_correlation, spatial_correlation

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_FLOOR_DBM_HZ = -174.0

LINKS = ("ab", "ae", "be", "ar", "br", "er")
_LINK_ALIASES = {"ba": "ab", "ea": "ae", "eb": "be", "ra": "ar", "rb": "br", "re": "er"}
# antenna gain keys at the two ends of each link
_LINK_ENDS = {link: (link[0], link[1]) for link in LINKS}
PAIRS = ("ab", "ae", "be")


class InfeasiblePlanError(ValueError):
    pass


def canonical_link(link: str) -> str:
    link = link.lower()
    link = _LINK_ALIASES.get(link, link)
    if link not in LINKS:
        raise KeyError(f"unknown link {link!r}; expected one of {', '.join(LINKS)}")
    return link


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def dbm_to_watt(x_dbm: float) -> float:
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Node distances (m), path-loss exponents, antenna gains (dBi) and radio parameters.

    ``d_ar``/``d_br``/``d_er`` are the node-to-IRS distances (``d_rb``, ``d_re``
    in the usual notation); the IRS geometry's wavelength must match the carrier.
    """

    irs: IrsGeometry
    d_ab: float = 70.0
    d_ae: float = 0.15
    d_be: float = 69.85
    d_ar: float = 4.0
    d_br: float = 70.04
    d_er: float = 4.0
    zeta_ab: float = 4.8
    zeta_ae: float = 2.1
    zeta_be: float = 4.8
    zeta_ar: float = 2.1
    zeta_br: float = 2.2
    zeta_er: float = 2.1
    gain_a: float = 4.0
    gain_b: float = 4.0
    gain_e: float = 4.0
    gain_r: float = 0.0
    ref_loss_db: float = -30.0
    ref_distance: float = 1.0
    carrier_hz: float = 1e9
    bandwidth_hz: float = 10e6
    noise_figure_db: float = 5.0
    power_a: float = 1e-2
    power_b: float = 1e-2

    def __post_init__(self):
        for link in LINKS:
            if getattr(self, f"d_{link}") <= 0:
                raise ValueError(f"distance d_{link} must be positive")
        if self.ref_distance <= 0:
            raise ValueError("reference distance must be positive")
        if self.power_a <= 0 or self.power_b <= 0:
            raise ValueError("transmit powers must be positive")
        if self.bandwidth_hz <= 0 or self.carrier_hz <= 0:
            raise ValueError("bandwidth and carrier frequency must be positive")
        if not math.isclose(self.wavelength, self.irs.wavelength, rel_tol=1e-9):
            raise ValueError(
                f"IRS wavelength {self.irs.wavelength} does not match carrier wavelength {self.wavelength}"
            )

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def n_elements(self) -> int:
        return self.irs.n_elements

    def with_power(self, power_w: float) -> "ScenarioConfig":
        return replace(self, power_a=power_w, power_b=power_w)

    def with_irs(self, irs: IrsGeometry) -> "ScenarioConfig":
        return replace(self, irs=irs)


def reference_scenario(side: int = 30, power_w: float = 1e-2, carrier_hz: float = 1e9) -> ScenarioConfig:
    """Alice/Bob/Eve/IRS layout with a side x side half-wavelength IRS."""
    lam = SPEED_OF_LIGHT / carrier_hz
    return ScenarioConfig(
        irs=IrsGeometry.square(side, lam),
        carrier_hz=carrier_hz,
        power_a=power_w,
        power_b=power_w,
    )


def path_gain(scn: ScenarioConfig, link: str) -> float:
    """Linear power gain; loss grows with distance (see README on the sign convention)."""
    link = canonical_link(link)
    i, j = _LINK_ENDS[link]
    d = getattr(scn, f"d_{link}")
    zeta = getattr(scn, f"zeta_{link}")
    gain_db = (
        getattr(scn, f"gain_{i}")
        + getattr(scn, f"gain_{j}")
        - 10.0 * zeta * math.log10(d / scn.ref_distance)
        + scn.ref_loss_db
    )
    return db_to_linear(gain_db)


@dataclass(frozen=True)
class NoiseModel:
    sigma2_a: float
    sigma2_b: float
    sigma2_e: float

    def __post_init__(self):
        if min(self.sigma2_a, self.sigma2_b, self.sigma2_e) <= 0:
            raise ValueError("noise powers must be positive")


def noise_power(scn: ScenarioConfig) -> NoiseModel:
    dbm = THERMAL_FLOOR_DBM_HZ + 10.0 * math.log10(scn.bandwidth_hz) + scn.noise_figure_db
    p = dbm_to_watt(dbm)
    return NoiseModel(p, p, p)


def spatial_rho(scn: ScenarioConfig, pair: str) -> float:
    """J0(2 pi d / lambda) for the distance between two of Alice, Bob, Eve."""
    pair = canonical_link(pair)
    if pair not in PAIRS:
        raise KeyError(f"spatial correlation is defined for {PAIRS}, got {pair!r}")
    d = getattr(scn, f"d_{pair}")
    return float(j0(2.0 * math.pi * d / scn.wavelength))


@dataclass(frozen=True)
class ProbePlan:
    """Probing-time allocation in pilot-symbol units.

    ``t_d`` is the direct-probe length per direction, ``t_s`` the slot length of
    one reflected probe.  ``t_r`` and the round count follow from the budget.
    """

    t_p: float
    t_d: float
    t_s: float

    def __post_init__(self):
        if self.t_p <= 0:
            raise ValueError("total probing time must be positive")
        if self.t_d < 0 or self.t_s <= 0:
            raise ValueError(f"probe times must be positive, got t_d={self.t_d}, t_s={self.t_s}")

    @property
    def t_r(self) -> float:
        return self.t_p - 2.0 * self.t_d

    @property
    def rounds(self) -> int:
        if self.t_r <= 0:
            return 0
        # guard against 2*t_s*P landing a hair above t_r in floating point
        return int(math.floor(self.t_r / (2.0 * self.t_s) + 1e-12))

    @property
    def is_feasible(self) -> bool:
        return self.t_d + self.t_s <= self.t_p / 2.0 and self.rounds >= 1

    def check_feasible(self) -> "ProbePlan":
        if not self.is_feasible:
            raise InfeasiblePlanError(
                f"plan t_d={self.t_d}, t_s={self.t_s} violates t_d + t_s <= t_p/2 = {self.t_p / 2}"
            )
        return self


@dataclass(frozen=True)
class EstimationVariances:
    # step 1 (direct probing), noise of the estimate made at the named node
    dir_a2: float  # Alice estimating Bob's direct channel
    dir_b1: float  # Bob estimating Alice's
    dir_e1: float  # Eve, Alice's pilot
    dir_e2: float  # Eve, Bob's pilot
    # step 2 (reflected probing), one slot of length t_s
    ref_a: float
    ref_b: float
    ref_ae: float
    ref_be: float
    # after subtracting the step-1 estimate
    z_a: float = field(init=False)
    z_b: float = field(init=False)
    z_ae: float = field(init=False)
    z_be: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "z_a", self.dir_a2 + self.ref_a)
        object.__setattr__(self, "z_b", self.dir_b1 + self.ref_b)
        object.__setattr__(self, "z_ae", self.dir_e1 + self.ref_ae)
        object.__setattr__(self, "z_be", self.dir_e2 + self.ref_be)

    def direct_for(self, node: str) -> float:
        """Step-1 noise reused in every round's subtraction at ``node``."""
        return {"a": self.dir_a2, "b": self.dir_b1}[node]

    def reflected_for(self, node: str) -> float:
        return {"a": self.ref_a, "b": self.ref_b}[node]

    def combined_for(self, node: str) -> float:
        return {"a": self.z_a, "b": self.z_b}[node]


def estimation_variances(scn: ScenarioConfig, plan: ProbePlan) -> EstimationVariances:
    if plan.t_d <= 0 or plan.t_s <= 0:
        raise ValueError("estimation variances need t_d > 0 and t_s > 0")
    nm = noise_power(scn)
    pa, pb, td, ts = scn.power_a, scn.power_b, plan.t_d, plan.t_s
    return EstimationVariances(
        dir_a2=nm.sigma2_a / (pb * td),
        dir_b1=nm.sigma2_b / (pa * td),
        dir_e1=nm.sigma2_e / (pa * td),
        dir_e2=nm.sigma2_e / (pb * td),
        ref_a=nm.sigma2_a / (pb * ts),
        ref_b=nm.sigma2_b / (pa * ts),
        ref_ae=nm.sigma2_e / (pa * ts),
        ref_be=nm.sigma2_e / (pb * ts),
    )


@lru_cache(maxsize=32)
def _unit_kernel(geom: IrsGeometry) -> CorrelationMatrix:
    R = spatial_correlation(geom)
    R.entries.setflags(write=False)
    return R


def irs_kernels(scn: ScenarioConfig) -> dict[str, CorrelationMatrix]:
    """Scaled correlation matrices of the Alice-, Bob- and Eve-to-IRS vectors keyed 'a', 'b', 'e'."""
    R = _unit_kernel(scn.irs)
    return {
        node: scale_correlation(R, path_gain(scn, f"{node}r"), scn.irs)
        for node in ("a", "b", "e")
    }


def node_correlation(scn: ScenarioConfig) -> np.ndarray:
    """3x3 correlation between the a, b, e channel vectors seen by a common receiver."""
    r_ab, r_ae, r_be = (spatial_rho(scn, p) for p in PAIRS)
    return np.array([[1.0, r_ab, r_ae], [r_ab, 1.0, r_be], [r_ae, r_be, 1.0]])


def direct_correlation(scn: ScenarioConfig) -> np.ndarray:
    """Covariance of the direct coefficients (h_ab, h_ae, h_be).

    h_ab and h_ae share the transmitter Alice, so they decorrelate over the
    receiver spacing d_be; likewise h_ab, h_be over d_ae and h_ae, h_be over d_ab.
    """
    r_ab, r_ae, r_be = (spatial_rho(scn, p) for p in PAIRS)
    s = np.sqrt([path_gain(scn, "ab"), path_gain(scn, "ae"), path_gain(scn, "be")])
    C = np.array([[1.0, r_be, r_ae], [r_be, 1.0, r_ab], [r_ae, r_ab, 1.0]])
    return C * np.outer(s, s)
