"""Network topology, path loss, fading, and CSI matrix generation.

The simulated network is an m x m grid of square cells with one base
station at each cell center.  Users are dropped uniformly at random over
the whole coverage area and associate with the nearest base station.
The channel state matrix H holds direct channel gains over noise on the
diagonal and normalized cross interference off the diagonal; downstream
it doubles as the adjacency matrix of the user graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# Path loss variants.
WBS = "wbs"
HATA_URBAN = "hata-urban"
HATA_SUBURBAN = "hata-suburban"

# Users sampled closer than 10 m to a base station are pushed out to 10 m,
# otherwise path gains blow up for coincident positions.
MIN_DISTANCE_KM = 0.01

# Every CSI entry is kept strictly positive so that the graph degree
# normalization stays well defined even for orthogonal fading draws.
CSI_FLOOR = 1e-30

DATASET_FORMAT_VERSION = 1


@dataclass
class SystemConfig:
    """Physical and problem constants of one network instance."""

    num_bs: int = 4
    num_users: int = 8
    antennas_per_bs: int = 1
    bandwidth: float = 180e3          # Hz
    noise_figure: float = 3.0         # dB
    noise_density: float = -174.0     # dBm/Hz
    static_power: float = 1.0         # W, circuit power per user
    amp_inefficiency: float = 4.0     # inverse power amplifier efficiency
    weights: np.ndarray | None = None  # per-user objective weights, default all ones
    cell_side: float = 1.0            # km
    rng_seed: int = 0

    def __post_init__(self):
        m = math.isqrt(int(self.num_bs))
        if m * m != self.num_bs:
            raise ValueError(f"num_bs must be a perfect square, got {self.num_bs}")
        if self.num_users < 1:
            raise ValueError("num_users must be at least 1")
        if self.antennas_per_bs < 1:
            raise ValueError("antennas_per_bs must be at least 1")
        if self.bandwidth <= 0 or self.static_power <= 0 or self.amp_inefficiency <= 0:
            raise ValueError("bandwidth, static_power and amp_inefficiency must be positive")
        if self.weights is None:
            self.weights = np.ones(self.num_users)
        else:
            self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.num_users,):
            raise ValueError("weights must have one entry per user")
        if np.any(self.weights < 0) or not np.any(self.weights > 0):
            raise ValueError("weights must be nonnegative with at least one positive entry")


@dataclass
class Topology:
    """Base station grid, user drop, and nearest-BS association."""

    bs_positions: np.ndarray    # (M, 2) km
    user_positions: np.ndarray  # (L, 2) km
    association: np.ndarray     # (L,) serving BS index per user


@dataclass
class PathLossModel:
    """Large-scale propagation model for one BS-user link."""

    variant: str = WBS
    shadowing_db: float | None = None  # lognormal shadowing std, None disables
    carrier_freq_mhz: float = 1900.0
    bs_height_m: float = 30.0
    mobile_height_m: float = 1.5

    def __post_init__(self):
        if self.variant not in (WBS, HATA_URBAN, HATA_SUBURBAN):
            raise ValueError(f"unknown path loss variant {self.variant!r}")
        if self.shadowing_db is not None and self.shadowing_db < 0:
            raise ValueError("shadowing_db must be nonnegative")
        if self.carrier_freq_mhz <= 0:
            raise ValueError("carrier_freq_mhz must be positive")
        if self.bs_height_m <= 0 or self.mobile_height_m <= 0:
            raise ValueError("antenna heights must be positive")


def path_loss_preset(tag: str) -> PathLossModel:
    """Map a short CLI tag to a ready-made path loss model.

    Tags ending in -sf enable 8 dB lognormal shadow fading.
    """
    presets = {
        "wbs": PathLossModel(variant=WBS),
        "urb": PathLossModel(variant=HATA_URBAN),
        "urb-sf": PathLossModel(variant=HATA_URBAN, shadowing_db=8.0),
        "sub": PathLossModel(variant=HATA_SUBURBAN),
        "sub-sf": PathLossModel(variant=HATA_SUBURBAN, shadowing_db=8.0),
    }
    if tag not in presets:
        raise ValueError(f"unknown path loss tag {tag!r}, expected one of {sorted(presets)}")
    return presets[tag]


def noise_power(cfg: SystemConfig) -> float:
    """Received noise power F*N0*B in Watts."""
    figure_lin = 10.0 ** (cfg.noise_figure / 10.0)
    density_w = 10.0 ** ((cfg.noise_density - 30.0) / 10.0)  # dBm/Hz -> W/Hz
    return figure_lin * density_w * cfg.bandwidth


def build_topology(cfg: SystemConfig, rng: np.random.Generator) -> Topology:
    """Drop users uniformly over the grid area and associate each with the nearest BS."""
    m = math.isqrt(int(cfg.num_bs))
    side = cfg.cell_side
    idx = np.arange(cfg.num_bs)
    bs = np.column_stack([(idx % m + 0.5) * side, (idx // m + 0.5) * side])
    users = rng.uniform(0.0, m * side, size=(cfg.num_users, 2))
    d = np.linalg.norm(bs[:, None, :] - users[None, :, :], axis=2)
    assoc = np.argmin(d, axis=0)  # argmin takes the lowest index on ties
    return Topology(bs_positions=bs, user_positions=users, association=assoc)


def user_bs_distances(topology: Topology) -> np.ndarray:
    """Euclidean distances in km between every BS (rows) and every user (columns)."""
    diff = topology.bs_positions[:, None, :] - topology.user_positions[None, :, :]
    return np.linalg.norm(diff, axis=2)


def path_loss_db(model: PathLossModel, distance_km, rng: np.random.Generator | None = None):
    """Path loss in dB at the given distance(s), including shadowing when enabled."""
    d = np.maximum(np.asarray(distance_km, dtype=float), MIN_DISTANCE_KM)
    if model.variant == WBS:
        # Log-distance urban-macro surrogate, reference distance 1 m.
        pl = 38.46 + 35.0 * np.log10(d * 1000.0)
    else:
        f = model.carrier_freq_mhz
        h_b = model.bs_height_m
        h_r = model.mobile_height_m
        # Small/medium city mobile antenna correction.
        a_hr = (1.1 * np.log10(f) - 0.7) * h_r - (1.56 * np.log10(f) - 0.8)
        c = 3.0 if model.variant == HATA_URBAN else 0.0
        pl = (46.3 + 33.9 * np.log10(f) - 13.82 * np.log10(h_b) - a_hr
              + (44.9 - 6.55 * np.log10(h_b)) * np.log10(d) + c)
    if model.shadowing_db:
        if rng is None:
            raise ValueError("shadowing requires an rng")
        pl = pl + rng.normal(0.0, model.shadowing_db, size=np.shape(d))
    return pl if np.ndim(distance_km) else float(pl)


def assemble_csi(fading: np.ndarray, sigma2: float) -> np.ndarray:
    """Combine per-link fading vectors into the L x L CSI matrix.

    fading[i, j] is the length-n_R channel from transmitter j to the
    receiver decoding link i (the serving BS of user i), already scaled
    by the linear path loss amplitude.  Matched filtering on the direct
    channel makes the diagonal the filter gain over noise and the
    off-diagonal entries the normalized cross correlation between the
    direct channel and each interferer.
    """
    L = fading.shape[0]
    H = np.empty((L, L))
    for i in range(L):
        g = fading[i]                     # (L, n_R) channels into link i
        inner = g @ g[i].conj()           # sum_k g[j,k] * conj(g[i,k])
        own = inner[i].real               # ||h_i||^2
        if own <= 0.0:
            raise ValueError("degenerate zero fading draw")
        row = np.abs(inner) ** 2 / (sigma2 * own)
        row[i] = own / sigma2
        H[i] = row
    return np.maximum(H, CSI_FLOOR)


def draw_channel(topology: Topology, model: PathLossModel, cfg: SystemConfig,
                 rng: np.random.Generator) -> np.ndarray:
    """Draw fast fading on every decoded link and assemble the CSI matrix.

    Large-scale attenuation follows the BS-user geometry, while fast
    fading is drawn independently for every (link, transmitter) pair:
    each uplink is decoded on its own resource, so its fades decorrelate
    from those of co-served links.
    """
    sigma2 = noise_power(cfg)
    d = user_bs_distances(topology)
    n_r = cfg.antennas_per_bs
    L = d.shape[1]
    for _ in range(100):
        pl = path_loss_db(model, d, rng)
        amp = 10.0 ** (-np.asarray(pl) / 20.0)[topology.association]   # (L, L)
        fading = (rng.standard_normal((L, L, n_r)) + 1j * rng.standard_normal((L, L, n_r)))
        fading *= amp[:, :, None] / np.sqrt(2.0)
        direct = np.einsum("iik,iik->i", fading, fading.conj()).real
        if np.all(direct > 0.0):
            return assemble_csi(fading, sigma2)
    raise RuntimeError("fading draw degenerate after 100 attempts")


def generate_channels(cfg: SystemConfig, model: PathLossModel, n: int,
                      seed: int | None = None) -> np.ndarray:
    """Generate n independent channel realizations as an (n, L, L) array.

    Each sample gets its own RNG stream derived from (seed, sample index),
    so generating samples in parallel or in any order gives identical data.
    """
    if seed is None:
        seed = cfg.rng_seed
    out = np.empty((n, cfg.num_users, cfg.num_users))
    for k in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), k]))
        topology = build_topology(cfg, rng)
        out[k] = draw_channel(topology, model, cfg, rng)
    return out


def _system_dict(cfg: SystemConfig) -> dict:
    d = {k: getattr(cfg, k) for k in (
        "num_bs", "num_users", "antennas_per_bs", "bandwidth", "noise_figure",
        "noise_density", "static_power", "amp_inefficiency", "cell_side", "rng_seed")}
    d["weights"] = np.asarray(cfg.weights).tolist()
    return d


def save_dataset(path, channels: np.ndarray, cfg: SystemConfig, model: PathLossModel,
                 seed: int) -> None:
    """Write channels plus generating configuration to a self-describing npz file."""
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "system": _system_dict(cfg),
        "path_loss": {
            "variant": model.variant,
            "shadowing_db": model.shadowing_db,
            "carrier_freq_mhz": model.carrier_freq_mhz,
            "bs_height_m": model.bs_height_m,
            "mobile_height_m": model.mobile_height_m,
        },
        "seed": int(seed),
        "num_channels": int(channels.shape[0]),
    }
    np.savez(path, meta=json.dumps(meta), channels=np.asarray(channels, dtype=np.float64))


def load_dataset(path):
    """Read back an npz dataset, returning (channels, meta dict)."""
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != DATASET_FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format {meta.get('format_version')!r}")
        channels = np.array(data["channels"])
    return channels, meta


def system_from_meta(meta: dict) -> SystemConfig:
    d = dict(meta["system"])
    d["weights"] = np.asarray(d["weights"], dtype=float)
    return SystemConfig(**d)


def path_loss_from_meta(meta: dict) -> PathLossModel:
    return PathLossModel(**meta["path_loss"])
