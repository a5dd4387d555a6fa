"""Feature-track corruption models: Gaussian noise, per-track drift, and
attribution swaps.

The three corruptions compose in the fixed order drift -> noise -> swap, so
zeroing two of them recovers each single-axis experiment exactly; with all
parameters zero the pipeline is the identity on frames.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from .sensors import VisionFrame

__all__ = [
    "DriftRegistry",
    "PerturbationConfig",
    "PerturbationPipeline",
    "add_gaussian_noise",
    "apply_drift",
    "swap_attributions",
]


@dataclass(frozen=True)
class PerturbationConfig:
    sigma_p: float = 0.0  # px, iid Gaussian noise per coordinate
    sigma_b: float = 0.0  # px, per-frame drift-increment std per coordinate
    eta: float = 0.0  # fraction of tracked features swapped per frame
    seed: int = 0

    def __post_init__(self):
        if self.sigma_p < 0 or self.sigma_b < 0:
            raise ValueError("noise stds must be non-negative")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must be in [0, 1]")

    @property
    def is_identity(self) -> bool:
        return self.sigma_p == 0.0 and self.sigma_b == 0.0 and self.eta == 0.0


class DriftRegistry:
    """Per-feature pixel bias state.

    An entry is created at (0, 0) when a feature is first seen, accumulates
    a Gaussian increment per frame while the feature stays in view, and is
    dropped when the track ends (so a re-detected feature restarts at zero).
    """

    def __init__(self):
        self.biases: Dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.biases)

    def get(self, feature_id: int) -> np.ndarray:
        return self.biases[feature_id]


def add_gaussian_noise(frame: VisionFrame, sigma_p: float, rng) -> VisionFrame:
    """Add iid N(0, sigma_p^2) to each pixel coordinate; ids untouched."""
    if sigma_p == 0.0 or len(frame) == 0:
        return frame
    noise = rng.normal(0.0, sigma_p, size=frame.pixels.shape)
    return VisionFrame(t=frame.t, ids=frame.ids.copy(), pixels=frame.pixels + noise)


def apply_drift(
    frame: VisionFrame, registry: DriftRegistry, sigma_b: float, rng
) -> VisionFrame:
    """Advance each observed feature's bias walk and add it to the pixel.

    Bookkeeping (entry creation and purge of ended tracks) runs even at
    sigma_b = 0 so the registry state matches the track structure.
    """
    biases = registry.biases
    current = set(int(i) for i in frame.ids)
    for fid in [k for k in biases if k not in current]:
        del biases[fid]
    if len(frame) == 0:
        return frame
    increments = (
        rng.normal(0.0, sigma_b, size=(len(frame), 2)) if sigma_b > 0.0 else None
    )
    pixels = frame.pixels.copy()
    for row, fid in enumerate(frame.ids):
        fid = int(fid)
        b = biases.get(fid)
        if b is None:
            b = np.zeros(2)
            biases[fid] = b
        if increments is not None:
            b += increments[row]
        pixels[row] += b
    return VisionFrame(t=frame.t, ids=frame.ids.copy(), pixels=pixels)


def swap_attributions(
    frame: VisionFrame,
    eta: float,
    rng,
    pool_ids: Optional[Iterable[int]] = None,
) -> Tuple[VisionFrame, np.ndarray]:
    """Exchange the pixel measurements of eta * M randomly chosen features.

    M counts the eligible observations (those in pool_ids when given, all
    otherwise). The selection count rounds down to an even number; selected
    observations are paired uniformly at random and each pair swaps pixels.
    Ids, ordering, and non-selected observations are untouched.

    Returns the perturbed frame and the array of swapped feature ids (the
    harness uses it to score gate decisions on corrupted measurements).
    """
    no_swaps = (frame, np.empty(0, dtype=np.int64))
    if eta == 0.0 or len(frame) == 0:
        return no_swaps
    if pool_ids is None:
        eligible = np.arange(len(frame))
    else:
        pool = set(int(i) for i in pool_ids)
        eligible = np.array(
            [k for k, fid in enumerate(frame.ids) if int(fid) in pool], dtype=np.intp
        )
    m = eligible.shape[0]
    k = 2 * int(eta * m / 2.0)
    if k < 2:
        return no_swaps
    chosen = rng.choice(eligible, size=k, replace=False)
    pixels = frame.pixels.copy()
    first = chosen[0::2]
    second = chosen[1::2]
    tmp = pixels[first].copy()
    pixels[first] = pixels[second]
    pixels[second] = tmp
    swapped = np.sort(frame.ids[chosen])
    return VisionFrame(t=frame.t, ids=frame.ids.copy(), pixels=pixels), swapped


class PerturbationPipeline:
    """Per-trial stateful composition: drift, then noise, then swaps.

    Holds the drift registry and three independent RNG streams, so trials
    never share mutable state and each corruption's randomness is isolated
    from the others.
    """

    def __init__(self, cfg: PerturbationConfig, seed_seq: Optional[np.random.SeedSequence] = None):
        self.cfg = cfg
        if seed_seq is None:
            seed_seq = np.random.SeedSequence(cfg.seed)
        drift_ss, noise_ss, swap_ss = seed_seq.spawn(3)
        self.drift_rng = np.random.default_rng(drift_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.swap_rng = np.random.default_rng(swap_ss)
        self.registry = DriftRegistry()

    def apply(
        self, frame: VisionFrame, pool_ids: Optional[Iterable[int]] = None
    ) -> Tuple[VisionFrame, np.ndarray]:
        frame = apply_drift(frame, self.registry, self.cfg.sigma_b, self.drift_rng)
        frame = add_gaussian_noise(frame, self.cfg.sigma_p, self.noise_rng)
        return swap_attributions(frame, self.cfg.eta, self.swap_rng, pool_ids)
