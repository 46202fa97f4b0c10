"""Stochastic model of the optical link, one dim pulse per slot.

Time inside a slot is measured from the bright trigger pulse. The dim pulse
reaches the receiver at ``dim_delay`` via the short path (SP) and
``sp_lp_delay`` later via the long path (LP); coincidence windows of width
``window_width`` are centred on those two instants.

Two code paths share the same physics:

* scalar helpers (:func:`transmit_pulse`, :func:`propagate`,
  :func:`receive_pulse`) that trace individual photons, and
* batch helpers (:func:`transmit_batch`, :func:`propagate_batch`,
  :func:`receive_batch`) that draw multinomial photon routings for millions of
  slots at once and only drop into Python for the few slots where something
  can click.

Both feed the same per-slot resolver, which applies dead time and classifies
the registered click into the early window, the late window, or neither.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .polarization import (
    H,
    QUARTER_WAVE,
    RCP,
    ZERO_WAVE,
    PolarizationState,
    apply_retarder,
    pbs_probabilities,
    projection_probability,
    state_of,
)


class TimingConvention(str, enum.Enum):
    """Which receiver path carries the quarter-wave retarder.

    ``OPTICS`` puts it on the short path, so H pulses land in the early
    window and RCP pulses in the late one. ``SWAPPED`` swaps the retarders
    between the paths, giving early -> RCP and late -> H.
    """

    OPTICS = "optics"
    SWAPPED = "swapped"


class OutcomeKind(str, enum.Enum):
    NONE = "none"
    EARLY = "early"
    LATE = "late"
    DUAL = "dual"


class Cause(str, enum.Enum):
    SIGNAL = "signal"
    DARK = "dark"
    BACKGROUND = "background"
    AFTERPULSE = "afterpulse"
    REFLECTION = "reflection"


KIND_CODES = (OutcomeKind.NONE, OutcomeKind.EARLY, OutcomeKind.LATE, OutcomeKind.DUAL)
CAUSE_CODES = (Cause.SIGNAL, Cause.DARK, Cause.BACKGROUND, Cause.AFTERPULSE, Cause.REFLECTION)
_KIND_INDEX = {k: i for i, k in enumerate(KIND_CODES)}
_CAUSE_INDEX = {c: i for i, c in enumerate(CAUSE_CODES)}

# Pockels-cell settings for the two B92 bit values.
B92_STATES = (H, RCP)


def _check_prob(name: str, value: float) -> None:
    if not (0.0 <= value <= 1.0) or math.isnan(value):
        raise ConfigError(name, f"must be a probability in [0, 1], got {value!r}")


def _check_nonneg(name: str, value: float) -> None:
    if not value >= 0.0:
        raise ConfigError(name, f"must be >= 0, got {value!r}")


@dataclass(frozen=True)
class SourceParams:
    mean_photons: float = 0.7
    pulse_rate: float = 20e3
    bright_pulse_photons: float = 1e5
    pulse_length: float = 1e-9
    # "poisson" for a weak coherent pulse, "single" for an ideal one-photon source
    photon_statistics: str = "poisson"

    def __post_init__(self) -> None:
        _check_nonneg("source.mean_photons", self.mean_photons)
        if not self.pulse_rate > 0:
            raise ConfigError("source.pulse_rate", f"must be > 0, got {self.pulse_rate!r}")
        if self.photon_statistics not in ("poisson", "single"):
            raise ConfigError("source.photon_statistics", "must be 'poisson' or 'single'")


@dataclass(frozen=True)
class ChannelParams:
    coupling_efficiency: float = 0.02
    path_length: float = 205.0

    def __post_init__(self) -> None:
        _check_prob("channel.coupling_efficiency", self.coupling_efficiency)
        _check_nonneg("channel.path_length", self.path_length)


@dataclass(frozen=True)
class ReceiverParams:
    dim_delay: float = 50e-9
    sp_lp_delay: float = 5e-9
    window_width: float = 5e-9
    detector_count: int = 1
    timing: TimingConvention = TimingConvention.OPTICS

    def __post_init__(self) -> None:
        if not self.window_width > 0:
            raise ConfigError("receiver.window_width", "must be > 0")
        if self.sp_lp_delay < self.window_width:
            raise ConfigError("receiver.sp_lp_delay", "early and late windows overlap (sp_lp_delay < window_width)")
        if self.dim_delay - self.window_width / 2 < 0:
            raise ConfigError("receiver.dim_delay", "early window starts before the trigger")
        if self.detector_count not in (1, 2):
            raise ConfigError("receiver.detector_count", "must be 1 or 2")
        object.__setattr__(self, "timing", TimingConvention(self.timing))

    @property
    def receiver_pass_probability(self) -> float:
        # 1/2 for the path split times 1/2 at the PBS
        return 0.25

    @property
    def early_time(self) -> float:
        return self.dim_delay

    @property
    def late_time(self) -> float:
        return self.dim_delay + self.sp_lp_delay

    def window(self, kind: OutcomeKind) -> tuple[float, float]:
        centre = self.early_time if kind is OutcomeKind.EARLY else self.late_time
        return centre - self.window_width / 2, centre + self.window_width / 2

    def classify_time(self, t: float) -> OutcomeKind:
        for kind in (OutcomeKind.EARLY, OutcomeKind.LATE):
            lo, hi = self.window(kind)
            if lo <= t < hi:
                return kind
        return OutcomeKind.NONE


@dataclass(frozen=True)
class DetectorParams:
    per_photon_efficiency: float = 0.65
    dark_rate: float = 80.0
    background_rate: float = 1000.0
    dead_time: float = 35e-9
    afterpulse_prob_per_slot: float = 8e-5
    reflection_late_click_prob: float = 2.27e-4

    def __post_init__(self) -> None:
        _check_prob("detector.per_photon_efficiency", self.per_photon_efficiency)
        _check_nonneg("detector.dark_rate", self.dark_rate)
        _check_nonneg("detector.background_rate", self.background_rate)
        _check_nonneg("detector.dead_time", self.dead_time)
        _check_prob("detector.afterpulse_prob_per_slot", self.afterpulse_prob_per_slot)
        _check_prob("detector.reflection_late_click_prob", self.reflection_late_click_prob)

    @property
    def noise_rate(self) -> float:
        return self.dark_rate + self.background_rate

    @classmethod
    def ideal(cls) -> "DetectorParams":
        return cls(
            per_photon_efficiency=1.0,
            dark_rate=0.0,
            background_rate=0.0,
            dead_time=0.0,
            afterpulse_prob_per_slot=0.0,
            reflection_late_click_prob=0.0,
        )


@dataclass(frozen=True)
class PulseRecord:
    slot_index: int
    alice_bit: int
    prepared_state: PolarizationState
    photon_count: int


@dataclass(frozen=True)
class Click:
    time: float
    detector_id: int
    cause: Cause


@dataclass(frozen=True)
class DetectionOutcome:
    kind: OutcomeKind
    cause: Cause | None = None
    detector_id: int | None = None
    # every click the detectors registered in this slot, after dead time
    clicks: tuple[Click, ...] = field(default=(), compare=False)


NO_DETECTION = DetectionOutcome(OutcomeKind.NONE)


# --------------------------------------------------------------------------
# photon statistics


def poisson_pmf(mu: float, n: int) -> float:
    if n < 0:
        return 0.0
    if mu == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - math.lgamma(n + 1))


def draw_photon_number(mu: float, rng: np.random.Generator) -> int:
    if mu < 0:
        raise ValueError("mean photon number must be >= 0")
    return int(rng.poisson(mu))


def detector_fire_probability(n: int, efficiency: float) -> float:
    """Probability that at least one of ``n`` photons fires the detector."""
    return 1.0 - (1.0 - efficiency) ** n


# --------------------------------------------------------------------------
# optics


def path_retarders(rp: ReceiverParams):
    """(SP retarder, LP retarder) for the configured timing convention."""
    if rp.timing is TimingConvention.OPTICS:
        return QUARTER_WAVE, ZERO_WAVE
    return ZERO_WAVE, QUARTER_WAVE


def route_probabilities(state: PolarizationState, rp: ReceiverParams) -> np.ndarray:
    """Per-photon probabilities of reaching (det1 early, det1 late, det2 early, det2 late).

    Detector 1 looks at the transmitted port of the quarter-wave path and the
    reflected port of the zero-wave path; detector 2 sits on the other two
    outputs. Entries sum to 1.
    """
    out = np.zeros(4)
    for window, retarder in enumerate(path_retarders(rp)):
        p_t, p_r = pbs_probabilities(apply_retarder(state, retarder))
        det1, det2 = (p_t, p_r) if retarder is QUARTER_WAVE else (p_r, p_t)
        out[window] += 0.5 * det1
        out[2 + window] += 0.5 * det2
    return out


def bit_windows(rp: ReceiverParams) -> dict[int, OutcomeKind]:
    """Map each B92 bit value to the detector-1 window its signal lands in."""
    mapping = {}
    for bit, state in enumerate(B92_STATES):
        probs = route_probabilities(state, rp)
        mapping[bit] = OutcomeKind.EARLY if probs[0] > probs[1] else OutcomeKind.LATE
    return mapping


def window_bits(rp: ReceiverParams) -> dict[OutcomeKind, int]:
    return {w: b for b, w in bit_windows(rp).items()}


# --------------------------------------------------------------------------
# scalar path


def transmit_pulse(bit: int, src: SourceParams, rng: np.random.Generator, slot_index: int = 0) -> PulseRecord:
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    # Pockels cell: zero-wave for 0, quarter-wave for 1
    state = apply_retarder(H, QUARTER_WAVE if bit else ZERO_WAVE)
    if src.photon_statistics == "single":
        n = 1
    else:
        n = draw_photon_number(src.mean_photons, rng)
    return PulseRecord(slot_index, bit, state, n)


def propagate(p: PulseRecord, ch: ChannelParams, rng: np.random.Generator) -> PulseRecord:
    survivors = int(rng.binomial(p.photon_count, ch.coupling_efficiency)) if p.photon_count else 0
    return replace(p, photon_count=survivors)


def _noise_span(rp: ReceiverParams, dp: DetectorParams) -> tuple[float, float]:
    # a noise click up to one dead time before the early window can still blank it
    lo = max(0.0, rp.window(OutcomeKind.EARLY)[0] - dp.dead_time)
    return lo, rp.window(OutcomeKind.LATE)[1]


def _imperfection_clicks(
    rng: np.random.Generator,
    rp: ReceiverParams,
    dp: DetectorParams,
    detector_id: int,
    n_noise: int,
    afterpulse: bool,
    reflection: bool,
) -> list[Click]:
    clicks = []
    if n_noise:
        lo, hi = _noise_span(rp, dp)
        times = rng.uniform(lo, hi, n_noise)
        dark = rng.random(n_noise) < dp.dark_rate / dp.noise_rate
        for t, d in zip(times, dark):
            clicks.append(Click(float(t), detector_id, Cause.DARK if d else Cause.BACKGROUND))
    if afterpulse:
        lo, hi = rp.window(OutcomeKind.EARLY)[0], rp.window(OutcomeKind.LATE)[1]
        clicks.append(Click(float(rng.uniform(lo, hi)), detector_id, Cause.AFTERPULSE))
    if reflection:
        lo, hi = rp.window(OutcomeKind.LATE)
        clicks.append(Click(float(rng.uniform(lo, hi)), detector_id, Cause.REFLECTION))
    return clicks


def resolve_slot(candidates: Sequence[Click], rp: ReceiverParams, dp: DetectorParams) -> DetectionOutcome:
    """Apply dead time per detector and classify the registered clicks."""
    last: dict[int, float] = {}
    registered = []
    for c in sorted(candidates, key=lambda c: (c.time, c.detector_id, _CAUSE_INDEX[c.cause])):
        prev = last.get(c.detector_id)
        if prev is not None and c.time - prev < dp.dead_time:
            continue
        last[c.detector_id] = c.time
        registered.append(c)

    in_window = [(c, rp.classify_time(c.time)) for c in registered]
    in_window = [(c, k) for c, k in in_window if k is not OutcomeKind.NONE]
    if not in_window:
        return DetectionOutcome(OutcomeKind.NONE, clicks=tuple(registered))
    first, kind = in_window[0]
    if len({c.detector_id for c, _ in in_window}) > 1:
        return DetectionOutcome(OutcomeKind.DUAL, first.cause, None, tuple(registered))
    return DetectionOutcome(kind, first.cause, first.detector_id, tuple(registered))


def receive_pulse(
    p: PulseRecord,
    rp: ReceiverParams,
    dp: DetectorParams,
    rng: np.random.Generator,
    *,
    force_path: str | None = None,
    force_pbs: str | None = None,
    force_fire: bool | None = None,
) -> DetectionOutcome:
    """Trace each photon of ``p`` through the passive receiver.

    ``force_path`` ("SP"/"LP"), ``force_pbs`` ("transmit"/"reflect") and
    ``force_fire`` pin the corresponding random choice for every photon.
    """
    sp_ret, lp_ret = path_retarders(rp)
    candidates: list[Click] = []
    for _ in range(p.photon_count):
        path = force_path or ("SP" if rng.random() < 0.5 else "LP")
        retarder = sp_ret if path == "SP" else lp_ret
        p_t, _ = pbs_probabilities(apply_retarder(p.prepared_state, retarder))
        port = force_pbs or ("transmit" if rng.random() < p_t else "reflect")
        det1_port = "transmit" if retarder is QUARTER_WAVE else "reflect"
        detector_id = 1 if port == det1_port else 2
        if detector_id > rp.detector_count:
            continue
        fires = force_fire if force_fire is not None else rng.random() < dp.per_photon_efficiency
        if fires:
            t = rp.early_time if path == "SP" else rp.late_time
            candidates.append(Click(t, detector_id, Cause.SIGNAL))

    lam = dp.noise_rate * (_noise_span(rp, dp)[1] - _noise_span(rp, dp)[0])
    for det in range(1, rp.detector_count + 1):
        n_noise = int(rng.poisson(lam)) if lam > 0 else 0
        ap = dp.afterpulse_prob_per_slot > 0 and rng.random() < dp.afterpulse_prob_per_slot
        refl = dp.reflection_late_click_prob > 0 and rng.random() < dp.reflection_late_click_prob
        candidates.extend(_imperfection_clicks(rng, rp, dp, det, n_noise, ap, refl))
    return resolve_slot(candidates, rp, dp)


# --------------------------------------------------------------------------
# batch path


@dataclass
class BatchOutcome:
    """Per-slot receiver results as parallel arrays.

    ``kind`` indexes :data:`KIND_CODES`, ``cause`` indexes :data:`CAUSE_CODES`
    (-1 when nothing registered), ``detector`` is 1 or 2 (0 for none/dual).
    """

    kind: np.ndarray
    cause: np.ndarray
    detector: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "BatchOutcome":
        return cls(np.zeros(n, np.int8), np.full(n, -1, np.int8), np.zeros(n, np.int8))

    def __len__(self) -> int:
        return len(self.kind)

    def outcome(self, i: int) -> DetectionOutcome:
        kind = KIND_CODES[self.kind[i]]
        cause = CAUSE_CODES[self.cause[i]] if self.cause[i] >= 0 else None
        det = int(self.detector[i]) or None
        return DetectionOutcome(kind, cause, det)

    @classmethod
    def concat(cls, parts: Sequence["BatchOutcome"]) -> "BatchOutcome":
        if not parts:
            return cls.empty(0)
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("kind", "cause", "detector")))


def transmit_batch(bits: np.ndarray, src: SourceParams, rng: np.random.Generator) -> np.ndarray:
    """Photon numbers for a run of dim pulses (the encoded state is just the bit)."""
    if src.photon_statistics == "single":
        return np.ones(len(bits), dtype=np.int64)
    return rng.poisson(src.mean_photons, len(bits))


def propagate_batch(photons: np.ndarray, ch: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    return rng.binomial(photons, ch.coupling_efficiency)


def receive_batch(
    state_index: np.ndarray,
    photons: np.ndarray,
    rp: ReceiverParams,
    dp: DetectorParams,
    rng: np.random.Generator,
    states: Sequence[PolarizationState] = B92_STATES,
) -> BatchOutcome:
    n = len(photons)
    out = BatchOutcome.empty(n)
    n_det = rp.detector_count
    eps = dp.per_photon_efficiency

    route = np.array([route_probabilities(s, rp) for s in states]) * eps
    pvals = np.hstack([route, np.clip(1.0 - route.sum(axis=1, keepdims=True), 0.0, 1.0)])

    lit = np.flatnonzero(photons > 0)
    counts = rng.multinomial(photons[lit], pvals[state_index[lit]]) if len(lit) else np.zeros((0, 5), np.int64)
    # columns: det1 early, det1 late, det2 early, det2 late
    used = counts[:, : 2 * n_det]
    lit_fire = used.sum(axis=1) > 0
    sig_slots = lit[lit_fire]
    sig_counts = used[lit_fire]

    lo, hi = _noise_span(rp, dp)
    lam = dp.noise_rate * (hi - lo)
    noise = rng.poisson(lam, (n, n_det)) if lam > 0 else None
    ap = rng.random((n, n_det)) < dp.afterpulse_prob_per_slot if dp.afterpulse_prob_per_slot > 0 else None
    refl = rng.random((n, n_det)) < dp.reflection_late_click_prob if dp.reflection_late_click_prob > 0 else None

    active = np.zeros(n, bool)
    active[sig_slots] = True
    for extra in (noise, ap, refl):
        if extra is not None:
            active |= extra.any(axis=1)

    sig_lookup = dict(zip(sig_slots.tolist(), range(len(sig_slots))))
    times = (rp.early_time, rp.late_time)
    for i in np.flatnonzero(active).tolist():
        candidates: list[Click] = []
        j = sig_lookup.get(i)
        if j is not None:
            for col in np.flatnonzero(sig_counts[j]).tolist():
                candidates.append(Click(times[col % 2], 1 + col // 2, Cause.SIGNAL))
        for d in range(n_det):
            candidates.extend(
                _imperfection_clicks(
                    rng,
                    rp,
                    dp,
                    d + 1,
                    int(noise[i, d]) if noise is not None else 0,
                    bool(ap[i, d]) if ap is not None else False,
                    bool(refl[i, d]) if refl is not None else False,
                )
            )
        res = resolve_slot(candidates, rp, dp)
        out.kind[i] = _KIND_INDEX[res.kind]
        if res.cause is not None:
            out.cause[i] = _CAUSE_INDEX[res.cause]
        out.detector[i] = res.detector_id or 0
    return out


# --------------------------------------------------------------------------
# Analyzer-mode Bob: an explicit projective test per photon


# Bob's two B92 tests; a click on V means 1, a click on LCP means 0.
B92_ANALYZERS = (state_of("V"), state_of("LCP"))


def analyzer_probabilities() -> np.ndarray:
    """Detection probability for each (Alice state, Bob analyzer) pair."""
    return np.array([[projection_probability(s, a) for a in B92_ANALYZERS] for s in B92_STATES])


def analyzer_trials(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Single-photon trials with a uniformly chosen analyzer.

    Returns ``(trials, detections)``, both 2x2 count tables indexed by
    (Alice's bit, Bob's analyzer).
    """
    bits = rng.integers(0, 2, n)
    tests = rng.integers(0, 2, n)
    p = analyzer_probabilities()[bits, tests]
    hit = rng.random(n) < p
    trials = np.zeros((2, 2), np.int64)
    detections = np.zeros((2, 2), np.int64)
    np.add.at(trials, (bits, tests), 1)
    np.add.at(detections, (bits[hit], tests[hit]), 1)
    return trials, detections


# --------------------------------------------------------------------------
# BB84 variant: active basis choice, one detector per analyzer output


BB84_STATES = (state_of("H"), state_of("V"), state_of("RCP"), state_of("LCP"))


def bb84_state_index(bits: np.ndarray, bases: np.ndarray) -> np.ndarray:
    """Basis 0 is rectilinear (H=0, V=1), basis 1 circular (RCP=0, LCP=1)."""
    return 2 * bases.astype(np.int64) + bits.astype(np.int64)


def receive_bb84_batch(
    state_index: np.ndarray,
    bob_bases: np.ndarray,
    photons: np.ndarray,
    rp: ReceiverParams,
    dp: DetectorParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Bob's BB84 results and their causes, per slot.

    Results are 0/1, -1 for no click, -2 for a double click; causes index
    :data:`CAUSE_CODES` (-1 when nothing clicked). Each photon is projected
    onto the basis Bob chose for that slot; dark and background clicks fall
    in a single coincidence window per detector.
    """
    n = len(photons)
    eps = dp.per_photon_efficiency
    table = np.zeros((8, 3))
    for s, state in enumerate(BB84_STATES):
        for b in (0, 1):
            p0 = projection_probability(state, BB84_STATES[2 * b])
            table[2 * s + b] = (p0 * eps, (1 - p0) * eps, 1 - eps)
    signal = np.zeros((n, 2), bool)
    lit = np.flatnonzero(photons > 0)
    if len(lit):
        counts = rng.multinomial(photons[lit], table[2 * state_index[lit] + bob_bases[lit]])
        signal[lit] = counts[:, :2] > 0
    noise = np.zeros((n, 2), bool)
    p_noise = -math.expm1(-dp.noise_rate * rp.window_width)
    if p_noise > 0:
        noise = rng.random((n, 2)) < p_noise
    fired = signal | noise
    result = np.full(n, -1, np.int8)
    result[fired[:, 0] & ~fired[:, 1]] = 0
    result[fired[:, 1] & ~fired[:, 0]] = 1
    result[fired[:, 0] & fired[:, 1]] = -2

    cause = np.full(n, -1, np.int8)
    clicked = result != -1
    cause[clicked] = _CAUSE_INDEX[Cause.SIGNAL]
    noise_only = clicked & ~signal.any(axis=1)
    if noise_only.any():
        dark = rng.random(int(noise_only.sum())) < dp.dark_rate / dp.noise_rate
        cause[noise_only] = np.where(dark, _CAUSE_INDEX[Cause.DARK], _CAUSE_INDEX[Cause.BACKGROUND])
    return result, cause


# --------------------------------------------------------------------------
# analytics


def expected_click_probability(src: SourceParams, ch: ChannelParams, rp: ReceiverParams, dp: DetectorParams) -> float:
    """Per-pulse probability of a signal click in the correct window."""
    x = src.mean_photons * ch.coupling_efficiency * rp.receiver_pass_probability * dp.per_photon_efficiency
    return -math.expm1(-x)


def convolved_click_probability(mu: float, eta: float, q: float, eps: float, tol: float = 1e-16) -> float:
    """Series form of the click probability.

    Sums, over Poisson photon numbers ``n`` and binomially surviving counts
    ``k`` (survival ``eta*q``), the chance that ``k`` photons fire the
    detector at least once.
    """
    reach = eta * q
    total = 0.0
    n = 1
    while True:
        pn = poisson_pmf(mu, n)
        # past the mode the terms only shrink; stop once they are negligible
        if n > mu and pn < tol:
            return total
        inner = sum(
            math.comb(n, k) * reach**k * (1 - reach) ** (n - k) * detector_fire_probability(k, eps)
            for k in range(1, n + 1)
        )
        total += pn * inner
        n += 1


def noise_error_rate(rp: ReceiverParams, dp: DetectorParams, pulse_rate: float) -> float:
    """Expected bit errors per second from dark and background clicks.

    Noise clicks landing in either window become key bits; half of them
    disagree with Alice's uniformly random bit.
    """
    hits = dp.noise_rate * 2 * rp.window_width * pulse_rate
    return 0.5 * hits


@dataclass(frozen=True)
class LinkPrediction:
    click_probability: float
    signal_rate: float
    noise_click_rate: float
    noise_error_rate: float
    afterpulse_error_rate: float
    reflection_error_rate: float
    sifted_rate: float
    error_rate: float
    ber: float
    early_error_rate: float
    late_error_rate: float
    afterpulse_ber_share: float

    @property
    def late_early_ratio(self) -> float:
        return self.late_error_rate / self.early_error_rate if self.early_error_rate else math.inf


def predict(src: SourceParams, ch: ChannelParams, rp: ReceiverParams, dp: DetectorParams) -> LinkPrediction:
    """Closed-form rates for detector 1 (window overlaps and dead time neglected)."""
    f = src.pulse_rate
    p_sig = expected_click_probability(src, ch, rp, dp)
    noise_hits = dp.noise_rate * 2 * rp.window_width * f
    ap_rate = dp.afterpulse_prob_per_slot * f
    refl_rate = dp.reflection_late_click_prob * f
    noise_err = noise_error_rate(rp, dp, f)
    early = noise_err / 2 + ap_rate / 4
    late = noise_err / 2 + ap_rate / 4 + refl_rate / 2
    sifted = p_sig * f + noise_hits + ap_rate + refl_rate
    errors = early + late
    return LinkPrediction(
        click_probability=p_sig,
        signal_rate=p_sig * f,
        noise_click_rate=noise_hits,
        noise_error_rate=noise_err,
        afterpulse_error_rate=ap_rate / 2,
        reflection_error_rate=refl_rate / 2,
        sifted_rate=sifted,
        error_rate=errors,
        ber=errors / sifted if sifted else 0.0,
        early_error_rate=early,
        late_error_rate=late,
        afterpulse_ber_share=(ap_rate / 2) / sifted if sifted else 0.0,
    )


def calibrate_reflection(rp: ReceiverParams, dp: DetectorParams, late_early_ratio: float = 6.0) -> float:
    """Reflection click probability per slot giving the requested late/early error ratio."""
    per_window = dp.noise_rate * rp.window_width + dp.afterpulse_prob_per_slot / 2
    return (late_early_ratio - 1.0) * per_window
