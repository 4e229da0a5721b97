"""Model-predictive pacing-rate controller.

The controller models the path as a single queue whose latency grows while
the pacing rate exceeds the bottleneck rate:

    l(n + 1) = l(n) + (r(n) - r_B) / r_B * dt(n),   l_P <= l(n) <= l_B

Every acknowledgement refreshes the model parameters (propagation latency,
bottleneck latency and bottleneck rate) and re-solves a one-step quadratic
cost for the next pacing rate, at most once per bottleneck latency estimate.

Two probe timers keep the estimates fresh. A low probe halves the rate so the
queue drains and the propagation latency becomes visible; a high probe raises
the rate by a quarter until the extra data would have filled a few packets of
queue, or until the latency rises above its pre-probe maximum. A fresh flow
starts with back-to-back high probes (startup) that stop at the first
sustained latency rise and are followed by one draining low probe.

Time is always supplied by the caller, so identical observation sequences
produce identical decisions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import StrEnum

from .exceptions import ConfigurationError, ObservationError

logger = logging.getLogger(__name__)

DEFAULT_C1 = 0.2
DEFAULT_C2 = 0.3
DEFAULT_ALPHA = 1 / 8
DEFAULT_TAU_D = 1.0
DEFAULT_PROBE_GAIN_UP = 1.25
DEFAULT_PROBE_GAIN_DOWN = 0.5
DEFAULT_PROBE_EXCESS = 8.0
DEFAULT_RISE_SAMPLES = 2
DEFAULT_STARTUP_RISE = 0.3
PROBE_INTERVAL_TAU_MULTIPLE = 10.0
HIGH_PROBE_INTERVAL_MULTIPLE = 2.0
PROBE_DURATION_LB_MULTIPLE = 3.0
ESTIMATOR_WINDOW_TAU_MULTIPLE = 2.0


class ProbePhase(StrEnum):
    """Probe state of a controller."""

    NONE = "none"
    PROBING_LOW = "probing_low"
    PROBING_HIGH = "probing_high"


@dataclass(frozen=True, slots=True)
class ControllerConfig:
    """User-set weights and limits for the pacing controller.

    ``c1`` weighs the distance of the predicted latency from the target,
    ``c2`` the latency variance and ``c3`` normalizes the rate variance
    (defaults to ``1 - c1 - c2``). ``target_latency`` of ``None`` selects the
    midpoint between the propagation and bottleneck latency estimates.
    ``probe_interval`` of ``None`` resolves to ``10 * tau_d``; low probes
    recur at that interval and high probes at twice it. ``probe_duration`` of
    ``None`` makes a low probe last ``3 * l_hat_b``. A high probe commits once
    ``probe_excess`` packets of extra data have been sent, and aborts after
    ``rise_samples`` consecutive samples above the pre-probe ``l_hat_b`` (in
    startup, above ``(1 + startup_rise)`` times the minimum RTT).
    ``estimator_min_window`` of ``None`` resolves to ``2 * tau_d``.
    """

    c1: float = DEFAULT_C1
    c2: float = DEFAULT_C2
    c3: float | None = None
    alpha: float = DEFAULT_ALPHA
    tau_d: float = DEFAULT_TAU_D
    target_latency: float | None = None
    min_rate: float = 0.0
    max_rate: float = math.inf
    probe_interval: float | None = None
    probe_gain_up: float = DEFAULT_PROBE_GAIN_UP
    probe_gain_down: float = DEFAULT_PROBE_GAIN_DOWN
    probe_duration: float | None = None
    probing: bool = True
    startup: bool = True
    probe_excess: float = DEFAULT_PROBE_EXCESS
    rise_samples: int = DEFAULT_RISE_SAMPLES
    startup_rise: float = DEFAULT_STARTUP_RISE
    estimator_min_window: float | None = None

    @property
    def weight_c3(self) -> float:
        """Rate-variance coefficient actually used in the optimizer."""
        return self.c3 if self.c3 is not None else 1.0 - self.c1 - self.c2

    @property
    def resolved_probe_interval(self) -> float:
        if self.probe_interval is not None:
            return self.probe_interval
        return PROBE_INTERVAL_TAU_MULTIPLE * self.tau_d

    @property
    def high_probe_interval(self) -> float:
        return HIGH_PROBE_INTERVAL_MULTIPLE * self.resolved_probe_interval

    @property
    def resolved_estimator_window(self) -> float:
        if self.estimator_min_window is not None:
            return self.estimator_min_window
        return ESTIMATOR_WINDOW_TAU_MULTIPLE * self.tau_d

    def clamp_rate(self, rate: float) -> float:
        """Clamp a rate into ``[min_rate, max_rate]``."""
        return min(max(rate, self.min_rate), self.max_rate)

    def with_limits(self, min_rate: float, max_rate: float) -> ControllerConfig:
        """Return a copy with different pacing floor and cap."""
        return replace(self, min_rate=min_rate, max_rate=max_rate)

    def validate(self) -> None:
        """Check the weight and limit constraints.

        Raises:
            ConfigurationError: If any constraint is violated
        """
        remainder = 1.0 - self.c1 - self.c2
        if not 0.0 <= self.c1 <= 1.0:
            raise ConfigurationError(f"c1 must lie in [0, 1], got {self.c1}")
        if not 0.0 < self.c2 < 1.0:
            raise ConfigurationError(f"c2 must lie in (0, 1), got {self.c2}")
        if not 0.0 < remainder < 1.0:
            raise ConfigurationError(
                f"1 - c1 - c2 must lie in (0, 1), got {remainder:g} "
                f"(c1={self.c1}, c2={self.c2})"
            )
        if self.c3 is not None and not self.c3 > 0.0:
            raise ConfigurationError(f"c3 must be positive, got {self.c3}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.tau_d > 0.0:
            raise ConfigurationError(f"tau_d must be positive, got {self.tau_d}")
        if self.target_latency is not None and not self.target_latency > 0.0:
            raise ConfigurationError(
                f"target_latency must be positive, got {self.target_latency}"
            )
        if not self.min_rate >= 0.0:
            raise ConfigurationError(f"min_rate must be >= 0, got {self.min_rate}")
        if not self.max_rate > self.min_rate:
            raise ConfigurationError(
                f"max_rate ({self.max_rate}) must exceed min_rate ({self.min_rate})"
            )
        if self.probe_interval is not None and not self.probe_interval > 0.0:
            raise ConfigurationError(
                f"probe_interval must be positive, got {self.probe_interval}"
            )
        if not self.probe_gain_up > 1.0:
            raise ConfigurationError(
                f"probe_gain_up must exceed 1, got {self.probe_gain_up}"
            )
        if not 0.0 < self.probe_gain_down < 1.0:
            raise ConfigurationError(
                f"probe_gain_down must lie in (0, 1), got {self.probe_gain_down}"
            )
        if self.probe_duration is not None and not self.probe_duration > 0.0:
            raise ConfigurationError(
                f"probe_duration must be positive, got {self.probe_duration}"
            )
        if not self.probe_excess > 0.0:
            raise ConfigurationError(
                f"probe_excess must be positive, got {self.probe_excess}"
            )
        if self.rise_samples < 1:
            raise ConfigurationError(
                f"rise_samples must be >= 1, got {self.rise_samples}"
            )
        if not self.startup_rise > 0.0:
            raise ConfigurationError(
                f"startup_rise must be positive, got {self.startup_rise}"
            )
        if self.estimator_min_window is not None and self.estimator_min_window < 0.0:
            raise ConfigurationError(
                "estimator_min_window must be >= 0, "
                f"got {self.estimator_min_window}"
            )


@dataclass(slots=True)
class ControllerState:
    """Mutable per-flow controller state, r(n), l(n) and the model estimates."""

    rate: float
    l_hat_p: float
    l_hat_b: float
    avg_l: float
    last_latency: float
    last_update_time: float
    sent_integral: float
    origin_latency: float
    origin_time: float
    rb_hat: float
    last_optimize_time: float
    min_latency: float
    in_startup: bool = False
    probe_phase: ProbePhase = ProbePhase.NONE
    probe_start: float = 0.0
    probe_length: float = 0.0
    probe_rate: float = 0.0
    # None means the optimizer resumes from the probe rate
    probe_restore_rate: float | None = None
    probe_from_loss: bool = False
    probe_entry_l_hat_b: float = 0.0
    rise_streak: int = 0
    next_low_probe_time: float = math.inf
    next_high_probe_time: float = math.inf
    loss_count: int = 0
    last_loss_time: float | None = None


@dataclass(frozen=True, slots=True)
class RttObservation:
    """One latency sample delivered to the controller."""

    rtt: float
    now: float
    loss: bool = False


@dataclass(frozen=True, slots=True)
class RateDecision:
    """Pacing rate chosen after an update."""

    pacing_rate: float
    probe_phase: ProbePhase = field(default=ProbePhase.NONE)


def predict_latency(
    l_n: float,
    rate: float,
    rb: float,
    dt: float,
    *,
    l_hat_p: float | None = None,
    l_hat_b: float | None = None,
) -> float:
    """Predict the next latency from the queue model.

    Args:
        l_n: Current latency l(n) in seconds
        rate: Pacing rate r(n)
        rb: Bottleneck rate estimate
        dt: Time step in seconds
        l_hat_p: Lower clamp (propagation latency estimate), optional
        l_hat_b: Upper clamp (bottleneck latency estimate), optional

    Returns:
        l(n + 1) clamped into ``[l_hat_p, l_hat_b]`` when bounds are given

    Raises:
        ConfigurationError: If ``rb`` is not positive or ``dt`` is negative
    """
    if not rb > 0.0:
        raise ConfigurationError(f"bottleneck rate must be positive, got {rb}")
    if dt < 0.0:
        raise ConfigurationError(f"time step must be >= 0, got {dt}")
    predicted = l_n + dt * (rate - rb) / rb
    if l_hat_p is not None:
        predicted = max(predicted, l_hat_p)
    if l_hat_b is not None:
        predicted = min(predicted, l_hat_b)
    return predicted


def backoff_extrema(
    state: ControllerState, tau_d: float, l_sample: float, dt: float
) -> tuple[float, float]:
    """Update the minimum/maximum latency estimates with exponential back-off.

    Both estimates relax toward the running average by ``dt / tau_d`` of their
    distance (capped at the full distance) before the new sample is folded in.
    """
    weight = min(dt / tau_d, 1.0) if dt > 0.0 else 0.0
    backed_p = state.l_hat_p + (state.avg_l - state.l_hat_p) * weight
    backed_b = state.l_hat_b + (state.avg_l - state.l_hat_b) * weight
    l_hat_p = min(l_sample, backed_p)
    l_hat_b = max(l_sample, backed_b)
    if l_hat_p > l_hat_b:
        l_hat_p = l_hat_b = l_sample
    return l_hat_p, l_hat_b


def estimate_bottleneck_rate(
    state: ControllerState,
    l_sample: float,
    now: float,
    min_window: float = 0.0,
) -> float:
    """Solve the queue model for the bottleneck rate over the current window.

    ``r_B = sum(r(k) dt(k)) / (l(n) - l(0) + t(n) - t(0))``. The previous
    estimate is kept while the window is shorter than ``min_window``, holds no
    sent data, or the denominator is not positive.
    """
    elapsed = now - state.origin_time
    if elapsed <= 0.0 or elapsed < min_window or state.sent_integral <= 0.0:
        return state.rb_hat
    denominator = l_sample - state.origin_latency + elapsed
    if denominator <= 0.0:
        return state.rb_hat
    estimate = state.sent_integral / denominator
    if not math.isfinite(estimate) or estimate <= 0.0:
        return state.rb_hat
    return estimate


def target_latency(config: ControllerConfig, state: ControllerState) -> float:
    """Target latency l_t, always inside ``[l_hat_p, l_hat_b]``."""
    if config.target_latency is None:
        return (state.l_hat_p + state.l_hat_b) / 2.0
    return min(max(config.target_latency, state.l_hat_p), state.l_hat_b)


def optimize_rate(
    config: ControllerConfig,
    state: ControllerState,
    l_sample: float,
    dt: float,
    l_target: float | None = None,
) -> float:
    """Solve the one-step cost for r(n + 1).

    The latency term Lambda keeps ``l(n) - dt(n)`` exactly as the model
    derivation produces it. The result is clamped to the configured limits.
    """
    if l_target is None:
        l_target = target_latency(config, state)
    c1 = config.c1
    alpha_c2 = config.alpha * config.c2
    k = alpha_c2 + c1
    rate_weight = config.weight_c3 * state.l_hat_p * state.l_hat_p

    lam = k * (l_sample - dt) - c1 * l_target - alpha_c2 * state.avg_l
    numerator = rate_weight * state.rate - dt * state.rb_hat * lam
    denominator = rate_weight + dt * dt * k
    return config.clamp_rate(numerator / denominator)


class PacingController:
    """Per-flow pacing controller driven by acknowledgements, losses and the
    low-probe deadline."""

    def __init__(
        self,
        config: ControllerConfig,
        initial_rate: float,
        initial_rtt: float,
        now: float,
    ) -> None:
        """Initialize the controller from a first RTT sample.

        Args:
            config: Validated controller configuration
            initial_rate: Starting pacing rate, within the configured limits
            initial_rtt: First RTT sample in seconds
            now: Current time in seconds

        Raises:
            ConfigurationError: If the configuration or initial values are invalid
        """
        config.validate()
        if not initial_rtt > 0.0:
            raise ConfigurationError(f"initial RTT must be positive, got {initial_rtt}")
        if not config.min_rate <= initial_rate <= config.max_rate:
            raise ConfigurationError(
                f"initial rate {initial_rate} outside "
                f"[{config.min_rate}, {config.max_rate}]"
            )

        in_startup = config.probing and config.startup
        self.config = config
        self.state = ControllerState(
            rate=initial_rate,
            l_hat_p=initial_rtt,
            l_hat_b=initial_rtt,
            avg_l=initial_rtt,
            last_latency=initial_rtt,
            last_update_time=now,
            sent_integral=0.0,
            origin_latency=initial_rtt,
            origin_time=now,
            rb_hat=initial_rate,
            last_optimize_time=now,
            min_latency=initial_rtt,
            in_startup=in_startup,
            next_low_probe_time=now + config.resolved_probe_interval,
            next_high_probe_time=(
                now if in_startup else now + config.high_probe_interval
            ),
        )

    def decision(self) -> RateDecision:
        """Current pacing rate and probe phase."""
        return RateDecision(self.state.rate, self.state.probe_phase)

    def target_latency(self) -> float:
        return target_latency(self.config, self.state)

    def probe_deadline(self) -> float | None:
        """End time of the running low probe, or ``None`` outside one.

        The owner calls :meth:`on_deadline` at this time so the rate recovers
        even when no acknowledgement arrives while the rate is halved.
        """
        state = self.state
        if state.probe_phase is not ProbePhase.PROBING_LOW:
            return None
        return state.probe_start + state.probe_length

    def on_ack(self, obs: RttObservation) -> RateDecision:
        """Fold one RTT sample into the estimates and choose the next rate.

        Raises:
            ObservationError: If the sample is not newer than the last update or
                its RTT is not positive; the state is left unchanged
        """
        state = self.state
        config = self.config
        if not obs.now > state.last_update_time:
            raise ObservationError(
                f"observation at {obs.now} is not after last update "
                f"at {state.last_update_time}"
            )
        if not obs.rtt > 0.0:
            raise ObservationError(f"RTT must be positive, got {obs.rtt}")

        dt = obs.now - state.last_update_time
        state.sent_integral += state.rate * (
            obs.now - max(state.last_update_time, state.origin_time)
        )
        state.l_hat_p, state.l_hat_b = backoff_extrema(
            state, config.tau_d, obs.rtt, dt
        )
        state.rb_hat = estimate_bottleneck_rate(
            state, obs.rtt, obs.now, config.resolved_estimator_window
        )
        state.min_latency = min(state.min_latency, obs.rtt)
        state.avg_l = (1.0 - config.alpha) * state.avg_l + config.alpha * obs.rtt
        l_target = target_latency(config, state)
        state.last_latency = obs.rtt
        state.last_update_time = obs.now

        probe_rate = self._advance_probe(obs.now, obs.rtt)
        if probe_rate is not None:
            state.rate = config.clamp_rate(probe_rate)
        else:
            # one optimizer step per bottleneck latency, sized to the time since
            # the previous step
            elapsed = obs.now - state.last_optimize_time
            if elapsed >= state.l_hat_b:
                state.last_optimize_time = obs.now
                state.rate = optimize_rate(config, state, obs.rtt, elapsed, l_target)

        if obs.loss:
            return self.on_loss(obs.now)
        return self.decision()

    def on_loss(self, now: float) -> RateDecision:
        """React to a loss by cancelling any probe and probing low.

        The rate is halved from the pre-probe rate when a high probe is
        running, and the bottleneck rate estimate is capped at the new rate.
        Every loss cuts the rate again.
        """
        state = self.state
        config = self.config
        now = max(now, state.last_update_time)
        state.loss_count += 1
        state.last_loss_time = now
        state.in_startup = False

        base = state.rate
        if (
            state.probe_phase is ProbePhase.PROBING_HIGH
            and state.probe_restore_rate is not None
        ):
            base = state.probe_restore_rate
        reduced = config.clamp_rate(config.probe_gain_down * base)
        logger.debug(
            f"Loss at {now:.6f}s: rate {state.rate:.3f} -> {reduced:.3f} "
            f"(was {state.probe_phase})"
        )
        if reduced > 0.0:
            state.rb_hat = min(state.rb_hat, reduced)
        self._start_probe(
            ProbePhase.PROBING_LOW,
            now,
            rate=reduced,
            restore_rate=None,
            from_loss=True,
        )
        state.rate = reduced
        state.last_update_time = now
        self._reset_window(now)
        state.last_optimize_time = now
        state.next_low_probe_time = now + config.resolved_probe_interval
        state.next_high_probe_time = now + config.high_probe_interval
        return self.decision()

    def on_deadline(self, now: float) -> RateDecision | None:
        """End a low probe whose duration has elapsed.

        Returns:
            The new decision, or ``None`` if no low probe was due at ``now``
        """
        deadline = self.probe_deadline()
        if deadline is None or now < deadline:
            return None
        restore = self._end_low_probe(now)
        if restore is not None:
            self.state.rate = self.config.clamp_rate(restore)
        return self.decision()

    def _probe_duration(self) -> float:
        if self.config.probe_duration is not None:
            return self.config.probe_duration
        return PROBE_DURATION_LB_MULTIPLE * self.state.l_hat_b

    def _start_probe(
        self,
        phase: ProbePhase,
        now: float,
        rate: float,
        restore_rate: float | None,
        from_loss: bool,
    ) -> None:
        state = self.state
        state.probe_phase = phase
        state.probe_start = now
        state.probe_length = self._probe_duration()
        state.probe_rate = rate
        state.probe_restore_rate = restore_rate
        state.probe_from_loss = from_loss
        state.probe_entry_l_hat_b = state.l_hat_b
        state.rise_streak = 0
        logger.debug(f"Probe {phase} started at {now:.6f}s: rate {rate:.3f}")

    def _finish_probe(self, now: float) -> None:
        state = self.state
        logger.debug(f"Probe {state.probe_phase} finished at {now:.6f}s")
        state.probe_phase = ProbePhase.NONE
        state.probe_restore_rate = None
        state.probe_from_loss = False
        self._reset_window(now)
        state.last_optimize_time = now

    def _end_low_probe(self, now: float) -> float | None:
        restore = self.state.probe_restore_rate
        self._finish_probe(now)
        self.state.next_low_probe_time = now + self.config.resolved_probe_interval
        return restore

    def _reset_window(self, now: float) -> None:
        state = self.state
        state.origin_latency = state.last_latency
        state.origin_time = now
        state.sent_integral = 0.0

    def _advance_probe(self, now: float, l_sample: float) -> float | None:
        """Run the probe timers; return a rate that overrides the optimizer."""
        state = self.state
        config = self.config

        if state.probe_phase is ProbePhase.PROBING_HIGH:
            return self._advance_high_probe(now, l_sample)
        if state.probe_phase is ProbePhase.PROBING_LOW:
            if now - state.probe_start < state.probe_length:
                return state.probe_rate
            return self._end_low_probe(now)
        if not config.probing:
            return None

        base = state.rate
        if not state.in_startup and now >= state.next_low_probe_time:
            low = config.clamp_rate(config.probe_gain_down * base)
            self._start_probe(
                ProbePhase.PROBING_LOW,
                now,
                rate=low,
                restore_rate=base,
                from_loss=False,
            )
            return low
        if now >= state.next_high_probe_time:
            wanted = config.probe_gain_up * base
            high = config.clamp_rate(wanted)
            if not high > base or high < wanted:
                # the cap leaves no room above the current rate
                state.in_startup = False
                state.next_high_probe_time = now + config.high_probe_interval
                return None
            self._start_probe(
                ProbePhase.PROBING_HIGH,
                now,
                rate=high,
                restore_rate=base,
                from_loss=False,
            )
            return high
        return None

    def _advance_high_probe(self, now: float, l_sample: float) -> float:
        state = self.state
        config = self.config
        base = state.probe_restore_rate
        if base is None:
            base = state.rate
        elapsed = now - state.probe_start

        if state.in_startup:
            threshold = state.min_latency * (1.0 + config.startup_rise)
        else:
            threshold = state.probe_entry_l_hat_b
        state.rise_streak = state.rise_streak + 1 if l_sample > threshold else 0

        if state.rise_streak >= config.rise_samples:
            was_startup = state.in_startup
            self._finish_probe(now)
            state.in_startup = False
            state.next_high_probe_time = now + config.high_probe_interval
            if was_startup:
                drain = config.clamp_rate(config.probe_gain_down * base)
                self._start_probe(
                    ProbePhase.PROBING_LOW,
                    now,
                    rate=drain,
                    restore_rate=base,
                    from_loss=False,
                )
                return drain
            return base

        excess = (state.probe_rate - base) * (elapsed - state.l_hat_p)
        if excess >= config.probe_excess or elapsed >= config.resolved_probe_interval:
            probe_rate = state.probe_rate
            entry_l_hat_b = state.probe_entry_l_hat_b
            self._finish_probe(now)
            if state.rb_hat < probe_rate and l_sample <= entry_l_hat_b:
                state.rb_hat = probe_rate
            if not state.in_startup:
                state.next_high_probe_time = now + config.high_probe_interval
            else:
                state.next_high_probe_time = now
            return probe_rate
        return state.probe_rate


def new_controller(
    config: ControllerConfig,
    initial_rate: float,
    initial_rtt: float,
    now: float,
) -> PacingController:
    """Create a controller seeded with ``l_hat_p = l_hat_b = initial_rtt``."""
    return PacingController(config, initial_rate, initial_rtt, now)
