"""Two-phase optimization over a flat parameter vector: Adam, then L-BFGS with a Hager-Zhang line search."""
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Deque, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import Config
from errors import (
    ConfigurationError,
    EvaluationOverflowError,
    GradientUnavailableError,
    NotADescentDirectionError,
    StepRejectedError,
    TrainingDivergedError,
)
from utils import get_logger

logger = get_logger(__name__)

HISTORY_COLUMNS = ["iter", "phase", "loss_g", "loss_bc_ic", "loss_interface", "loss_flux", "total", "alpha"]
COMPONENTS = ("loss_g", "loss_bc_ic", "loss_interface", "loss_flux")


# --- Adam -------------------------------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigurationError(f"adam learning_rate must be > 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError(f"adam betas must lie in [0, 1), got {self.beta1}, {self.beta2}")
        if not self.eps > 0:
            raise ConfigurationError(f"adam eps must be > 0, got {self.eps}")


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    hyper: AdamConfig = field(default_factory=AdamConfig)

    @classmethod
    def zeros(cls, n: int, hyper: Optional[AdamConfig] = None) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, hyper or AdamConfig())


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> Tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != grad.shape or grad.shape != state.first_moment.shape:
        raise StepRejectedError(
            f"shape mismatch: params {params.shape}, grad {grad.shape}, state {state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grad)):
        raise StepRejectedError("gradient contains non-finite entries")

    h = state.hyper
    step = state.step_count + 1
    m = h.beta1 * state.first_moment + (1.0 - h.beta1) * grad
    v = h.beta2 * state.second_moment + (1.0 - h.beta2) * grad * grad
    m_hat = m / (1.0 - h.beta1 ** step)
    v_hat = v / (1.0 - h.beta2 ** step)
    updated = params - h.learning_rate * m_hat / (np.sqrt(v_hat) + h.eps)
    return updated, AdamState(m, v, step, h)


# --- L-BFGS -----------------------------------------------------------------

@dataclass
class LbfgsState:
    """Ring of the most recent (s, y) pairs; pairs failing the curvature test are not stored."""
    memory: int = 10
    curvature_eps: float = 1e-10
    history: Deque[Tuple[np.ndarray, np.ndarray]] = field(default_factory=deque)
    iteration: int = 0
    rejected: int = 0

    def __post_init__(self):
        if self.memory < 1:
            raise ConfigurationError(f"L-BFGS memory must be >= 1, got {self.memory}")
        self.history = deque(self.history, maxlen=self.memory)

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(s @ y)
        yy = float(y @ y)
        if not (math.isfinite(sy) and yy > 0 and sy > self.curvature_eps * yy):
            self.rejected += 1
            logger.warning(f"Skipping L-BFGS pair with s'y={sy:.3e} (y'y={yy:.3e})")
            return False
        self.history.append((np.array(s, dtype=float), np.array(y, dtype=float)))
        return True

    def reset(self):
        self.history.clear()


def lbfgs_direction(state: LbfgsState, grad: np.ndarray) -> np.ndarray:
    """Two-loop recursion; the initial inverse Hessian is gamma*I from the newest pair."""
    q = np.array(grad, dtype=float)
    if not state.history:
        return -q
    alphas: List[float] = []
    rhos: List[float] = []
    for s, y in reversed(state.history):
        rho = 1.0 / float(s @ y)
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)
        rhos.append(rho)
    s_new, y_new = state.history[-1]
    r = (float(s_new @ y_new) / float(y_new @ y_new)) * q
    for (s, y), alpha, rho in zip(state.history, reversed(alphas), reversed(rhos)):
        beta = rho * float(y @ r)
        r += s * (alpha - beta)
    return -r


# --- Hager-Zhang line search ------------------------------------------------

@dataclass(frozen=True)
class LineSearchConfig:
    delta: float = 0.1          # sufficient decrease
    sigma: float = 0.9          # curvature
    epsilon: float = 1e-6       # approximate-Wolfe value slack, relative to |phi(0)|
    theta: float = 0.5          # bisection point inside the update step
    gamma: float = 0.66         # required interval shrink per secant2 round
    expansion: float = 5.0      # bracketing growth factor
    max_iterations: int = 50    # function evaluations
    initial_step: float = 1.0
    max_step: float = 1e8

    def __post_init__(self):
        if not 0 < self.delta < self.sigma < 1:
            raise ConfigurationError(f"need 0 < delta < sigma < 1, got {self.delta}, {self.sigma}")
        if not self.delta < 0.5:
            raise ConfigurationError(f"delta must be < 0.5 for the approximate Wolfe test, got {self.delta}")
        if self.max_iterations < 1:
            raise ConfigurationError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if not 0 < self.theta < 1 or not 0 < self.gamma < 1 or not self.expansion > 1:
            raise ConfigurationError("theta and gamma must lie in (0, 1) and expansion must exceed 1")
        if not 0 < self.initial_step <= self.max_step:
            raise ConfigurationError(
                f"initial_step must lie in (0, max_step], got {self.initial_step} (max {self.max_step})"
            )


@dataclass
class LineSearchResult:
    step: float
    value: float
    derivative: float
    evaluations: int
    converged: bool
    condition: Optional[str] = None   # "wolfe", "approximate-wolfe" or None


@dataclass
class _Point:
    alpha: float
    value: float
    slope: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value) and math.isfinite(self.slope)


class _Accepted(Exception):
    def __init__(self, point: _Point, condition: str):
        super().__init__(condition)
        self.point = point
        self.condition = condition


class _Exhausted(Exception):
    pass


class _HagerZhang:
    """State of one search; the public entry point is hager_zhang_search."""

    def __init__(self, phi: Callable[[float], Tuple[float, float]], phi0: float, dphi0: float,
                 config: LineSearchConfig):
        self.phi = phi
        self.config = config
        self.origin = _Point(0.0, phi0, dphi0)
        self.value_cap = phi0 + config.epsilon * abs(phi0)
        self.evaluations = 0
        self.best: Optional[_Point] = None

    def evaluate(self, alpha: float) -> _Point:
        if self.evaluations >= self.config.max_iterations:
            raise _Exhausted()
        self.evaluations += 1
        value, slope = self.phi(alpha)
        point = _Point(alpha, float(value), float(slope))
        if point.finite and (self.best is None or point.value < self.best.value):
            self.best = point
        if point.finite:
            condition = self.wolfe(point)
            if condition:
                raise _Accepted(point, condition)
        return point

    def wolfe(self, c: _Point) -> Optional[str]:
        o, cfg = self.origin, self.config
        if c.slope >= cfg.sigma * o.slope:
            if c.value - o.value <= cfg.delta * c.alpha * o.slope:
                return "wolfe"
            if c.value <= self.value_cap and c.slope <= (2.0 * cfg.delta - 1.0) * o.slope:
                return "approximate-wolfe"
        return None

    def evaluate_finite(self, alpha: float) -> _Point:
        # non-finite values mean the step overshot; pull back toward the origin
        point = self.evaluate(alpha)
        while not point.finite:
            alpha *= self.config.theta
            point = self.evaluate(alpha)
        return point

    def bisect(self, a: _Point, b: _Point) -> Tuple[_Point, _Point]:
        # [a, b] with a below the value cap and b above it, both with negative slope
        theta = self.config.theta
        while True:
            d = self.evaluate_finite((1.0 - theta) * a.alpha + theta * b.alpha)
            if d.slope >= 0:
                return a, d
            if d.value <= self.value_cap:
                a = d
            else:
                b = d

    def update(self, a: _Point, b: _Point, c: _Point) -> Tuple[_Point, _Point]:
        if not a.alpha < c.alpha < b.alpha:
            return a, b
        if c.slope >= 0:
            return a, c
        if c.value <= self.value_cap:
            return c, b
        return self.bisect(a, c)

    @staticmethod
    def secant(a: _Point, b: _Point) -> float:
        denom = b.slope - a.slope
        if denom == 0 or not math.isfinite(denom):
            return 0.5 * (a.alpha + b.alpha)
        return (a.alpha * b.slope - b.alpha * a.slope) / denom

    def secant2(self, a: _Point, b: _Point) -> Tuple[_Point, _Point]:
        c = self.evaluate_finite(self.secant(a, b))
        new_a, new_b = self.update(a, b, c)
        if c.alpha == new_b.alpha:
            c2 = self.secant(b, new_b)
        elif c.alpha == new_a.alpha:
            c2 = self.secant(a, new_a)
        else:
            return new_a, new_b
        if new_a.alpha < c2 < new_b.alpha:
            return self.update(new_a, new_b, self.evaluate_finite(c2))
        return new_a, new_b

    def bracket(self, c: _Point) -> Tuple[_Point, _Point]:
        cfg = self.config
        a = self.origin
        while True:
            if c.slope >= 0:
                return a, c
            if c.value > self.value_cap:
                return self.bisect(self.origin, c)
            a = c
            if c.alpha >= cfg.max_step:
                raise _Exhausted()
            c = self.evaluate_finite(min(cfg.expansion * c.alpha, cfg.max_step))

    def run(self) -> Tuple[_Point, _Point]:
        a, b = self.bracket(self.evaluate_finite(min(self.config.initial_step, self.config.max_step)))
        while True:
            width = b.alpha - a.alpha
            new_a, new_b = self.secant2(a, b)
            if new_b.alpha - new_a.alpha > self.config.gamma * width:
                mid = self.evaluate_finite(0.5 * (new_a.alpha + new_b.alpha))
                new_a, new_b = self.update(new_a, new_b, mid)
            if new_b.alpha - new_a.alpha <= 0 or (new_a.alpha, new_b.alpha) == (a.alpha, b.alpha):
                raise _Exhausted()
            a, b = new_a, new_b


def hager_zhang_search(phi: Callable[[float], Tuple[float, float]], phi0: float, dphi0: float,
                       config: Optional[LineSearchConfig] = None) -> LineSearchResult:
    """Step length along a descent direction satisfying the Wolfe or approximate Wolfe conditions.

    `phi(alpha)` returns the objective value and its directional derivative at alpha. When
    the evaluation budget or the step cap is exhausted, the best step seen is returned with
    converged=False.
    """
    config = config or LineSearchConfig()
    if not (math.isfinite(phi0) and math.isfinite(dphi0)):
        raise NotADescentDirectionError(f"line search origin is not finite (phi={phi0}, dphi={dphi0})")
    if not dphi0 < 0:
        raise NotADescentDirectionError(f"directional derivative must be negative, got {dphi0}")

    search = _HagerZhang(phi, phi0, dphi0, config)
    try:
        search.run()
    except _Accepted as done:
        p = done.point
        return LineSearchResult(p.alpha, p.value, p.slope, search.evaluations, True, done.condition)
    except _Exhausted:
        pass

    best = search.best
    logger.warning(
        f"Line search stopped after {search.evaluations} evaluations without a Wolfe point; "
        f"using best step {best.alpha if best else 0.0:.6g}"
    )
    if best is None:
        return LineSearchResult(0.0, phi0, dphi0, search.evaluations, False)
    return LineSearchResult(best.alpha, best.value, best.slope, search.evaluations, False)


# --- schedule, history, driver ---------------------------------------------

@dataclass
class TrainingSchedule:
    adam_iters: int = 5000
    lbfgs_max_iters: int = 50000
    grad_tol: float = 1e-8
    rel_tol: float = 1e-9
    plateau_window: int = 10
    batch_size: Optional[int] = None
    lbfgs_memory: int = 10
    adam: AdamConfig = field(default_factory=AdamConfig)
    line_search: LineSearchConfig = field(default_factory=LineSearchConfig)
    log_every: int = field(default_factory=lambda: Config.LOG_EVERY)

    def __post_init__(self):
        errors = []
        if self.adam_iters < 0:
            errors.append(f"adam_iters must be >= 0, got {self.adam_iters}")
        if self.lbfgs_max_iters < 0:
            errors.append(f"lbfgs_max_iters must be >= 0, got {self.lbfgs_max_iters}")
        if not self.grad_tol >= 0 or not self.rel_tol >= 0:
            errors.append("tolerances must be >= 0")
        if self.plateau_window < 1:
            errors.append(f"plateau_window must be >= 1, got {self.plateau_window}")
        if self.batch_size is not None and self.batch_size < 1:
            errors.append(f"batch_size must be >= 1, got {self.batch_size}")
        if errors:
            raise ConfigurationError("; ".join(errors))


@dataclass
class Evaluation:
    """Objective value, gradient, and the loss components behind the value."""
    value: float
    gradient: np.ndarray
    components: Dict[str, float] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value) and bool(np.all(np.isfinite(self.gradient)))


# evaluator(flat_params, mini-batch from the sampler or None for the full set)
Evaluator = Callable[[np.ndarray, Optional[object]], Evaluation]


@dataclass
class LossRecord:
    iter: int
    phase: str
    loss_g: float
    loss_bc_ic: float
    loss_interface: float
    loss_flux: float
    total: float
    alpha: float = math.nan

    @classmethod
    def from_evaluation(cls, iteration: int, phase: str, evaluation: Evaluation,
                        alpha: float = math.nan) -> "LossRecord":
        parts = {name: float(evaluation.components.get(name, 0.0)) for name in COMPONENTS}
        if not evaluation.components:
            parts["loss_g"] = float(evaluation.value)
        return cls(iteration, phase, total=float(evaluation.value), alpha=alpha, **parts)


@dataclass
class LossHistory:
    records: List[LossRecord] = field(default_factory=list)
    stop_reason: str = ""

    def append(self, record: LossRecord):
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def count(self, phase: str) -> int:
        return sum(1 for r in self.records if r.phase == phase)

    @property
    def final(self) -> Optional[LossRecord]:
        return self.records[-1] if self.records else None

    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def to_frame(self) -> pd.DataFrame:
        rows = [[getattr(r, col) for col in HISTORY_COLUMNS] for r in self.records]
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)


class BatchSampler:
    """Interior mini-batches without replacement, reshuffled every epoch."""

    def __init__(self, n_points: int, batch_size: Optional[int], seed: Optional[int] = None):
        self.n_points = n_points
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)
        self._order = np.empty(0, dtype=int)
        self._cursor = 0
        self.epoch = 0

    @property
    def full_batch(self) -> bool:
        return self.batch_size is None or self.batch_size >= self.n_points

    def next_batch(self) -> Optional[np.ndarray]:
        if self.full_batch:
            return None
        if self._cursor + self.batch_size > self._order.size:
            self._order = self.rng.permutation(self.n_points)
            self._cursor = 0
            self.epoch += 1
        batch = np.sort(self._order[self._cursor:self._cursor + self.batch_size])
        self._cursor += self.batch_size
        return batch


def _safe_evaluate(evaluator: Evaluator, x: np.ndarray, batch: Optional[np.ndarray]) -> Evaluation:
    try:
        return evaluator(x, batch)
    except (GradientUnavailableError, EvaluationOverflowError) as e:
        logger.debug(f"Evaluation failed: {e}")
        return Evaluation(math.nan, np.full_like(x, math.nan))


def train_phase(evaluator: Evaluator, x0: np.ndarray, schedule: TrainingSchedule,
                sampler=None) -> Tuple[np.ndarray, LossHistory]:
    """Adam for schedule.adam_iters, then full-batch L-BFGS until a stopping test fires.

    `sampler.next_batch()` supplies the Adam mini-batch handed to the evaluator; without a
    sampler every Adam step is full-batch.

    Adam records are taken at the evaluated point, L-BFGS records after each accepted step,
    so the history length is adam_iters plus the accepted L-BFGS iterations.
    """
    x = np.array(x0, dtype=float)
    history = LossHistory()
    # parameters of the most recent finite evaluation; x0 until one succeeds
    last_finite = x.copy()
    log_every = max(1, schedule.log_every)

    if schedule.adam_iters:
        state = AdamState.zeros(x.size, schedule.adam)
        for k in range(schedule.adam_iters):
            batch = sampler.next_batch() if sampler is not None else None
            evaluation = _safe_evaluate(evaluator, x, batch)
            if not evaluation.finite:
                raise TrainingDivergedError(f"non-finite loss at Adam iteration {k + 1}", last_finite, history)
            last_finite = x.copy()
            history.append(LossRecord.from_evaluation(len(history) + 1, "adam", evaluation))
            x, state = adam_step(x, evaluation.gradient, state)
            if (k + 1) % log_every == 0:
                logger.info(f"adam {k + 1}/{schedule.adam_iters}: loss={evaluation.value:.6e}")

    if schedule.lbfgs_max_iters == 0:
        history.stop_reason = "adam-only"
        return x, history

    current = _safe_evaluate(evaluator, x, None)
    if not current.finite:
        raise TrainingDivergedError("non-finite loss entering L-BFGS", last_finite, history)

    state = LbfgsState(memory=schedule.lbfgs_memory)
    plateau = 0
    history.stop_reason = "max-iterations"
    for k in range(schedule.lbfgs_max_iters):
        g = current.gradient
        if float(np.max(np.abs(g), initial=0.0)) < schedule.grad_tol:
            history.stop_reason = "gradient-tolerance"
            break

        direction = lbfgs_direction(state, g)
        slope = float(g @ direction)
        if not slope < 0:
            logger.warning("L-BFGS direction is not a descent direction; resetting memory")
            state.reset()
            direction = -g
            slope = -float(g @ g)

        initial = 1.0 if state.history else min(1.0, 1.0 / float(np.sum(np.abs(g))))
        trials: Dict[float, Evaluation] = {}

        def phi(alpha: float) -> Tuple[float, float]:
            trial = _safe_evaluate(evaluator, x + alpha * direction, None)
            trials[alpha] = trial
            return trial.value, float(trial.gradient @ direction)

        line_config = replace(schedule.line_search, initial_step=min(initial, schedule.line_search.max_step))
        try:
            result = hager_zhang_search(phi, current.value, slope, line_config)
        except NotADescentDirectionError as e:
            logger.warning(f"L-BFGS stopped: {e}")
            history.stop_reason = "no-descent"
            break

        accepted = trials.get(result.step)
        if accepted is None or not accepted.finite:
            if accepted is not None:
                raise TrainingDivergedError(f"non-finite loss at L-BFGS iteration {k + 1}", x.copy(), history)
            history.stop_reason = "line-search-failed"
            break
        if not accepted.value < current.value:
            history.stop_reason = "no-decrease"
            break

        s = result.step * direction
        state.push(s, accepted.gradient - g)
        state.iteration += 1
        relative = abs(current.value - accepted.value) / max(abs(current.value), np.finfo(float).tiny)
        x = x + s
        current = accepted
        history.append(LossRecord.from_evaluation(len(history) + 1, "lbfgs", current, result.step))
        if (k + 1) % log_every == 0:
            logger.info(f"lbfgs {k + 1}: loss={current.value:.6e} step={result.step:.3e}")

        plateau = plateau + 1 if relative < schedule.rel_tol else 0
        if plateau >= schedule.plateau_window:
            history.stop_reason = "loss-plateau"
            break

    logger.info(
        f"Optimization finished ({history.stop_reason}): {history.count('adam')} Adam + "
        f"{history.count('lbfgs')} L-BFGS iterations, loss={current.value:.6e}"
    )
    return x, history
