"""Training of one network per subdomain (WPINN, WXPINN, WCPINN) and global solution assembly."""
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from config import Config
from errors import (
    CheckpointIncompatibleError,
    ConfigurationError,
    InterfaceConsistencyError,
    OutOfDomainError,
    PinnFlowError,
)
from experiment import ExperimentConfig, sweep_axis
from geometry import (
    INTERFACE_TOLERANCE,
    CollocationSet,
    Domain,
    SubdomainSpec,
    assign_subdomains,
    generate_collocation,
    partition_domain,
    prediction_grid,
)
from network import (
    DTYPE,
    S11,
    S12,
    S22,
    NetworkParams,
    evaluate_first_order,
    evaluate_with_derivatives,
    init_network,
    loss_gradient,
    parameter_count,
)
from optimizers import BatchSampler, Evaluation, LossHistory, train_phase
from residuals import (
    RESIDUAL_COLUMNS,
    LossBreakdown,
    SubdomainTerms,
    Variant,
    assemble_loss,
    boundary_initial_residuals,
    flux_residuals,
    governing_residuals,
    interface_residuals,
    primitive_from_evaluation,
    residual_frame,
)
from utils import derive_seeds, get_logger

FIELD_COLUMNS = ["x", "y", "t", "u", "v", "p"]
SOLUTION_COLUMNS = ["u", "v", "p", "s11", "s12", "s22"]
METRIC_COLUMNS = ["M", "β", "γ", "δ", "Final Loss", "Comp. Time (s)", "# Iter. (Total)", "status"]
FLUX_COLUMNS = ["t", "inlet_flux", "outlet_flux", "imbalance", "outlet_backflow_fraction"]

# ordered pair (i, j) -> (prediction of network i, prediction of network j) at the shared points
InterfacePredictions = Dict[Tuple[int, int], Tuple[torch.Tensor, torch.Tensor]]


def split_params(flat: np.ndarray, layer_sizes: Sequence[int], count: int) -> List[NetworkParams]:
    """Per-subdomain networks from the joint flat vector (network 0 first)."""
    size = parameter_count(layer_sizes)
    tensor = torch.as_tensor(np.asarray(flat, dtype=float), dtype=DTYPE)
    return [NetworkParams.from_flat(tensor[i * size:(i + 1) * size].clone(), layer_sizes) for i in range(count)]


def join_params(params: Sequence[NetworkParams]) -> np.ndarray:
    return np.concatenate([p.flatten().detach().cpu().numpy() for p in params])


@dataclass
class TrainedModel:
    params: List[NetworkParams]
    subdomains: List[SubdomainSpec]
    config: ExperimentConfig
    final_loss: Optional[LossBreakdown] = None
    seconds: float = 0.0
    iterations: int = 0
    history: LossHistory = field(default_factory=LossHistory)
    collocation: Optional[CollocationSet] = None
    initial_loss: Optional[LossBreakdown] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_checkpoints(cls, config: ExperimentConfig, params: Sequence[NetworkParams]) -> "TrainedModel":
        """Model for inference only: networks without training data or history."""
        if len(params) != config.subdomains:
            raise CheckpointIncompatibleError(
                f"{len(params)} checkpoints given for {config.subdomains} subdomains"
            )
        return cls(list(params), [], config)

    @property
    def domain(self) -> Domain:
        return self.config.build_domain()

    @property
    def stop_reason(self) -> str:
        return self.history.stop_reason


class PartitionedBatchSampler:
    """One interior sampler per subdomain, batch sizes proportional to the subdomain point counts."""

    def __init__(self, counts: Sequence[int], batch_size: Optional[int], seed: Optional[int]):
        total = sum(counts)
        children = np.random.SeedSequence(seed).spawn(len(counts))
        self.samplers = []
        for n, child in zip(counts, children):
            local = None if batch_size is None else max(1, int(round(batch_size * n / total)))
            self.samplers.append(BatchSampler(n, local, int(child.generate_state(1)[0])))

    @property
    def full_batch(self) -> bool:
        return all(s.full_batch for s in self.samplers)

    def next_batch(self) -> Optional[List[Optional[np.ndarray]]]:
        if self.full_batch:
            return None
        return [s.next_batch() for s in self.samplers]


def check_interfaces(subdomains: Sequence[SubdomainSpec]):
    """Both sides of every interface must list the same points with opposite normals."""
    for spec in subdomains:
        if sorted(spec.interfaces) != sorted(spec.neighbors):
            raise InterfaceConsistencyError(f"subdomain {spec.index}: interfaces do not match neighbours")
        for j, side in spec.interfaces.items():
            if not 0 <= j < len(subdomains) or spec.index not in subdomains[j].interfaces:
                raise InterfaceConsistencyError(f"interface {spec.index}-{j} is missing on subdomain {j}")
            other = subdomains[j].interfaces[spec.index]
            if side.points.shape != other.points.shape or not np.array_equal(side.points, other.points):
                raise InterfaceConsistencyError(f"interface {spec.index}-{j}: point lists differ between sides")
            if not np.array_equal(side.normal, -other.normal):
                raise InterfaceConsistencyError(f"interface {spec.index}-{j}: normals are not opposite")


def _primitives(params: NetworkParams, points: np.ndarray, create_graph: bool) -> torch.Tensor:
    return primitive_from_evaluation(evaluate_first_order(params, points, create_graph=create_graph))


def exchange_interface_predictions(subdomains: Sequence[SubdomainSpec], params: Sequence[NetworkParams],
                                   create_graph: bool = False) -> InterfacePredictions:
    """(u', v', p') of both neighbouring networks at every interface point, from one parameter snapshot."""
    check_interfaces(subdomains)
    if len(params) != len(subdomains):
        raise InterfaceConsistencyError(f"{len(params)} networks for {len(subdomains)} subdomains")
    paired: InterfacePredictions = {}
    for spec in subdomains:
        for j, side in sorted(spec.interfaces.items()):
            if (j, spec.index) in paired:
                pred_j, pred_i = paired[(j, spec.index)]
            else:
                pred_i = _primitives(params[spec.index], side.points, create_graph)
                pred_j = _primitives(params[j], side.points, create_graph)
            paired[(spec.index, j)] = (pred_i, pred_j)
    return paired


def interface_jump_rms(subdomains: Sequence[SubdomainSpec], params: Sequence[NetworkParams]) -> float:
    """RMS of the (u, v, p) jump between neighbours over all interface points; 0 without interfaces."""
    paired = exchange_interface_predictions(subdomains, params)
    jumps = [(pi - pj) for (i, j), (pi, pj) in paired.items() if i < j]
    if not jumps:
        return 0.0
    stacked = torch.cat(jumps)
    return float(torch.sqrt((stacked ** 2).mean()))


def flux_loss(subdomains: Sequence[SubdomainSpec], params: Sequence[NetworkParams], density: float) -> float:
    """Flux mismatch summed over subdomains and neighbours (the L_flux term)."""
    paired = exchange_interface_predictions(subdomains, params)
    total = 0.0
    for spec in subdomains:
        for j, side in sorted(spec.interfaces.items()):
            pred_i, pred_j = paired[(spec.index, j)]
            total += float(flux_residuals(pred_i, pred_j, density, side.normal).squared_sum().mean())
    return total


class DecompositionTrainer:
    """Builds collocation sets and networks for an experiment and minimizes the joint loss."""

    def __init__(self, threads: Optional[int] = None, parallel: Optional[bool] = None):
        self.logger = get_logger(__name__)
        self.threads = threads if threads is not None else Config.THREADS
        self.parallel = parallel

    # --- loss evaluation -------------------------------------------------

    def subdomain_terms(self, config: ExperimentConfig, spec: SubdomainSpec, networks: Sequence[NetworkParams],
                        paired: InterfacePredictions, batch: Optional[np.ndarray] = None) -> SubdomainTerms:
        form = config.residual_form
        params = networks[spec.index]
        collocation = spec.collocation
        interior = collocation.interior if batch is None else collocation.interior[batch]
        evaluation = evaluate_with_derivatives(params, interior, order=form.derivative_order)
        governing = governing_residuals(evaluation, config.flow, form)

        boundary_sq = torch.zeros(0, dtype=DTYPE)
        if collocation.n_bc:
            predicted = _primitives(params, collocation.boundary, create_graph=True)
            boundary_sq = boundary_initial_residuals(predicted, collocation.boundary_targets)
        initial_sq = torch.zeros(0, dtype=DTYPE)
        if collocation.n_ic:
            predicted = _primitives(params, collocation.initial, create_graph=True)
            initial_sq = boundary_initial_residuals(predicted, collocation.initial_targets)

        interfaces, fluxes = [], []
        for j, side in sorted(spec.interfaces.items()):
            pred_i, pred_j = paired[(spec.index, j)]
            interfaces.append(interface_residuals(pred_i, pred_j))
            fluxes.append(flux_residuals(pred_i, pred_j, config.flow.density, side.normal))
        return SubdomainTerms(governing, boundary_sq, initial_sq, interfaces, fluxes)

    def joint_loss(self, config: ExperimentConfig, subdomains: Sequence[SubdomainSpec],
                   networks: Sequence[NetworkParams], batch: Optional[Sequence] = None) -> LossBreakdown:
        """Sum of the per-subdomain losses, all interface terms taken from the same snapshot."""
        variant = config.variant
        weights = config.weights()
        if variant is Variant.WPINN or len(subdomains) == 1:
            paired: InterfacePredictions = {}
        else:
            paired = exchange_interface_predictions(subdomains, networks, create_graph=True)

        def one(spec: SubdomainSpec) -> LossBreakdown:
            local_batch = None if batch is None else batch[spec.index]
            terms = self.subdomain_terms(config, spec, networks, paired, local_batch)
            return assemble_loss(terms, weights, variant)

        if self._parallel(config) and len(subdomains) > 1:
            with ThreadPoolExecutor(max_workers=min(self.threads, len(subdomains))) as pool:
                parts = list(pool.map(one, subdomains))
        else:
            parts = [one(spec) for spec in subdomains]
        return LossBreakdown.combine(parts)

    def _parallel(self, config: ExperimentConfig) -> bool:
        enabled = config.decomposition.parallel if self.parallel is None else self.parallel
        return bool(enabled) and self.threads > 1

    def make_evaluator(self, config: ExperimentConfig, subdomains: Sequence[SubdomainSpec]
                       ) -> Callable[[np.ndarray, Optional[object]], Evaluation]:
        layer_sizes = config.layer_sizes
        count = len(subdomains)

        def evaluate(x: np.ndarray, batch: Optional[object]) -> Evaluation:
            captured: Dict[str, LossBreakdown] = {}

            def loss(leaves: List[NetworkParams]) -> torch.Tensor:
                captured["breakdown"] = self.joint_loss(config, subdomains, leaves, batch)
                return captured["breakdown"].total

            grads = loss_gradient(split_params(x, layer_sizes, count), loss)
            breakdown = captured["breakdown"]
            return Evaluation(float(breakdown.total.detach()), join_params(grads), breakdown.to_record())

        return evaluate

    # --- training ----------------------------------------------------------

    def setup(self, config: ExperimentConfig) -> Tuple[CollocationSet, List[SubdomainSpec], List[NetworkParams], List[int]]:
        """Collocation set, partition and initial networks; deterministic in config.seed."""
        domain = config.build_domain()
        collocation_seed, partition_seed, init_seed, batch_seed = derive_seeds(config.seed, 4)
        collocation = generate_collocation(domain, config.domain.counts(), config.flow, collocation_seed)
        subdomains = partition_domain(
            domain, config.subdomains, collocation, config.decomposition.n_interface, partition_seed
        )
        networks = [init_network(config.layer_sizes, s) for s in derive_seeds(init_seed, len(subdomains))]
        return collocation, subdomains, networks, [batch_seed]

    def train(self, config: ExperimentConfig) -> TrainedModel:
        self.logger.info(
            f"Training {config.variant.value} on {config.domain.kind} (M={config.subdomains}, "
            f"beta={config.decomposition.beta}, gamma={config.decomposition.gamma}, "
            f"delta={config.decomposition.delta}, seed={config.seed})"
        )
        start = time.perf_counter()
        collocation, subdomains, networks, (batch_seed,) = self.setup(config)
        evaluate = self.make_evaluator(config, subdomains)
        x0 = join_params(networks)

        initial = evaluate(x0, None)
        initial_loss = self._breakdown(config, initial)
        diagnostics = {
            "initial_interface_jump_rms": interface_jump_rms(subdomains, networks),
            "initial_flux_loss": flux_loss(subdomains, networks, config.flow.density),
        }
        self.logger.info(f"Initial loss {initial.value:.6e} over {collocation.n_total} collocation points")

        sampler = PartitionedBatchSampler([s.collocation.n_g for s in subdomains],
                                          config.training.batch_size, batch_seed)
        x, history = train_phase(evaluate, x0, config.training.schedule(),
                                 None if sampler.full_batch else sampler)
        seconds = time.perf_counter() - start

        final_networks = split_params(x, config.layer_sizes, len(subdomains))
        final = evaluate(x, None)
        diagnostics["interface_jump_rms"] = interface_jump_rms(subdomains, final_networks)
        diagnostics["flux_loss"] = flux_loss(subdomains, final_networks, config.flow.density)

        model = TrainedModel(
            params=final_networks,
            subdomains=list(subdomains),
            config=config,
            final_loss=self._breakdown(config, final),
            seconds=seconds,
            iterations=len(history),
            history=history,
            collocation=collocation,
            initial_loss=initial_loss,
            diagnostics=diagnostics,
        )
        self.logger.info(
            f"Finished in {seconds:.1f}s after {model.iterations} iterations: final loss {final.value:.6e}"
        )
        return model

    @staticmethod
    def _breakdown(config: ExperimentConfig, evaluation: Evaluation) -> LossBreakdown:
        c = evaluation.components
        return LossBreakdown(c["loss_g"], c["loss_bc_ic"], c["loss_interface"], c["loss_flux"],
                             config.weights(), config.variant, c["total"])

    # --- inference -----------------------------------------------------------

    def _solution(self, params: NetworkParams, points: np.ndarray) -> np.ndarray:
        """(u, v, p, s11, s12, s22) in chunks of Config.PREDICT_CHUNK points."""
        chunk = max(1, Config.PREDICT_CHUNK)
        parts = []
        for start in range(0, len(points), chunk):
            evaluation = evaluate_first_order(params, points[start:start + chunk], create_graph=False)
            primitives = primitive_from_evaluation(evaluation)
            stresses = evaluation.outputs[:, [S11, S12, S22]]
            parts.append(torch.cat([primitives, stresses], dim=1).numpy())
        return np.vstack(parts) if parts else np.empty((0, len(SOLUTION_COLUMNS)))

    def assemble_global_solution(self, model: TrainedModel, query) -> np.ndarray:
        """Owning network's (u, v, p, s11, s12, s22); the neighbours' mean on an interface.

        A single (x, y, t) gives a 6-vector, a batch gives (N, 6).
        """
        points = np.asarray(query, dtype=float)
        single = points.ndim == 1
        points = points.reshape(-1, 3)
        domain = model.domain
        if not np.all(domain.contains(points[:, 0], points[:, 1])):
            raise OutOfDomainError("query point outside the spatial domain")
        domain.check_time(points[:, 2])

        m = len(model.params)
        owner = assign_subdomains(domain, m, points[:, 0], points[:, 1])
        result = np.empty((len(points), len(SOLUTION_COLUMNS)))
        for i in range(m):
            mask = owner == i
            if mask.any():
                result[mask] = self._solution(model.params[i], points[mask])
        for k in range(1, m):
            on_interface = domain.interface_distance(points[:, 0], points[:, 1], k, m) <= INTERFACE_TOLERANCE
            if on_interface.any():
                left = self._solution(model.params[k - 1], points[on_interface])
                right = self._solution(model.params[k], points[on_interface])
                result[on_interface] = 0.5 * (left + right)
        return result[0] if single else result

    def predict_fields(self, model: TrainedModel, grid: CollocationSet, times: Sequence[float]) -> pd.DataFrame:
        """Rows (x, y, t, u, v, p) for every grid position at every snapshot time."""
        xy = grid.spatial_points()
        frames = []
        for t in times:
            points = np.column_stack([xy, np.full(len(xy), float(t))])
            solution = self.assemble_global_solution(model, points)
            frames.append(pd.DataFrame(np.column_stack([points, solution[:, :3]]), columns=FIELD_COLUMNS))
        if not frames:
            return pd.DataFrame(columns=FIELD_COLUMNS)
        return pd.concat(frames, ignore_index=True)

    def prediction_grid(self, config: ExperimentConfig) -> CollocationSet:
        seed = derive_seeds(config.seed, 5)[4]
        return prediction_grid(config.build_domain(), config.output.prediction_counts(), config.flow, seed)

    # --- diagnostics -------------------------------------------------------

    def residual_table(self, model: TrainedModel) -> pd.DataFrame:
        """Governing residuals at each subdomain's interior points with the final networks."""
        form = model.config.residual_form
        frames = []
        for spec, params in zip(model.subdomains, model.params):
            if not spec.collocation.n_g:
                continue
            evaluation = evaluate_with_derivatives(params, spec.collocation.interior,
                                                   order=form.derivative_order, create_graph=False)
            residuals = governing_residuals(evaluation, model.config.flow, form)
            frames.append(residual_frame(spec.collocation.interior, residuals))
        if not frames:
            return pd.DataFrame(columns=RESIDUAL_COLUMNS)
        return pd.concat(frames, ignore_index=True)

    def boundary_flux_diagnostics(self, model: TrainedModel, times: Sequence[float],
                                  n_points: int = 101) -> pd.DataFrame:
        """Inlet inflow, outlet outflow (trapezoidal rule), their imbalance and the outlet backflow share."""
        domain = model.domain
        inlet, outlet = domain.inlet_segment(n_points), domain.outlet_segment(n_points)
        rows = []
        for t in times:
            rates = []
            for segment in (inlet, outlet):
                points = np.column_stack([segment.points, np.full(len(segment.points), float(t))])
                uv = self.assemble_global_solution(model, points)[:, :2]
                normal_velocity = uv @ segment.direction
                rates.append((np.trapezoid(normal_velocity, dx=segment.length / (n_points - 1)), normal_velocity))
            (inflow, _), (outflow, outlet_velocity) = rates
            rows.append([float(t), inflow, outflow, inflow - outflow, float(np.mean(outlet_velocity < 0))])
        return pd.DataFrame(rows, columns=FLUX_COLUMNS)

    # --- sweeps --------------------------------------------------------------

    def run_sweep(self, base: ExperimentConfig, axis: str, values: Sequence[float],
                  inner_axis: Optional[str] = None, inner_values: Optional[Sequence[float]] = None,
                  on_result: Optional[Callable[[int, ExperimentConfig, Optional[TrainedModel], Optional[Exception]], None]] = None
                  ) -> pd.DataFrame:
        """One train() per grid point (outer-major); failed runs are recorded and the sweep continues."""
        if not values:
            raise ConfigurationError("sweep needs at least one value")
        outer_key = sweep_axis(axis)
        grid: List[List[Tuple[str, float]]] = [[(outer_key, v)] for v in values]
        if inner_axis is not None:
            if not inner_values:
                raise ConfigurationError("inner sweep axis given without values")
            inner_key = sweep_axis(inner_axis)
            if inner_key == outer_key:
                raise ConfigurationError(f"inner and outer sweep axes are both '{outer_key}'")
            grid = [[(outer_key, v), (inner_key, w)] for v in values for w in inner_values]
        if base.variant is Variant.WPINN and any(k == "subdomains" for point in grid for k, _ in point):
            raise ConfigurationError("sweeping the subdomain count needs variant WXPINN or WCPINN")

        rows = []
        for index, point in enumerate(grid):
            config = base
            model, error = None, None
            try:
                for key, value in point:
                    config = config.with_axis_value(key, value)
                model = self.train(config)
                final = model.final_loss.to_record()["total"]
                status = "ok" if math.isfinite(final) else "failed: non-finite loss"
                rows.append(self._metrics_row(config, final, model.seconds, model.iterations, status))
            except Exception as e:
                error = e
                kind = type(e).__name__ if isinstance(e, PinnFlowError) else f"unexpected {type(e).__name__}"
                self.logger.error(f"Sweep run {index} ({point}) failed: {kind}: {e}")
                rows.append(self._metrics_row(config, math.nan, math.nan, 0, f"failed: {kind}: {e}"))
            if on_result is not None:
                on_result(index, config, model, error)
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)

    @staticmethod
    def _metrics_row(config: ExperimentConfig, final: float, seconds: float, iterations: int, status: str) -> list:
        d = config.decomposition
        return [d.subdomains, d.beta, d.gamma, d.delta, final, seconds, iterations, status]
