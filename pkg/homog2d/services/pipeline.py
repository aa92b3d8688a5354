"""
Run orchestration: stage scheduling, check reduction and the single writer phase.
"""

from __future__ import annotations

import asyncio
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TypeVar

import numpy as np

from homog2d import __version__
from homog2d.cli.config_file import dump_effective_toml
from homog2d.core.config import Settings
from homog2d.core.errors import Homog2dError
from homog2d.models.coefficients import CoefficientSet
from homog2d.models.effective import EffectiveTensors
from homog2d.models.schemas import CheckRecord, RunConfig
from homog2d.repositories.corrector_cache import CorrectorCacheRepository
from homog2d.repositories.reports import ReportRepository
from homog2d.services.cell import CorrectorBundle, cell_residuals, theta_residual
from homog2d.services.coefficients import GridCoefficients, preset, sample_grid, verify_boundedness, verify_ellipticity
from homog2d.services.effective import assemble_L0, build_correctors, check_effective_ellipticity, effective_from_bundle
from homog2d.services.green import GreenDiagnostics, green_column, green_diagnostics, log_slope
from homog2d.services.mesh import DomainMesh, Field
from homog2d.services.rates import (
    CORNER_CAVEAT,
    EXACT_FLOOR,
    RateReport,
    expansion_residual_check,
    green_convergence,
    measure_errors,
    problem_data,
    refinement_change,
    summarize,
    truncated_slope,
)
from homog2d.services.solver import COERCIVITY_THRESHOLD, assemble_operator, select_lambda, solve_dirichlet
from homog2d.services.uniformity import STABILITY_FACTOR, UniformityReport, manufactured_study, uniformity_at

logger = logging.getLogger(__name__)

T = TypeVar("T")

STAGES = ("cell", "effective", "solve", "green", "rates")
STAGE_PLAN: dict[str, tuple[str, ...]] = {
    "cell": ("cell",),
    "effective": ("cell", "effective"),
    "solve": ("cell", "effective", "solve"),
    "green": ("cell", "effective", "green"),
    "rates": ("cell", "effective", "rates"),
    "all": STAGES,
}

CHI_RESIDUAL_SLACK = 10.0
CELL_LIMITS = {
    "chi_mean": 1e-8,
    "theta_mean": 1e-8,
    "b_mean": 1e-8,
    "b_divergence": 1e-6,
    "E_antisymmetry": 0.0,
    "E_divergence": 1e-2,
}
SYMMETRY_LIMIT = 1e-6
REPRESENTATION_LIMIT = 1e-6
# bounds whose ratio does not depend on h; the pw5/pw6 steps are one mesh cell
STABLE_BOUNDS = ("preliminary", "pw4", "combined", "lip_grad_x", "lip_grad_y")
MANUFACTURED_ORDER = 2.0
MANUFACTURED_SLACK = 0.2
RATE_SLOPE_MIN = 0.9
UNCORRECTED_H1_MAX = 0.5
GREEN_SLOPE_MIN = 0.8
LOG_SLOPE_SLACK = 0.15
LOG_SLOPE_CELLS = 128
REFINEMENT_LIMIT = 0.2
REFINEMENT_MAX_CELLS = 512
EXPANSION_ORDER_MIN = 1.5

EFFECTIVE_HEADER = ("i", "j", "alpha", "beta", "value", "tensor")
RATES_HEADER = ("preset", "eps", "norm_id", "error", "slope", "residual")
GREEN_HEADER = ("ineq_id", "eps", "x1", "x2", "y1", "y2", "lhs", "bound", "ratio", "near_corner")
CHECKS_HEADER = ("stage", "check_id", "value", "threshold", "status")


def spread(values: list[float]) -> float:
    """max/min of positive values; 1 when everything is zero."""
    array = np.asarray(values, dtype=np.float64)
    if not array.size or array.max() == 0:
        return 1.0
    if array.min() <= 0:
        return math.inf
    return float(array.max() / array.min())


def effective_rows(effective: EffectiveTensors) -> list[tuple]:
    """One row per tensor entry, 1-based indices; j is blank for the rank-3 and rank-2 tensors."""
    rows: list[tuple] = []
    for (i, j, alpha, beta), value in np.ndenumerate(effective.A_hat):
        rows.append((i + 1, j + 1, alpha + 1, beta + 1, float(value), "A"))
    for name, tensor in (("V", effective.V_hat), ("B", effective.B_hat)):
        for (i, alpha, beta), value in np.ndenumerate(tensor):
            rows.append((i + 1, None, alpha + 1, beta + 1, float(value), name))
    for (alpha, beta), value in np.ndenumerate(effective.c_hat):
        rows.append((None, None, alpha + 1, beta + 1, float(value), "c"))
    return rows


def count_statuses(checks: list[CheckRecord]) -> dict[str, int]:
    counts = {"PASS": 0, "FLAG": 0, "FAIL": 0}
    for check in checks:
        counts[check.status] += 1
    return counts


@dataclass(slots=True)
class RunOutcome:
    exit_code: int
    checks: list[CheckRecord]
    artifacts: list[Path]
    error: Homog2dError | None = None

    def counts(self) -> dict[str, int]:
        return count_statuses(self.checks)


@dataclass
class _RunState:
    coefficients: CoefficientSet | None = None
    grid: GridCoefficients | None = None
    bundle: CorrectorBundle | None = None
    effective: EffectiveTensors | None = None
    cache_hit: bool = False
    checks: list[CheckRecord] = field(default_factory=list)
    rate_reports: list[tuple[str, RateReport]] = field(default_factory=list)
    green: list[GreenDiagnostics] = field(default_factory=list)
    uniformity: UniformityReport | None = None
    manufactured: list[tuple[float, float]] = field(default_factory=list)
    fields: dict[str, Field] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)


class HomogenizationPipeline:
    """
    Runs the stages a command needs, then writes every artifact in one pass.

    Independent solves go to worker threads under a semaphore sized by `threads`;
    results are reduced in ε order so outputs do not depend on scheduling.
    """

    def __init__(
        self,
        config: RunConfig,
        settings: Settings,
        reports: ReportRepository,
        cache: CorrectorCacheRepository | None = None,
    ) -> None:
        self._config = config
        self._settings = settings
        self._reports = reports
        self._cache = cache
        self._threads = config.threads or settings.threads
        self._semaphore = asyncio.Semaphore(self._threads)
        self._state = _RunState()

    async def _offload(self, fn: Callable[..., T], *args: Any, **kwargs: Any) -> T:
        async with self._semaphore:
            return await asyncio.to_thread(fn, *args, **kwargs)

    def _check(self, record: CheckRecord) -> None:
        self._state.checks.append(record)
        log = logger.info if record.status == "PASS" else logger.warning
        log(record.line())

    async def run(self) -> RunOutcome:
        error: Homog2dError | None = None
        plan = STAGE_PLAN[self._config.command]
        logger.info(
            f"homog2d {__version__}: command={self._config.command}, stages={list(plan)}, threads={self._threads}"
        )
        try:
            await self._resolve_coefficients()
            for stage in plan:
                started = time.perf_counter()
                await getattr(self, f"_stage_{stage}")()
                self._state.timings[stage] = time.perf_counter() - started
                logger.info(f"stage {stage} finished in {self._state.timings[stage]:.2f}s")
        except Homog2dError as exc:
            error = exc
            logger.error(f"Run stopped: {exc.to_record()}")
        finally:
            artifacts = self._write_all(error)

        checks = list(self._state.checks)
        if error is not None:
            exit_code = error.exit_code
        elif any(check.status == "FAIL" for check in checks):
            exit_code = 3
        else:
            exit_code = 0
        return RunOutcome(exit_code=exit_code, checks=checks, artifacts=artifacts, error=error)

    async def _resolve_coefficients(self) -> None:
        config = self._config
        if config.preset is not None:
            coefficients = preset(config.preset)
        else:
            coefficients = config.coefficients
            verify_ellipticity(coefficients)
            verify_boundedness(coefficients)
        meshes = {eps: DomainMesh.for_period(eps, config.nodes_per_period) for eps in config.eps}
        policy = config.lambda_policy
        if policy == "auto":
            coarsest = config.eps[0]
            lam = await self._offload(select_lambda, coefficients, coarsest, meshes[coarsest], seed=config.seed)
            coefficients = coefficients.with_lambda(lam)
        elif policy is not None:
            coefficients = coefficients.with_lambda(float(policy))
        logger.info(f"coefficients '{coefficients.name}' (m={coefficients.m}, λ={coefficients.lam:g})")
        self._state.coefficients = coefficients

    async def _stage_cell(self) -> None:
        state, config = self._state, self._config
        grid = await self._offload(sample_grid, state.coefficients, config.torus_N)
        bundle = self._cache.load(grid.digest, grid.N, config.tol) if self._cache else None
        if bundle is None:
            bundle, effective = await self._offload(build_correctors, grid, config.tol)
            if self._cache:
                self._cache.save(bundle, config.tol)
        else:
            state.cache_hit = True
            logger.info("cell solves skipped: correctors loaded from cache")
            effective = await self._offload(effective_from_bundle, grid, bundle)
        residuals, theta_defect = await asyncio.gather(
            self._offload(cell_residuals, grid, bundle),
            self._offload(theta_residual, grid, bundle, effective),
        )
        state.grid, state.bundle, state.effective = grid, bundle, effective

        # stored χ is mean-projected after the solve; the projection adds roundoff only
        self._check(
            CheckRecord.at_most("cell", "chi_residual", residuals["chi_residual"], CHI_RESIDUAL_SLACK * config.tol)
        )
        for check_id, limit in CELL_LIMITS.items():
            self._check(CheckRecord.at_most("cell", check_id, residuals[check_id], limit))
        self._check(CheckRecord.at_most("cell", "theta_residual", theta_defect, max(config.tol, 1e-12)))

    async def _stage_effective(self) -> None:
        lowest = check_effective_ellipticity(self._state.effective)
        self._check(CheckRecord.at_least("effective", "ellipticity", lowest, 0.0, hard=True))

    async def _stage_solve(self) -> None:
        state, config = self._state, self._config
        coefficients = state.coefficients

        def coercivity(eps: float) -> float:
            op = assemble_operator(coefficients, eps, DomainMesh.for_period(eps, config.nodes_per_period))
            return op.require_coercive()

        constants = await asyncio.gather(*(self._offload(coercivity, eps) for eps in config.eps))
        for eps, c0 in zip(config.eps, constants):
            self._check(CheckRecord.at_least("solve", f"coercivity@eps={eps:g}", c0, COERCIVITY_THRESHOLD))

        per_eps, study, exported = await asyncio.gather(
            asyncio.gather(
                *(
                    self._offload(
                        uniformity_at,
                        coefficients,
                        eps,
                        config.nodes_per_period,
                        rhs=config.rhs,
                        boundary=config.boundary,
                        tol=config.tol,
                        seed=config.seed,
                    )
                    for eps in config.eps
                )
            ),
            self._offload(manufactured_study, config.mms_levels),
            self._offload(self._export_fields, config.eps[0]),
        )
        report = UniformityReport(label=coefficients.name)
        for rows in per_eps:
            report.rows.extend(rows)
        state.uniformity = report
        for metric, (ratio, _) in report.verdicts().items():
            self._check(CheckRecord.at_most("solve", f"uniformity_{metric}", ratio, STABILITY_FACTOR, hard=False))

        state.manufactured = study.rows
        gap = abs(study.order - MANUFACTURED_ORDER) if study.order is not None else 0.0
        self._check(CheckRecord.at_most("solve", "manufactured_order_gap", gap, MANUFACTURED_SLACK))
        state.fields.update(exported)

    def _export_fields(self, eps: float) -> dict[str, Field]:
        state, config = self._state, self._config
        mesh = DomainMesh.for_period(eps, config.nodes_per_period)
        F, g = problem_data(mesh, state.coefficients.m, config.rhs, config.boundary)
        u_eps = solve_dirichlet(assemble_operator(state.coefficients, eps, mesh), F=F, g=g, tol=config.tol)
        u0 = solve_dirichlet(assemble_L0(state.effective, mesh), F=F, g=g, tol=config.tol)
        return {"u_eps": u_eps, "u0": u0}

    async def _stage_green(self) -> None:
        state, config = self._state, self._config
        coefficients = state.coefficients

        def diagnostics(eps: float) -> GreenDiagnostics:
            op = assemble_operator(coefficients, eps, DomainMesh.for_period(eps, config.green_nodes_per_period))
            return green_diagnostics(op, config.green_poles, config.sigmas, seed=config.seed, tol=config.tol)

        pairs = [(pair.x, pair.y) for pair in config.green_pairs]
        results, convergence, slope = await asyncio.gather(
            asyncio.gather(*(self._offload(diagnostics, eps) for eps in config.eps)),
            self._offload(
                green_convergence,
                coefficients,
                state.effective,
                pairs,
                config.eps,
                nodes_per_period=config.green_nodes_per_period,
                tol=config.tol,
            ),
            self._offload(self._laplacian_log_slope),
        )
        state.green = list(results)
        for result in results:
            tag = f"@eps={result.eps:g}"
            self._check(CheckRecord.at_most("green", f"symmetry{tag}", result.symmetry, SYMMETRY_LIMIT))
            self._check(
                CheckRecord.at_most("green", f"representation{tag}", result.representation, REPRESENTATION_LIMIT)
            )

        self._check(
            CheckRecord.at_most("green", "bmo_spread", spread([r.bmo for r in results]), STABILITY_FACTOR, hard=False)
        )
        ratios = [r.bounds.max_ratios() for r in results]
        for ineq_id in STABLE_BOUNDS:
            values = [ratio[ineq_id] for ratio in ratios if ineq_id in ratio]
            if not values:
                continue
            self._check(
                CheckRecord.at_most("green", f"{ineq_id}_ratio_spread", spread(values), STABILITY_FACTOR, hard=False)
            )

        expected = 1.0 / (2.0 * math.pi)
        gap = abs(slope / expected - 1.0)
        self._check(CheckRecord.at_most("green", "laplacian_log_slope_gap", gap, LOG_SLOPE_SLACK, hard=False))

        state.rate_reports.append(("green_", convergence))
        for pair_id in convergence.norm_ids():
            self._slope_check("green", f"green_{pair_id}", convergence, pair_id, GREEN_SLOPE_MIN)
        if convergence.profile:
            profile = spread(list(convergence.profile.values()))
            self._check(CheckRecord.at_most("green", "green_profile_spread", profile, STABILITY_FACTOR, hard=False))

    @staticmethod
    def _laplacian_log_slope() -> float:
        laplace = preset("identity").with_lambda(0.0)
        op = assemble_operator(laplace, None, DomainMesh(M=LOG_SLOPE_CELLS - 1))
        return log_slope(green_column(op, (0.5, 0.5)))

    def _slope_check(self, stage: str, check_id: str, report: RateReport, norm_id: str, minimum: float) -> None:
        fit = report.fits.get(norm_id)
        if fit is None:
            return
        if fit.exact:
            errors = [error for _, error in report.points(norm_id)]
            self._check(CheckRecord.at_most(stage, f"{check_id}_max_error", max(errors), EXACT_FLOOR))
        elif fit.slope is None:
            self._check(
                CheckRecord(stage=stage, check_id=f"{check_id}_slope", value=math.nan, threshold=minimum, status="FLAG")
            )
        else:
            self._check(CheckRecord.at_least(stage, f"{check_id}_slope", fit.slope, minimum))

    async def _stage_rates(self) -> None:
        state, config = self._state, self._config
        exp = config.rate_experiment()
        coefficients, bundle, effective = state.coefficients, state.bundle, state.effective
        started = time.perf_counter()

        candidates = [eps for eps in exp.eps if 2 * exp.nodes_per_period / eps <= REFINEMENT_MAX_CELLS]
        refinement_eps = candidates[-1] if candidates else None

        async def refinement() -> float | None:
            if refinement_eps is None:
                return None
            return await self._offload(refinement_change, coefficients, bundle, effective, refinement_eps, exp)

        per_eps, change, expansion = await asyncio.gather(
            asyncio.gather(
                *(self._offload(measure_errors, coefficients, bundle, effective, eps, exp) for eps in exp.eps)
            ),
            refinement(),
            self._offload(
                expansion_residual_check,
                coefficients,
                bundle,
                effective,
                exp.eps[0],
                config.expansion_resolutions,
            ),
        )
        rows = [row for batch in per_eps for row in batch]
        report = summarize(coefficients.name, rows, exp.exact_floor, time.perf_counter() - started)
        report.caveats.append(CORNER_CAVEAT)
        state.rate_reports.append(("", report))

        for norm_id in ("L2", "Linf", "L2_interior", "H1_corrected"):
            self._slope_check("rates", norm_id, report, norm_id, RATE_SLOPE_MIN)
        h1 = report.fits.get("H1")
        if h1 is not None and h1.slope is not None:
            self._check(CheckRecord.at_most("rates", "H1_slope", h1.slope, UNCORRECTED_H1_MAX, hard=False))
        for norm_id in ("L2", "H1_corrected"):
            fit = report.fits.get(norm_id)
            if fit is None or fit.slope is None:
                continue
            tail = truncated_slope(report.points(norm_id), exp.exact_floor)
            if tail is not None:
                floor = fit.slope - (fit.residual or 0.0)
                self._check(CheckRecord.at_least("rates", f"{norm_id}_truncated_slope", tail, floor))

        if change is not None:
            check_id = f"refinement_change@eps={refinement_eps:g}"
            self._check(CheckRecord.at_most("rates", check_id, change, REFINEMENT_LIMIT, hard=False))
        for check_id, order, defects in (
            ("expansion_order", expansion.order, expansion.defects),
            ("flux_corrector_order", expansion.flux_order, expansion.flux_defects),
        ):
            if order is None:
                self._check(CheckRecord.at_most("rates", f"{check_id}_defect", max(defects), EXACT_FLOOR, hard=False))
            else:
                self._check(CheckRecord.at_least("rates", check_id, order, EXPANSION_ORDER_MIN))

    def _write_all(self, error: Homog2dError | None) -> list[Path]:
        """Single writer phase; runs after a failure too so partial results survive."""
        state, config, reports = self._state, self._config, self._reports
        name = state.coefficients.name if state.coefficients else (config.preset or "custom")

        if state.effective is not None:
            reports.write_csv("effective.csv", EFFECTIVE_HEADER, effective_rows(state.effective))
            reports.write_text("effective.toml", dump_effective_toml(state.effective))

        if state.rate_reports:
            rows = []
            series: dict[str, list[tuple[float, float]]] = {}
            for prefix, report in state.rate_reports:
                for row in report.rows:
                    fit = report.fits.get(row.norm)
                    slope = "exact" if fit is not None and fit.exact else (fit.slope if fit else None)
                    residual = fit.residual if fit is not None else None
                    rows.append((name, row.eps, f"{prefix}{row.norm}", row.error, slope, residual))
                    series.setdefault(f"{prefix}{row.norm}", []).append((row.eps, row.error))
            reports.write_csv("rates.csv", RATES_HEADER, rows)
            reports.write_svg("rates.svg", f"{name}: error vs eps", series, x_label="eps", y_label="error")

        if state.green:
            rows = []
            for result in state.green:
                for bound in result.bounds.rows:
                    rows.append(
                        (
                            bound.ineq_id,
                            result.eps,
                            *bound.x,
                            *bound.y,
                            bound.lhs,
                            bound.bound,
                            bound.ratio,
                            bound.near_corner,
                        )
                    )
            reports.write_csv("green_report.csv", GREEN_HEADER, rows)
            finest = state.green[-1]
            scatter: dict[str, list[tuple[float, float]]] = {}
            for bound in finest.bounds.rows:
                scatter.setdefault(bound.ineq_id, []).append((math.dist(bound.x, bound.y), bound.ratio))
            reports.write_svg(
                "green.svg",
                f"{name}: bound ratios at eps={finest.eps:g}",
                scatter,
                x_label="|x - y|",
                y_label="lhs / bound",
                lines=False,
            )

        if state.uniformity is not None:
            reports.write_csv(
                "uniformity.csv",
                ("preset", "metric", "eps", "value"),
                ((name, row.metric, row.eps, row.value) for row in state.uniformity.rows),
            )
        if state.manufactured:
            reports.write_csv("manufactured.csv", ("h", "error"), state.manufactured)
        for field_name, u in state.fields.items():
            reports.write_field_csv(f"fields/{field_name}.csv", u)
            reports.write_field_block(f"fields/{field_name}.homf", u)

        reports.write_csv(
            "checks.csv",
            CHECKS_HEADER,
            ((c.stage, c.check_id, c.value, c.threshold, c.status) for c in state.checks),
        )
        reports.write_text("report.txt", self._report_text(name, error))
        echo = config.model_dump(mode="json", by_alias=True)
        echo["resolved_lambda"] = state.coefficients.lam if state.coefficients else None
        echo["threads"] = self._threads
        reports.write_json("config.effective.json", echo)
        return reports.written

    def _report_text(self, name: str, error: Homog2dError | None) -> str:
        state, config = self._state, self._config
        lines = [
            f"homog2d {__version__}: command={config.command} preset={name}",
            f"torus N={config.torus_N}, P={config.nodes_per_period}, eps=[{', '.join(f'{e:g}' for e in config.eps)}]",
        ]
        if state.coefficients is not None:
            lines.append(f"digest {state.coefficients.digest()[:16]}, lambda={state.coefficients.lam:g}")
        if state.grid is not None:
            lines.append("correctors: loaded from cache" if state.cache_hit else "correctors: computed")
        lines.append("")
        lines.extend(check.line() for check in state.checks)
        counts = count_statuses(state.checks)
        lines.append("")
        lines.append(f"summary: {counts['PASS']} PASS, {counts['FLAG']} FLAG, {counts['FAIL']} FAIL")
        for _, report in state.rate_reports:
            for caveat in report.caveats:
                lines.append(f"note: {caveat}")
        if error is not None:
            lines.append(f"[ERROR] {error.error_code}: {error.message}")
        return "\n".join(lines) + "\n"
