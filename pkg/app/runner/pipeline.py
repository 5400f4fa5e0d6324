from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from app.calculus import symbols as sy
from app.calculus.gauss_wick import anti_wick_matrix, point_lattice, reg_compose, reg_compose_kernel_quadrature, wick_symbol_grid
from app.calculus.hybrid_decomp import (
    DEFAULT_N_LIST,
    BoundReport,
    ModeFamily,
    ModeSubset,
    bound_experiment_lemma41,
    bound_experiment_prop23,
    bound_experiment_prop42,
    bound_experiment_thm12,
    decomposition_check,
    heterogeneous_family,
    identical_family,
    subsets,
)
from app.calculus.moyal_expansion import (
    CLASS_SHIFT,
    moyal_partial_sum,
    remainder_class_check,
    remainder_n_dependence,
    slope_fit,
    term_symmetry_residual,
)
from app.calculus.phase_grid import Grid2D, ModeFunction
from app.calculus.star_core import (
    gaussian_star_closed_form,
    leibniz_residual,
    weyl_star,
    weyl_star_mode,
    weyl_star_quadrature,
)
from app.core.config import Settings
from app.core.errors import ConfigError
from app.core.logging import logger, set_experiment
from app.runner.models import ExperimentConfig, RunResult, parse_class_spec
from app.services.corpus import CorpusRepo

T = TypeVar("T")
R = TypeVar("R")

STAR_TOL = 1e-10
ORACLE_TOL = 1e-6
REG_TOL = 1e-6
DECOMPOSE_TOL = 1e-8
ROUTE_TOL = 1e-8
SLOPE_TOL = 0.1
CONTRACTION_SLACK = 1e-9
DEFAULT_K = 32
DEFAULT_H_LIST = (0.4, 0.2, 0.1, 0.05)
SWEEP_H_LIST = (0.5, 0.25, 0.125)
GAUSSIAN_PROBES = ((0.0, 0.0), (0.3, -0.2), (0.5, 0.0))
KERNEL_PROBES = ((0.0, 0.0), (0.4, -0.3), (-0.7, 0.2))
BOUND_COLUMNS = ["experiment", "n", "h", "subset", "lhs", "rhs", "fitted_constant", "pass"]


class PipelineBase:
    def __init__(self, settings: Settings, corpus: CorpusRepo) -> None:
        self.settings = settings
        self.corpus = corpus

    def workers(self, config: ExperimentConfig) -> int:
        return config.workers or self.settings.workers

    def ordered_map(self, config: ExperimentConfig, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Results in submission order regardless of scheduling."""
        workers = self.workers(config)
        if workers <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))

    def grid(self, config: ExperimentConfig, name: str) -> Grid2D:
        base = self.corpus.grid_for(name)
        if config.grid_L is None and config.grid_Q is None:
            return base
        return Grid2D(config.grid_L or base.L, config.grid_Q or base.Q)

    def pair(self, config: ExperimentConfig, default: str) -> Tuple[str, str]:
        return self.corpus.get_pair(config.pair or default)

    def tensors(self, config: ExperimentConfig, default_pair: str, n: int) -> Tuple[sy.TensorSymbol, sy.TensorSymbol]:
        a_name, b_name = self.pair(config, default_pair)
        grid = self.grid(config, a_name)
        return self.corpus.get_symbol(a_name, n, grid), self.corpus.get_symbol(b_name, n, grid)

    def factors(self, config: ExperimentConfig, default_pair: str) -> Tuple[ModeFunction, ModeFunction]:
        a_name, b_name = self.pair(config, default_pair)
        grid = self.grid(config, a_name)
        return self.corpus.get_factor(a_name, grid), self.corpus.get_factor(b_name, grid)

    def class_spec(self, config: ExperimentConfig, name: str, n: int) -> sy.SymbolClassSpec:
        if config.spec:
            text = parse_class_spec(config.spec)
            rho, delta = text.rho, text.delta
            if len(rho) == 1 and n > 1:
                rho, delta = rho * n, delta * n
            if len(rho) != n:
                raise ConfigError(f"class spec has {len(rho)} weights for n={n}")
            return sy.SymbolClassSpec(text.m, text.M, rho, delta)
        spec = self.corpus.get_class(name)
        if spec is None:
            raise ConfigError(f"no class spec given and the corpus has none for {name!r}")
        return spec if n == 1 else spec.replicate(n)

    def mode_subsets(self, config: ExperimentConfig, n: int) -> List[ModeSubset]:
        if config.modes:
            return [ModeSubset.from_mask(mask) for mask in config.modes]
        return list(subsets(n))

    def n_from(self, config: ExperimentConfig, default: int) -> int:
        if config.n is not None:
            return config.n
        if config.modes:
            return len(config.modes[0])
        return default


def _bound_row(report: BoundReport, subset: str = "") -> Dict[str, Any]:
    row = report.row()
    row.update({"experiment": report.experiment, "subset": subset, "pass": report.passed})
    return row


class StarFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        a_name, b_name = self.pipeline.pair(config, "sinsin")
        if self.pipeline.corpus.get_entry(a_name).form == "gaussian":
            return self._run_gaussian(config, a_name, b_name)
        n = self.pipeline.n_from(config, 1)
        h = config.h or 0.5
        tol = config.tol or STAR_TOL
        A, B = self.pipeline.tensors(config, "sinsin", n)
        composed = weyl_star(A, B, h)
        one = sy.replicate(ModeFunction.constant(A.factors[0].grid), n)
        unit = sy.coefficient_l1(sy.subtract(weyl_star(one, B, h), B))
        adjoint = sy.coefficient_l1(
            sy.subtract(sy.conjugate(composed), weyl_star(sy.conjugate(B), sy.conjugate(A), h))
        )
        leibniz = max(leibniz_residual(A, B, h, 0, "x"), leibniz_residual(A, B, h, 0, "xi"))
        result = RunResult(
            "star",
            {
                "pair": [a_name, b_name],
                "n": n,
                "h": h,
                "sup_norm": sy.sup_norm(composed),
                "unit_residual": unit,
                "adjoint_residual": adjoint,
                "leibniz_residual": leibniz,
                "tol": tol,
            },
            columns=["mode", "sup"],
            rows=[{"mode": j, "sup": f.sup_norm()} for j, f in enumerate(composed.factors)],
        )
        result.require(unit <= tol, "star unit")
        result.require(adjoint <= tol, "conjugation adjoint")
        result.require(leibniz <= tol, "Leibniz rule")
        return result

    def _run_gaussian(self, config: ExperimentConfig, a_name: str, b_name: str) -> RunResult:
        corpus = self.pipeline.corpus
        h = config.h or 0.5
        tol = config.tol or ORACLE_TOL
        grid = self.pipeline.grid(config, a_name)
        wa, wb = corpus.get_windowed(a_name), corpus.get_windowed(b_name)
        spectral = weyl_star_mode(corpus.get_factor(a_name, grid), corpus.get_factor(b_name, grid), h)
        points = np.array(GAUSSIAN_PROBES)
        quad = weyl_star_quadrature(wa, wb, h, points)
        values = spectral.evaluate(points[:, 0], points[:, 1])
        scale = max(1.0, float(np.max(np.abs(quad.values))))
        oracle_error = float(np.max(np.abs(values - quad.values))) / scale
        payload: Dict[str, Any] = {
            "pair": [a_name, b_name],
            "n": 1,
            "h": h,
            "sup_norm": spectral.sup_norm(),
            "oracle_error": oracle_error,
            "quadrature_nodes": quad.nodes,
            "quadrature_error_estimate": quad.error_estimate,
            "tol": tol,
        }
        rows = [
            {
                "x": float(x),
                "xi": float(xi),
                "spectral_re": float(v.real),
                "spectral_im": float(v.imag),
                "quadrature_re": float(q.real),
                "quadrature_im": float(q.imag),
            }
            for (x, xi), v, q in zip(points, values, quad.values)
        ]
        result = RunResult("star", payload, list(rows[0]), rows)
        if wa.carrier is None and wb.carrier is None:
            closed = gaussian_star_closed_form(wa.rate, wb.rate, h, points[:, 0], points[:, 1])
            payload["closed_form_error"] = float(np.max(np.abs(values - closed)))
            result.require(payload["closed_form_error"] <= tol, "Gaussian closed form")
        result.require(oracle_error <= tol, "spectral vs quadrature oracle")
        result.require(not quad.flagged, "quadrature convergence")
        return result


class RegFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        a_name, b_name = self.pipeline.pair(config, "sinsin")
        a, b = self.pipeline.factors(config, "sinsin")
        h = config.h or 0.5
        K = config.K or DEFAULT_K
        tol = config.tol or REG_TOL
        composed = reg_compose(a, b, h)
        sup = composed.sup_norm(4)
        bound = a.sup_norm(4) * b.sup_norm(4)

        product = anti_wick_matrix(a, h, K) @ anti_wick_matrix(b, h, K)
        lattice = point_lattice()
        wick = wick_symbol_grid(product, lattice)
        wick_error = float(np.max(np.abs(wick - composed.evaluate(lattice[:, 0], lattice[:, 1]))))

        probes = np.array(KERNEL_PROBES)
        kernel = reg_compose_kernel_quadrature(a, b, h, probes)
        direct = composed.evaluate(probes[:, 0], probes[:, 1])
        kernel_error = float(np.max(np.abs(kernel.values - direct)))

        rows = [
            {"x": float(x), "xi": float(xi), "reg_re": float(v.real), "reg_im": float(v.imag), "kernel_re": float(k.real), "kernel_im": float(k.imag)}
            for (x, xi), v, k in zip(probes, direct, kernel.values)
        ]
        result = RunResult(
            "reg",
            {
                "pair": [a_name, b_name],
                "h": h,
                "K": K,
                "sup_norm": sup,
                "contraction_bound": bound,
                "wick_route_error": wick_error,
                "kernel_route_error": kernel_error,
                "tol": tol,
            },
            list(rows[0]),
            rows,
        )
        result.require(sup <= bound + CONTRACTION_SLACK, "sup-norm contraction")
        result.require(wick_error <= tol, "anti-Wick product route")
        result.require(kernel_error <= tol, "Gaussian kernel route")
        return result


class HybridFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        n = self.pipeline.n_from(config, 2)
        h = config.h or 0.5
        a_name, b_name = self.pipeline.pair(config, "bump")
        A, B = self.pipeline.tensors(config, "bump", n)
        rows = []
        for I in self.pipeline.mode_subsets(config, n):
            rows.append(_bound_row(bound_experiment_lemma41(A, B, I, h), I.to_mask()))
            rows.append(_bound_row(bound_experiment_prop23(A, B, I, h), I.to_mask()))
        result = RunResult("hybrid", {"pair": [a_name, b_name], "n": n, "h": h}, BOUND_COLUMNS, rows)
        for row in rows:
            result.require(bool(row["pass"]), f"{row['experiment']} bound for I={row['subset']}")
        return result


class DecomposeFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        n = self.pipeline.n_from(config, 2)
        h = config.h or 0.2
        tol = config.tol or DECOMPOSE_TOL
        a_name, b_name = self.pipeline.pair(config, "bump")
        A, B = self.pipeline.tensors(config, "bump", n)
        report = decomposition_check(A, B, h, tol, workers=self.pipeline.workers(config), budget=self.pipeline.settings.lattice_budget)
        payload = report.to_dict()
        payload["pair"] = [a_name, b_name]
        rows = [{"labels": labels, "term_sup": sup} for labels, sup in zip(report.terms, report.term_sups)]
        result = RunResult("decompose", payload, ["labels", "term_sup"], rows)
        result.require(report.residual <= tol, "decomposition identity")
        result.require(report.passed, "summation order independence")
        return result


class ExpandFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        n = self.pipeline.n_from(config, 1)
        N = config.N or 2
        hs = config.h_list or ((config.h,) if config.h else DEFAULT_H_LIST)
        tol = config.tol or ROUTE_TOL
        a_name, b_name = self.pipeline.pair(config, "slope")
        A, B = self.pipeline.tensors(config, "slope", n)
        expansions = self.pipeline.ordered_map(config, lambda h: moyal_partial_sum(A, B, N, h, with_integral=True), list(hs))
        rows = []
        for h, item in zip(hs, expansions):
            rows.append(
                {
                    "h": h,
                    "N": N,
                    "remainder_norm": item.remainder_norm,
                    "route_difference": item.route_difference(),
                    "per_order_norms": list(item.per_order_norms),
                }
            )
        norms = [row["remainder_norm"] for row in rows]
        max_route = max(row["route_difference"] for row in rows)
        symmetry = term_symmetry_residual(A, B, 1, hs[0])
        payload: Dict[str, Any] = {
            "pair": [a_name, b_name],
            "n": n,
            "N": N,
            "h_list": list(hs),
            "max_route_difference": max_route,
            "symmetry_residual": symmetry,
            "tol": tol,
            "slope": None,
            "rvalue": None,
        }
        result = RunResult("expand", payload, ["h", "N", "remainder_norm", "route_difference", "per_order_norms"], rows)
        if len(hs) >= 2 and min(norms) > 0:
            fit = slope_fit(hs, norms)
            payload.update({"slope": fit.slope, "rvalue": fit.rvalue, "intercept": fit.intercept})
            result.require(abs(fit.slope - N) <= SLOPE_TOL, f"remainder scaling h^{N}")
        result.require(max_route <= tol, "remainder routes agree")
        result.require(symmetry <= tol, "term symmetry")
        return result


class CertifyFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def run(self, config: ExperimentConfig) -> RunResult:
        name = config.symbol or "sinsin"
        n = self.pipeline.n_from(config, 1)
        F = self.pipeline.corpus.get_symbol(name, n, self.pipeline.grid(config, name))
        spec = self.pipeline.class_spec(config, name, n)
        cert = sy.certify_class(F, spec, budget=self.pipeline.settings.lattice_budget)
        payload = cert.to_dict()
        payload.update({"symbol": name, "n": n})
        rows = []
        if n == 1:
            for (alpha, beta), sup in cert.witnessed_sups.items():
                rows.append({"alpha": alpha[0], "beta": beta[0], "sup": sup, "bound": spec.M * spec.weight(alpha, beta)})
        result = RunResult("certify", payload, ["alpha", "beta", "sup", "bound"], rows)
        violation = "" if cert.violation is None else f" at alpha={list(cert.violation[0])} beta={list(cert.violation[1])}"
        result.require(cert.passed, f"class bound{violation}")
        return result


class BoundsFlow:
    def __init__(self, pipeline: PipelineBase) -> None:
        self.pipeline = pipeline

    def family(self, config: ExperimentConfig) -> Tuple[Callable[[int], ModeFamily], str]:
        if (config.family or "heterogeneous") == "heterogeneous":
            return heterogeneous_family(), "heterogeneous"
        a_name, _ = self.pipeline.pair(config, "bump")
        a, b = self.pipeline.factors(config, "bump")
        spec = self.pipeline.class_spec(config, a_name, 1) if (config.spec or self.pipeline.corpus.get_class(a_name)) else None
        rho, delta = (spec.rho[0], spec.delta[0]) if spec else (1.0, 1.0)
        return identical_family(a, b, rho, delta), f"identical:{config.pair or 'bump'}"

    def run(self, config: ExperimentConfig) -> RunResult:
        experiment = config.experiment or "thm12"
        h = config.h or 0.5
        payload: Dict[str, Any] = {"experiment": experiment, "h": h, "family": None}
        rows: List[Dict[str, Any]] = []
        if experiment == "thm12":
            families, label = self.family(config)
            payload["family"] = label
            n_list = config.n_list or DEFAULT_N_LIST
            rows = [_bound_row(r) for r in bound_experiment_thm12(families, h, n_list, label=label)]
        elif experiment in ("lemma41", "prop23"):
            n = self.pipeline.n_from(config, 2)
            A, B = self.pipeline.tensors(config, "bump", n)
            run = bound_experiment_lemma41 if experiment == "lemma41" else bound_experiment_prop23
            rows = [_bound_row(run(A, B, I, h), I.to_mask()) for I in self.pipeline.mode_subsets(config, n)]
        elif experiment == "prop42":
            n = self.pipeline.n_from(config, 2)
            A, B = self.pipeline.tensors(config, "bump", n)
            eps = parse_class_spec(config.spec).rho if config.spec else (1.0,)
            eps = eps * n if len(eps) == 1 else eps
            report = bound_experiment_prop42(A, B, eps, h)
            payload["terms"] = report.details.get("terms")
            rows = [_bound_row(report)]
        elif experiment == "thm13":
            N = config.N or 1
            n = self.pipeline.n_from(config, 1)
            a_name, b_name = self.pipeline.pair(config, "sinsin")
            A, B = self.pipeline.tensors(config, "sinsin", n)
            spec_a = self._remainder_spec(config, a_name, n, N)
            spec_b = self._remainder_spec(config, b_name, n, N)
            report = remainder_class_check(A, B, N, h, spec_a, spec_b)
            payload["certificate"] = report.details.get("certificate")
            rows = [_bound_row(report)]
        else:
            a_name, _ = self.pipeline.pair(config, "sinsin")
            a, b = self.pipeline.factors(config, "sinsin")
            spec = self.pipeline.class_spec(config, a_name, 1)
            n_list = config.n_list or (1, 2, 4, 8)
            reports = remainder_n_dependence(a, b, h, n_list, spec.rho[0], spec.delta[0])
            rows = [_bound_row(r) for r in reports]
        result = RunResult("bounds", payload, BOUND_COLUMNS, rows)
        for row in rows:
            subset = f" I={row['subset']}" if row["subset"] else ""
            result.require(bool(row["pass"]), f"{row['experiment']} bound at n={row['n']}{subset}")
        return result

    def _remainder_spec(self, config: ExperimentConfig, name: str, n: int, N: int) -> sy.SymbolClassSpec:
        spec = self.pipeline.class_spec(config, name, n)
        # the remainder class needs N + 6 derivatives of the inputs
        return spec if spec.m >= N + CLASS_SHIFT else sy.SymbolClassSpec(N + CLASS_SHIFT, spec.M, spec.rho, spec.delta)


class SweepFlow:
    def __init__(self, pipeline: PipelineBase, bounds: BoundsFlow) -> None:
        self.pipeline = pipeline
        self.bounds = bounds

    def run(self, config: ExperimentConfig) -> RunResult:
        families, label = self.bounds.family(config)
        hs = config.h_list or ((config.h,) if config.h else SWEEP_H_LIST)
        n_list = config.n_list or DEFAULT_N_LIST
        batches = self.pipeline.ordered_map(
            config, lambda h: bound_experiment_thm12(families, h, n_list, label=label), list(hs)
        )
        rows = [_bound_row(report) for batch in batches for report in batch]
        payload = {"family": label, "h_list": list(hs), "n_list": list(n_list)}
        result = RunResult("sweep", payload, BOUND_COLUMNS, rows)
        for row in rows:
            result.require(bool(row["pass"]), f"product bound at n={row['n']} h={row['h']}")
        return result


class ExperimentPipeline(PipelineBase):
    def __init__(self, settings: Settings, corpus: CorpusRepo) -> None:
        super().__init__(settings, corpus)
        bounds = BoundsFlow(self)
        self.flows: Dict[str, Any] = {
            "star": StarFlow(self),
            "reg": RegFlow(self),
            "hybrid": HybridFlow(self),
            "decompose": DecomposeFlow(self),
            "expand": ExpandFlow(self),
            "certify": CertifyFlow(self),
            "bounds": bounds,
            "sweep": SweepFlow(self, bounds),
        }

    def run(self, config: ExperimentConfig) -> RunResult:
        flow: Optional[Any] = self.flows.get(config.command)
        if flow is None:
            raise ConfigError(f"unknown command {config.command!r}")
        set_experiment(config.command)
        logger.info("Experiment start command=%s", config.command)
        result = flow.run(config)
        if result.passed:
            logger.info("Experiment finish command=%s pass=True rows=%s", config.command, len(result.rows))
        else:
            logger.warning("Experiment finish command=%s pass=False failures=%s", config.command, result.failures)
        return result
