from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from tqdm import tqdm

from src.channel.dmc import Dmc, capacity
from src.cli.config import ChannelSpec, ExperimentConfig
from src.cli.reports import ExperimentResult, Row
from src.converse.checks import verify_code
from src.kaspi.chain import RegionPoint
from src.kaspi.grid import grid_search
from src.kaspi.optimizer import optimize_point
from src.protocol.codes import Alphabets, rates
from src.protocol.engine import exact_distortions, exact_distortions_by_position, execute_monte_carlo
from src.protocol.random_codes import random_general_code, random_round_lengths, random_schedule, random_staggered_code
from src.protocol.transforms import padding_slots, rate_excess, separate
from src.sepsim.plan import build_plan
from src.sepsim.quantizer import IDEAL
from src.sepsim.runner import SeparationResult, run
from src.source.source import conditional_rate_distortion, entropy_bits, rate_distortion
from src.utils.errors import StateSpaceError
from src.utils.rng import make_rng, split

log = logging.getLogger(__name__)

ANALYTIC_TOL = 1e-6
EXACT_MATCH_TOL = 1e-12
MC_SIGMAS = 3.0


def _h(p: float) -> float:
    return entropy_bits([p, 1.0 - p])


def _map(fn: Callable, items: Sequence, workers: int, progress: bool, desc: str) -> List:
    """
    Ordered map; threads when workers > 1. Results come back in input order.
    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(tqdm(pool.map(fn, items), total=len(items), desc=desc, disable=not progress))
    return [fn(item) for item in tqdm(items, desc=desc, disable=not progress)]


# -------------------------------
# capacity
# -------------------------------
def _analytic_capacity(spec: ChannelSpec) -> Optional[float]:
    if spec.bsc is not None:
        return 1.0 - _h(spec.bsc)
    if spec.bec is not None:
        return 1.0 - spec.bec
    if spec.identity is not None:
        return math.log2(spec.identity)
    return None


def run_capacity(cfg: ExperimentConfig) -> ExperimentResult:
    specs = cfg.capacity.channels or [cfg.channel1, cfg.channel2]
    rows: List[Row] = []
    ok = True
    for spec in specs:
        ch = spec.build()
        res = capacity(ch, tol=cfg.tol)
        reference = _analytic_capacity(spec)
        error = abs(res.capacity - reference) if reference is not None else None
        if error is not None and error > ANALYTIC_TOL:
            ok = False
        rows.append({
            "channel": ch.name,
            "capacity": res.capacity,
            "upper": res.upper,
            "gap": res.gap,
            "iterations": res.iterations,
            "optimal_input": res.optimal_input,
            "reference": reference,
            "error": error,
        })
    summary = [f"{r['channel']}: C = {r['capacity']:.9f} bits/use" for r in rows]
    return ExperimentResult("capacity", rows, summary, ok, plot_columns=["capacity", "upper"])


# -------------------------------
# rd
# -------------------------------
def _binary_hamming_rd(p: float, D: float) -> float:
    return max(_h(p) - _h(D), 0.0) if D < min(p, 1.0 - p) else 0.0


def run_rd(cfg: ExperimentConfig) -> ExperimentResult:
    source = cfg.build_source()
    d1, _ = cfg.build_distortions()
    marginal = np.asarray(cfg.rd.marginal, dtype=np.float64) if cfg.rd.marginal is not None else source.marginal1
    binary_hamming = marginal.size == 2 and np.array_equal(d1.d, 1.0 - np.eye(2))

    rows: List[Row] = []
    ok = True
    for D in cfg.rd.D:
        rate = rate_distortion(marginal, d1, D, tol=cfg.tol)
        row: Row = {"D": D, "rate": rate}
        if cfg.rd.marginal is None:
            row["conditional_rate"] = conditional_rate_distortion(source, d1, D, tol=cfg.tol)
        if binary_hamming:
            row["reference"] = _binary_hamming_rd(float(marginal[1]), D)
            row["error"] = abs(rate - row["reference"])
            ok = ok and row["error"] <= ANALYTIC_TOL
        rows.append(row)
    summary = [f"R({r['D']:g}) = {r['rate']:.9f} bits/symbol" for r in rows]
    return ExperimentResult("rd", rows, summary, ok, plot_columns=["D", "rate"])


# -------------------------------
# converse-sweep
# -------------------------------
def _converse_one(cfg: ExperimentConfig, source, ch1: Dmc, ch2: Dmc, d1, d2, index: int, rng) -> Tuple[List[Row], bool, Optional[Row]]:
    code_rng, mc_rng = split(rng, 2)
    g = cfg.codegen
    alphabets = Alphabets.matching(source, ch1, ch2, d1.recon_size, d2.recon_size)
    n = int(code_rng.choice(g.n))
    q = int(code_rng.choice(g.q))
    lengths = random_round_lengths(q, g.round_lengths, code_rng)
    code = random_staggered_code(n, lengths, alphabets, code_rng)

    report = verify_code(code, source, ch1, ch2, tol=cfg.tol)
    rows = [{"code": index, "n": n, "round_lengths": lengths, **c.as_row()} for c in report.checks]

    mc_row = None
    if index < g.monte_carlo_codes:
        exact = exact_distortions(code, source, ch1, ch2, d1, d2)
        mc = execute_monte_carlo(code, source, ch1, ch2, g.monte_carlo_trials, mc_rng, d1, d2)
        within = all(
            abs(m - e) <= MC_SIGMAS * se + EXACT_MATCH_TOL
            for m, e, se in ((mc.D1, exact[0], mc.stderr1), (mc.D2, exact[1], mc.stderr2))
        )
        mc_row = {
            "code": index, "n": n, "round_lengths": lengths, "trials": mc.trials,
            "D1_exact": exact[0], "D1_mc": mc.D1, "stderr1": mc.stderr1,
            "D2_exact": exact[1], "D2_mc": mc.D2, "stderr2": mc.stderr2,
            "within": within,
        }
    return rows, report.holds, mc_row


def run_converse_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    source = cfg.build_source()
    ch1, ch2 = cfg.build_channels()
    d1, d2 = cfg.build_distortions()
    children = split(make_rng(cfg.seed), cfg.codegen.count)

    results = _map(
        lambda item: _converse_one(cfg, source, ch1, ch2, d1, d2, *item),
        list(enumerate(children)), cfg.workers, cfg.progress, "converse",
    )
    rows = [r for part in results for r in part[0]]
    failing = [i for i, part in enumerate(results) if not part[1]]
    oracle = [part[2] for part in results if part[2] is not None]
    outside = [r["code"] for r in oracle if not r["within"]]

    summary = [
        f"codes: {len(results)}",
        f"checks: {len(rows)}",
        f"codes with a violated check: {len(failing)}" + (f" {failing}" if failing else ""),
        f"smallest inequality slack: {min(r['slack'] for r in rows if r['kind'] == 'inequality'):.3e}" if rows else "no checks",
    ]
    if oracle:
        summary.append(f"monte-carlo vs exact: {len(oracle) - len(outside)}/{len(oracle)} within {MC_SIGMAS:g} stderr")
    tables = {"oracle": oracle} if oracle else {}
    return ExperimentResult("converse-sweep", rows, summary, not failing and not outside, tables)


# -------------------------------
# transform-demo
# -------------------------------
def _transform_one(cfg: ExperimentConfig, source, ch1: Dmc, ch2: Dmc, d1, d2, index: int, rng) -> List[Row]:
    g = cfg.codegen
    alphabets = Alphabets.matching(source, ch1, ch2, d1.recon_size, d2.recon_size)
    n = int(rng.choice(g.n))
    schedule = random_schedule(g.horizon, rng, g.simultaneous)
    code = random_general_code(n, schedule, alphabets, rng)
    base_rates = rates(code)
    base_D = exact_distortions(code, source, ch1, ch2, d1, d2)

    rows: List[Row] = []
    for H in g.lifts:
        staggered = separate(code, H)
        new_rates = rates(staggered)
        delta = rate_excess(code, H)
        excess = max(new_rates[0] - base_rates[0], new_rates[1] - base_rates[1])
        s = staggered.schedule
        row: Row = {
            "code": index, "n": n, "horizon": schedule.N, "pad_slots": padding_slots(code), "H": H,
            "c1": base_rates[0], "c2": base_rates[1], "c1_staggered": new_rates[0], "c2_staggered": new_rates[1],
            "delta": delta, "delta_bound": 2.0 / (n * H), "excess": excess,
            "staggered": s.is_staggered and s.c1[0] == 1 and s.c2[-1] == 1,
            "D1": base_D[0], "D2": base_D[1], "D1_staggered": None, "D2_staggered": None, "exact_match": None,
            "converse_holds": None,
        }
        ok = row["staggered"] and excess <= delta + EXACT_MATCH_TOL and delta <= row["delta_bound"] + EXACT_MATCH_TOL
        if H in g.exact_lifts:
            try:
                D = exact_distortions_by_position(staggered, source, ch1, ch2, d1, d2)
            except StateSpaceError as e:
                log.error("code %d, H=%d: exact distortions out of reach (%s)", index, H, e)
                row["exact_match"] = False
            else:
                row["D1_staggered"], row["D2_staggered"] = D
                row["exact_match"] = bool(abs(D[0] - base_D[0]) <= EXACT_MATCH_TOL
                                          and abs(D[1] - base_D[1]) <= EXACT_MATCH_TOL)
            ok = ok and row["exact_match"]
        if H == 1:
            row["converse_holds"] = verify_code(staggered, source, ch1, ch2, tol=cfg.tol).holds
            ok = ok and row["converse_holds"]
        row["ok"] = ok
        rows.append(row)
    return rows


def run_transform_demo(cfg: ExperimentConfig) -> ExperimentResult:
    source = cfg.build_source()
    ch1, ch2 = cfg.build_channels()
    d1, d2 = cfg.build_distortions()
    children = split(make_rng(cfg.seed), cfg.codegen.count)
    parts = _map(
        lambda item: _transform_one(cfg, source, ch1, ch2, d1, d2, *item),
        list(enumerate(children)), cfg.workers, cfg.progress, "transform",
    )
    rows = [r for part in parts for r in part]
    failing = sorted({r["code"] for r in rows if not r["ok"]})
    exact_done = sum(r["exact_match"] is not None for r in rows)
    matched = sum(bool(r["exact_match"]) for r in rows)

    summary = [f"codes: {len(parts)}", f"exact distortion comparisons: {exact_done}, matching: {matched}"]
    for H in cfg.codegen.lifts:
        deltas = [r["delta"] for r in rows if r["H"] == H]
        summary.append(f"H={H}: max rate excess {max(deltas):.6f} (bound 2/(nH) <= {2.0 / H:.6f})")
    summary.append(f"codes failing: {len(failing)}" + (f" {failing}" if failing else ""))
    return ExperimentResult("transform-demo", rows, summary, not failing, plot_columns=["H", "delta", "excess"])


# -------------------------------
# kaspi-point / kaspi-sweep
# -------------------------------
def _lower_bound(source, d1, d2, D1: float, D2: float, tol: float) -> float:
    """
    Sum of the conditional rate-distortion functions: both sources known to
    both ends except the one being described.
    """
    return (conditional_rate_distortion(source, d1, D1, tol=tol)
            + conditional_rate_distortion(source.swapped(), d2, D2, tol=tol))


def _point_row(point: RegionPoint, D1: float, D2: float, q: int, seed: int, lower: float) -> Row:
    return {
        "D1_target": D1, "D2_target": D2, "q": q,
        "rho1": point.rho1, "rho2": point.rho2, "sum_rate": point.sum_rate,
        "D1": point.D1, "D2": point.D2, "round_rates": point.round_rates,
        "lower_bound": lower, "gap_to_lower": point.sum_rate - lower,
        "method": point.method, "seed": seed,
    }


def _kaspi_rows(cfg: ExperimentConfig, targets: List[Tuple[float, float]]) -> Tuple[List[Row], List[RegionPoint]]:
    source = cfg.build_source()
    d1, d2 = cfg.build_distortions()
    k = cfg.kaspi
    children = split(make_rng(cfg.seed), len(targets))

    rows: List[Row] = []
    points: List[RegionPoint] = []
    for (D1, D2), child in zip(tqdm(targets, desc="kaspi", disable=not cfg.progress), children):
        point = optimize_point(
            source, d1, d2, D1, D2, q=k.q, aux_sizes=k.aux_sizes, restarts=k.restarts,
            rng=child, workers=cfg.workers, max_sweeps=k.max_sweeps,
        )
        row = _point_row(point, D1, D2, k.q, cfg.seed, _lower_bound(source, d1, d2, D1, D2, cfg.tol))
        if k.grid:
            grid = grid_search(source, d1, d2, D1, D2, aux_sizes=k.grid_aux_sizes, resolution=k.grid_resolution)
            row.update({
                "grid_sum_rate": grid.sum_rate, "grid_rho1": grid.rho1, "grid_rho2": grid.rho2,
                "grid_single_point_rate": grid.single_point_rate, "grid_evaluated": grid.evaluated,
                "heuristic_minus_grid": point.sum_rate - grid.sum_rate,
            })
        rows.append(row)
        points.append(point)
    return rows, points


def _save_witness(point: RegionPoint, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        yaml.safe_dump(point.witness.to_dict(), f, sort_keys=False)
    return path


def run_kaspi_point(cfg: ExperimentConfig) -> ExperimentResult:
    rows, points = _kaspi_rows(cfg, [(cfg.kaspi.D1, cfg.kaspi.D2)])
    _save_witness(points[0], Path(cfg.output.out_dir) / "witness.yml")
    r = rows[0]
    summary = [
        f"method: {r['method']}",
        f"targets: D1 = {r['D1_target']:g}, D2 = {r['D2_target']:g}, q = {r['q']}",
        f"rates: rho1 = {r['rho1']:.6f}, rho2 = {r['rho2']:.6f} (sum {r['sum_rate']:.6f})",
        f"achieved: D1 = {r['D1']:.6f}, D2 = {r['D2']:.6f}",
        f"conditional rate-distortion lower bound: {r['lower_bound']:.6f}",
    ]
    if "grid_sum_rate" in r:
        summary.append(f"grid sum rate: {r['grid_sum_rate']:.6f}")
    ok = points[0].meets(cfg.kaspi.D1, cfg.kaspi.D2)
    return ExperimentResult("kaspi-point", rows, summary, ok)


def run_kaspi_sweep(cfg: ExperimentConfig) -> ExperimentResult:
    targets = [tuple(t) for t in cfg.kaspi.sweep] or [(cfg.kaspi.D1, cfg.kaspi.D2)]
    rows, points = _kaspi_rows(cfg, targets)
    below = [r for r in rows if r["gap_to_lower"] < -1e-6]
    summary = [f"{len(rows)} points at q = {cfg.kaspi.q}"]
    summary += [
        f"D=({r['D1_target']:g}, {r['D2_target']:g}): rho=({r['rho1']:.6f}, {r['rho2']:.6f})"
        + (f" grid {r['grid_sum_rate']:.6f}" if "grid_sum_rate" in r else "")
        for r in rows
    ]
    if below:
        # reported only: the optimiser is a heuristic, and this bound is a hard floor
        summary.append(f"warning: {len(below)} point(s) below the conditional rate-distortion bound")
    ok = all(p.meets(*t) for p, t in zip(points, targets))
    return ExperimentResult("kaspi-sweep", rows, summary, ok, plot_columns=["D1_target", "D2_target", "rho1", "rho2"])


# -------------------------------
# separation
# -------------------------------
def _phase_rows(result: SeparationResult, label: Dict[str, object]) -> List[Row]:
    return [
        {**label, "phase": p.phase, "channel": p.channel, "bits": p.bits, "uses": p.uses, "chunks": p.chunks,
         "trials": p.trials, "block_error_rate": p.block_error_rate, "phase_error_rate": p.phase_error_rate}
        for p in result.stats.phases
    ]


def run_separation(cfg: ExperimentConfig) -> ExperimentResult:
    source = cfg.build_source()
    ch1, ch2 = cfg.build_channels()
    d1, d2 = cfg.build_distortions()
    k, s = cfg.kaspi, cfg.separation
    point_rng, run_rng, margin_rng, n_rng = split(make_rng(cfg.seed), 4)

    point = optimize_point(source, d1, d2, k.D1, k.D2, q=k.q, aux_sizes=k.aux_sizes,
                           restarts=k.restarts, rng=point_rng, workers=cfg.workers, max_sweeps=k.max_sweeps)

    def simulate(n: int, margin: float, rng) -> Tuple[SeparationResult, object]:
        plan = build_plan(point, ch1, ch2, n, margin, quantizer=s.quantizer, chunk_bits=s.chunk_bits,
                          source=source, sub_block=s.sub_block, binning_slack=s.binning_slack,
                          cover_slack=s.cover_slack, tol=cfg.tol)
        return run(plan, source, ch1, ch2, s.trials, rng, d1, d2, workers=cfg.workers), plan

    result, plan = simulate(s.n, s.margin, run_rng)

    rows: List[Row] = []
    for t in range(result.trials):
        row: Row = {"trial": t, "D1": result.per_trial1[t], "D2": result.per_trial2[t]}
        for j in range(plan.r):
            row[f"phase{j + 1}_failed"] = bool(result.phase_failures[t, j])
        rows.append(row)

    tables: Dict[str, List[Row]] = {"phases": _phase_rows(result, {"n": s.n, "margin": s.margin})}
    for name, settings, rng in (
        ("margins", [(s.n, m) for m in s.compare_margins], margin_rng),
        ("blocklengths", [(n, s.margin) for n in s.compare_n], n_rng),
    ):
        if not settings:
            continue
        table: List[Row] = []
        for (n, m), child in zip(settings, split(rng, len(settings))):
            other, _ = simulate(n, m, child)
            for prow in _phase_rows(other, {"n": n, "margin": m}):
                table.append({**prow, "D1_hat": other.D1, "D2_hat": other.D2})
        tables[name] = table

    C1, C2 = plan.capacities
    budget = (
        point.rho1 * (1 + s.margin) / C1 if C1 > 0 else 0.0,
        point.rho2 * (1 + s.margin) / C2 if C2 > 0 else 0.0,
    )
    # rates the quantiser actually emits, the witness rates plus codebook overhead
    emitted = (sum(plan.message_bits[0::2]) / plan.n, sum(plan.message_bits[1::2]) / plan.n)
    emitted_budget = (
        emitted[0] * (1 + s.margin) / C1 if C1 > 0 else 0.0,
        emitted[1] * (1 + s.margin) / C2 if C2 > 0 else 0.0,
    )
    met = (result.D1 <= k.D1 + s.distortion_tolerance, result.D2 <= k.D2 + s.distortion_tolerance)
    ok = all(met)
    if not ok:
        log.warning("separation missed the targets (%.4f, %.4f) + %.4f: D_hat = (%.5f, %.5f)",
                    k.D1, k.D2, s.distortion_tolerance, result.D1, result.D2)
    summary = [
        f"witness ({point.method}): rho = ({point.rho1:.6f}, {point.rho2:.6f}), D = ({point.D1:.6f}, {point.D2:.6f})",
        f"plan: n = {plan.n}, z = {list(plan.z)}, quantizer = {plan.quantizer}, margin = {plan.margin:g}",
        f"capacities: C1 = {C1:.6f}, C2 = {C2:.6f}",
        f"quantiser output: ({emitted[0]:.4f}, {emitted[1]:.4f}) bits/symbol",
        f"channel uses per symbol: ({result.uses_per_symbol[0]:.4f}, {result.uses_per_symbol[1]:.4f}); "
        f"witness-rate budget ({budget[0]:.4f}, {budget[1]:.4f}), "
        f"quantiser-rate budget ({emitted_budget[0]:.4f}, {emitted_budget[1]:.4f})",
        f"achieved: D1 = {result.D1:.5f} +- {result.stderr1:.5f}, D2 = {result.D2:.5f} +- {result.stderr2:.5f} "
        f"over {result.trials} trials (targets {k.D1:g}, {k.D2:g} + {s.distortion_tolerance:g})",
        f"positions on fallback estimate: ({result.fallback_fraction[0]:.4f}, {result.fallback_fraction[1]:.4f})",
    ]
    if plan.quantizer == IDEAL:
        summary.append("ideal quantiser: genie-aided reference, the payload carries no source data")
    summary += [
        f"phase {p.phase} over C{p.channel}: {p.bits} bits in {p.uses} uses, "
        f"block error rate {p.block_error_rate:.4f}"
        for p in result.stats.phases
    ]
    tables["plan"] = [{
        "n": plan.n, "margin": plan.margin, "quantizer": plan.quantizer, "z": plan.z,
        "message_bits": plan.message_bits, "C1": C1, "C2": C2,
        "uses_per_symbol1": result.uses_per_symbol[0], "uses_per_symbol2": result.uses_per_symbol[1],
        "budget1": budget[0], "budget2": budget[1],
        "emitted_rate1": emitted[0], "emitted_rate2": emitted[1],
        "emitted_budget1": emitted_budget[0], "emitted_budget2": emitted_budget[1],
        "rho1": point.rho1, "rho2": point.rho2,
        "witness_D1": point.D1, "witness_D2": point.D2, "D1_hat": result.D1, "D2_hat": result.D2,
        "stderr1": result.stderr1, "stderr2": result.stderr2, "targets_met": ok,
    }]
    return ExperimentResult("separation", rows, summary, ok, tables)


EXPERIMENTS: Dict[str, Callable[[ExperimentConfig], ExperimentResult]] = {
    "capacity": run_capacity,
    "rd": run_rd,
    "converse-sweep": run_converse_sweep,
    "kaspi-point": run_kaspi_point,
    "kaspi-sweep": run_kaspi_sweep,
    "separation": run_separation,
    "transform-demo": run_transform_demo,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    log.info("running %s (seed=%s, config %s)", cfg.experiment, cfg.seed, cfg.config_hash()[:12])
    return EXPERIMENTS[cfg.experiment](cfg)
