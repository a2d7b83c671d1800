import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from src.cli.config import ExperimentConfig, load_experiment
from src.cli.experiments import run_experiment
from src.cli.reports import ExperimentResult, emit
from src.source.source import entropy_bits
from src.utils.config_loader import get_project_root
from src.utils.errors import TwoWayError
from src.utils.logging_setup import setup_logging

log = logging.getLogger("scripts.reproduce_all")

project_root = get_project_root()
ACCEPTANCE_DIR = project_root / "config" / "acceptance"

# seconds; per criterion
TIME_LIMITS = {"c1_capacity": 4.0, "c3_converse": 600.0, "c7_separation": 600.0}


def _h(p: float) -> float:
    return entropy_bits([p, 1.0 - p])


@dataclass
class Verdict:
    passed: bool
    detail: str


# -------------------------------
# Criterion predicates
# -------------------------------
def check_capacity(result: ExperimentResult) -> Verdict:
    worst = max(r["error"] for r in result.rows)
    return Verdict(worst <= 1e-6, f"max |C - (1 - h(p))| = {worst:.2e}")


def check_rd(result: ExperimentResult) -> Verdict:
    worst = max(r["error"] for r in result.rows)
    return Verdict(worst <= 1e-6, f"max |R(D) - (1 - h(D))| = {worst:.2e}")


def check_converse(result: ExperimentResult) -> Verdict:
    codes = len({r["code"] for r in result.rows})
    bad = [r for r in result.rows if not r["holds"]]
    return Verdict(result.ok and codes >= 500 and not bad, f"{codes} codes, {len(result.rows)} checks, {len(bad)} violated")


def check_transform(result: ExperimentResult) -> Verdict:
    rows = result.rows
    scaled: Dict[int, List[float]] = {}
    for r in rows:
        scaled.setdefault(r["code"], []).append(r["delta"] * r["H"])
    codes = set(scaled)
    # delta(H) * H is the same for every lift of a code
    scaling = all(max(v) - min(v) <= 1e-12 for v in scaled.values())
    at16 = [r for r in rows if r["H"] == 16]
    within = all(r["excess"] <= 2.0 / (r["n"] * 16) + 1e-12 for r in at16)
    # every H = 16 lift must have been enumerated and must match its base code
    exact16 = bool(at16) and all(r["exact_match"] is True for r in at16)
    matched = sum(r["exact_match"] is True for r in rows)
    return Verdict(
        result.ok and scaling and within and exact16 and len(codes) >= 100,
        f"{len(codes)} codes, {matched} exact distortion matches "
        f"({sum(r['exact_match'] is True for r in at16)}/{len(at16)} at H=16), delta ~ 1/H: {scaling}",
    )


def check_oracle(result: ExperimentResult) -> Verdict:
    oracle = result.tables.get("oracle", [])
    inside = sum(bool(r["within"]) for r in oracle)
    return Verdict(len(oracle) >= 10 and inside == len(oracle), f"{inside}/{len(oracle)} codes within 3 stderr")


def check_kaspi(result: ExperimentResult) -> Verdict:
    worst_rd = max(abs(r["rho1"] - (1.0 - _h(r["D1_target"]))) for r in result.rows)
    worst_grid = max(abs(r["sum_rate"] - r["grid_sum_rate"]) for r in result.rows)
    return Verdict(
        result.ok and worst_rd <= 2e-3 and worst_grid <= 5e-3,
        f"max |rho1 - R(D1)| = {worst_rd:.2e}, max |heuristic - grid| = {worst_grid:.2e}",
    )


def check_separation(result: ExperimentResult) -> Verdict:
    plan = result.tables["plan"][0]
    z = [int(v) for v in plan["z"]]
    n = plan["n"]
    # ceil() costs at most one use per phase
    slack = (len(z[0::2]) / n, len(z[1::2]) / n)
    honest = plan["quantizer"] == "codebook"
    uses_ok = (plan["uses_per_symbol1"] <= plan["emitted_budget1"] + slack[0] + 1e-12
               and plan["uses_per_symbol2"] <= plan["emitted_budget2"] + slack[1] + 1e-12)
    D_ok = plan["D1_hat"] <= 0.17 and plan["D2_hat"] <= 0.17
    return Verdict(
        honest and D_ok and uses_ok,
        f"{plan['quantizer']} quantiser, D_hat = ({plan['D1_hat']:.4f}, {plan['D2_hat']:.4f}), uses/symbol = "
        f"({plan['uses_per_symbol1']:.4f}, {plan['uses_per_symbol2']:.4f}) vs quantiser-rate budget "
        f"({plan['emitted_budget1']:.4f}, {plan['emitted_budget2']:.4f}), witness-rate budget "
        f"({plan['budget1']:.4f}, {plan['budget2']:.4f})",
    )


CRITERIA: List[Tuple[str, str, Callable[[ExperimentResult], Verdict]]] = [
    ("c1_capacity", "capacity oracle", check_capacity),
    ("c2_rd", "R(D) oracle", check_rd),
    ("c3_converse", "converse sweep", check_converse),
    ("c4_transform", "transform suite", check_transform),
    ("c5_oracle", "Monte-Carlo vs exact", check_oracle),
    ("c6_kaspi", "two-way solver reduction", check_kaspi),
    ("c7_separation", "separation end to end", check_separation),
]


# -------------------------------
# Runner
# -------------------------------
def _run(name: str, out_dir: Path, workers: int) -> Tuple[ExperimentConfig, ExperimentResult, float]:
    cfg = load_experiment(ACCEPTANCE_DIR / f"{name}.yml", {"out_dir": out_dir / name, "workers": workers})
    start = time.perf_counter()
    result = run_experiment(cfg)
    elapsed = time.perf_counter() - start
    emit(result, cfg)
    return cfg, result, elapsed


def _csv_files(root: Path) -> Dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def compare_runs(first: Path, second: Path) -> Verdict:
    """
    Byte-for-byte comparison of every CSV file under two run directories.
    """
    a, b = _csv_files(first), _csv_files(second)
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    return Verdict(
        bool(a) and not differing,
        f"{len(a)} CSV files compared, {len(differing)} differ" + (f": {differing}" if differing else ""),
    )


def reproduce_all(out_dir: Path, workers: int = 1, skip_rerun: bool = False) -> List[Dict[str, object]]:
    rows: List[Dict[str, object]] = []
    first = out_dir / "run1"
    for number, (name, title, check) in enumerate(CRITERIA, start=1):
        try:
            _, result, elapsed = _run(name, first, workers)
            verdict = check(result)
        except TwoWayError as e:
            log.exception("%s failed to run", name)
            verdict, elapsed = Verdict(False, f"error: {type(e).__name__}: {e}"), 0.0
        limit = TIME_LIMITS.get(name)
        if limit is not None and elapsed > limit:
            verdict = Verdict(False, f"{verdict.detail}; over the {limit:g} s time limit")
        log.info("criterion %d (%s): %s in %.1f s", number, name, "pass" if verdict.passed else "FAIL", elapsed)
        rows.append({"criterion": number, "name": title, "passed": verdict.passed, "detail": verdict.detail})

    if skip_rerun:
        rows.append({"criterion": len(CRITERIA) + 1, "name": "determinism", "passed": False, "detail": "skipped"})
        return rows

    second = out_dir / "run2"
    for name, _, _ in CRITERIA:
        try:
            _run(name, second, workers)
        except TwoWayError:
            log.exception("%s failed on the rerun", name)
    verdict = compare_runs(first, second)
    rows.append({
        "criterion": len(CRITERIA) + 1, "name": "determinism", "passed": verdict.passed, "detail": verdict.detail,
    })
    return rows


def write_summary(rows: List[Dict[str, object]], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "summary.csv").open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["criterion", "name", "passed", "detail"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)

    width = max(len(str(r["name"])) for r in rows)
    lines = [f"{r['criterion']:>2}  {str(r['name']):<{width}}  {'PASS' if r['passed'] else 'FAIL'}  {r['detail']}" for r in rows]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Run every acceptance criterion and summarise.")
    parser.add_argument("--out", type=str, default=str(project_root / "out" / "reproduce"))
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--skip-rerun", action="store_true", help="skip the determinism rerun")
    parser.add_argument("--log-level", type=str, default="INFO")
    args = parser.parse_args(argv)
    setup_logging(args.log_level)

    out_dir = Path(args.out)
    rows = reproduce_all(out_dir, args.workers, args.skip_rerun)
    write_summary(rows, out_dir)
    return 0 if all(r["passed"] for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
