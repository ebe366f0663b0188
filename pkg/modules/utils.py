"""
Utilities Module
Formatting, run-directory loading and export helpers for the dashboard
"""

import json
from io import BytesIO
from pathlib import Path
from typing import Dict, Optional

import pandas as pd

import config
from modules.errors import DataFormatError


def format_score(value: Optional[float], digits: int = 4) -> str:
    """
    Format a metric value, showing missing values as a dash

    Args:
        value (float): Score or None/NaN
        digits (int): Decimal places

    Returns:
        str: Formatted value
    """
    if value is None or pd.isna(value):
        return "–"
    return f"{value:.{digits}f}"


def format_delta(value: Optional[float], digits: int = 4) -> str:
    if value is None or pd.isna(value):
        return "–"
    return f"{value:+.{digits}f}"


def _read_json(path: Path) -> Dict:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DataFormatError(f"{path.name}: invalid JSON ({err})") from err


def load_run(run_dir) -> Dict:
    """
    Collect whatever outputs a run directory holds

    Files that were not produced are simply absent from the result.

    Args:
        run_dir: Directory written by the train / ablate / robustness commands

    Returns:
        dict: Keys among report, curves, assignments, ablation,
        ablation_summary, robustness, noise_toggle, bench
    """
    run_dir = Path(run_dir)
    found = {}
    for key in ("report", "ablation_summary", "noise_toggle", "bench"):
        path = run_dir / config.OUTPUT_FILES[key]
        if path.is_file():
            found[key] = _read_json(path)
    for key in ("curves", "assignments", "ablation", "robustness"):
        path = run_dir / config.OUTPUT_FILES[key]
        if path.is_file():
            found[key] = pd.read_csv(path)
    return found


def final_scores(report: Dict) -> Dict[str, float]:
    """ARI/NMI of the final evaluation under the configured assignment rule"""
    final = report.get("final") or {}
    rule = report.get("config", {}).get("final_rule", "argmax")
    scores = dict(final.get(rule, {}))
    if "cosine" in final:
        scores["cos_gap"] = final["cosine"]["gap"]
    return scores


def bench_table(bench: Dict) -> pd.DataFrame:
    """Flatten a bench-estimators report to one row per (grid point, estimator)"""
    rows = []
    for point in bench.get("grid", []):
        c = point["config"]
        for name, est in point["estimators"].items():
            rows.append({
                "mode": c["mode"], "P": c["dim"], "sigma": c["sigma"],
                "tau": c["tau"], "theta_norm": c["theta_norm"], "estimator": name,
                "empirical_mse": est["empirical_mse"], "ci95": est["ci95"],
                "closed_form": est.get("closed_form"),
            })
    return pd.DataFrame(rows)


def create_excel_export(frames: Dict[str, pd.DataFrame]) -> BytesIO:
    """
    Write the available tables to an in-memory workbook, one sheet each

    Args:
        frames (dict): Keys of config.EXCEL_SHEET_NAMES → DataFrame

    Returns:
        BytesIO: Excel file in memory
    """
    output = BytesIO()
    with pd.ExcelWriter(output, engine="openpyxl") as writer:
        for key, frame in frames.items():
            if frame is None or frame.empty:
                continue
            sheet = config.EXCEL_SHEET_NAMES.get(key, key)[:31]
            frame.to_excel(writer, sheet_name=sheet, index=False)
        if not writer.sheets:
            pd.DataFrame({"note": ["no data"]}).to_excel(writer, sheet_name="Empty", index=False)
    output.seek(0)
    return output
