"""
Visualizations Module
Interactive Plotly charts for training curves, cosine gaps, ablations and estimator risk
"""

from typing import Dict, List, Optional

import pandas as pd
import plotly.graph_objects as go

import config

LAYOUT_DEFAULTS = dict(paper_bgcolor="white", plot_bgcolor="white",
                       margin=dict(l=10, r=10, t=30, b=40))


def _empty(message: str) -> go.Figure:
    fig = go.Figure()
    fig.update_layout(title=message, height=350, **LAYOUT_DEFAULTS)
    return fig


def create_loss_curves(curves: pd.DataFrame, terms: Optional[List[str]] = None) -> go.Figure:
    """
    Per-epoch mean losses

    Args:
        curves: curves.csv frame (epoch, l_sure, l_ins, l_clu, total, ...)
        terms: Columns to draw; defaults to every loss column present
    """
    if curves is None or curves.empty:
        return _empty("No training curves")
    terms = terms or [c for c in ("l_sure", "l_ins", "l_clu", "total") if c in curves.columns]
    fig = go.Figure()
    for term in terms:
        fig.add_trace(go.Scatter(
            x=curves["epoch"], y=curves[term], mode="lines", name=term,
            line=dict(color=config.LOSS_COLORS.get(term, "#2196F3"),
                      dash="dot" if term == "total" else "solid"),
            hovertemplate=f"Epoch %{{x}}<br>{term}: %{{y:.4f}}<extra></extra>",
        ))
    fig.update_layout(xaxis_title="Epoch", yaxis_title="Loss", height=400,
                      legend=dict(orientation="h", y=1.1), **LAYOUT_DEFAULTS)
    return fig


def create_metric_curves(curves: pd.DataFrame) -> go.Figure:
    """NMI, ARI and cosine gap at the evaluation epochs"""
    if curves is None or curves.empty:
        return _empty("No evaluations")
    metrics = [m for m in ("nmi", "ari", "cos_gap") if m in curves.columns]
    evaluated = curves.dropna(subset=metrics, how="all") if metrics else curves.iloc[0:0]
    if evaluated.empty:
        return _empty("No evaluations")
    fig = go.Figure()
    for metric in metrics:
        fig.add_trace(go.Scatter(
            x=evaluated["epoch"], y=evaluated[metric], mode="lines+markers", name=metric.upper(),
            line=dict(color=config.LOSS_COLORS[metric]),
        ))
    fig.update_layout(xaxis_title="Epoch", yaxis_title="Score", height=400,
                      legend=dict(orientation="h", y=1.1), **LAYOUT_DEFAULTS)
    return fig


def create_cosine_gap_chart(evals: List[Dict]) -> go.Figure:
    """Mean positive vs mean negative cosine per evaluation (report.json "evals")"""
    if not evals:
        return _empty("No evaluations")
    epochs = [e["epoch"] for e in evals]
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=epochs, y=[e["cosine"]["mean_pos"] for e in evals],
                             mode="lines+markers", name="positive pairs",
                             line=dict(color=config.LOSS_COLORS["l_clu"])))
    fig.add_trace(go.Scatter(x=epochs, y=[e["cosine"]["mean_neg"] for e in evals],
                             mode="lines+markers", name="negative pairs",
                             line=dict(color=config.LOSS_COLORS["l_ins"]),
                             fill="tonexty", fillcolor="rgba(0, 160, 220, 0.12)"))
    fig.update_layout(xaxis_title="Epoch", yaxis_title="Mean cosine similarity",
                      yaxis=dict(range=[-1.05, 1.05]), height=400,
                      legend=dict(orientation="h", y=1.1), **LAYOUT_DEFAULTS)
    return fig


def create_ablation_bar(ablation: pd.DataFrame, metric: str = "nmi") -> go.Figure:
    """
    Mean score per loss variant with the seed standard deviation as error bars
    """
    if ablation is None or ablation.empty or metric not in ablation.columns:
        return _empty("No ablation results")
    grouped = ablation.groupby("variant", sort=False)[metric].agg(["mean", "std"]).reset_index()
    grouped["std"] = grouped["std"].fillna(0.0)
    fig = go.Figure(go.Bar(
        x=grouped["variant"], y=grouped["mean"],
        error_y=dict(type="data", array=grouped["std"], visible=True),
        marker_color=config.LOSS_COLORS.get(metric, "#2196F3"),
        text=grouped["mean"], texttemplate="%{text:.3f}", textposition="outside",
    ))
    fig.update_layout(xaxis_title="Loss terms", yaxis_title=metric.upper(), height=400,
                      **LAYOUT_DEFAULTS)
    return fig


def create_robustness_chart(robustness: pd.DataFrame) -> go.Figure:
    """Median NMI against the fraction of cells removed"""
    if robustness is None or robustness.empty:
        return _empty("No robustness results")
    med = robustness.groupby("rate")["nmi"].median().reset_index().sort_values("rate")
    fig = go.Figure(go.Scatter(x=med["rate"] * 100, y=med["nmi"], mode="lines+markers",
                               line=dict(color=config.LOSS_COLORS["nmi"])))
    fig.update_layout(xaxis_title="Cells removed (%)", yaxis_title="Median NMI", height=400,
                      **LAYOUT_DEFAULTS)
    return fig


def create_risk_bench_bar(table: pd.DataFrame, mode: str = "hierarchical") -> go.Figure:
    """
    Empirical risk per estimator, grouped by grid point

    Args:
        table: Output of utils.bench_table
        mode: "hierarchical" or "fixed_theta"
    """
    if table is None or table.empty:
        return _empty("No estimator bench results")
    rows = table[table["mode"] == mode].copy()
    if rows.empty:
        return _empty(f"No {mode} grid points")
    param = "tau" if mode == "hierarchical" else "theta_norm"
    rows["point"] = [f"P={p}, σ={s:g}, {param}={v:g}" for p, s, v in zip(rows["P"], rows["sigma"], rows[param])]
    fig = go.Figure()
    for name, part in rows.groupby("estimator", sort=False):
        fig.add_trace(go.Bar(
            x=part["point"], y=part["empirical_mse"], name=name,
            error_y=dict(type="data", array=part["ci95"], visible=True),
            marker_color=config.ESTIMATOR_COLORS.get(name, "#607D8B"),
        ))
    fig.update_layout(barmode="group", yaxis_title="Mean squared error", yaxis_type="log",
                      height=450, legend=dict(orientation="h", y=1.1), **LAYOUT_DEFAULTS)
    return fig


def create_cluster_sizes(assignments: pd.DataFrame, column: str = "cluster") -> go.Figure:
    """Cells per predicted cluster, stacked by true label when present"""
    if assignments is None or assignments.empty or column not in assignments.columns:
        return _empty("No assignments")
    if "label" not in assignments.columns:
        counts = assignments[column].value_counts().sort_index()
        fig = go.Figure(go.Bar(x=counts.index.astype(str), y=counts.values,
                               marker_color=config.LOSS_COLORS["cos_gap"]))
    else:
        table = pd.crosstab(assignments[column], assignments["label"])
        fig = go.Figure([go.Bar(x=table.index.astype(str), y=table[c], name=f"label {c}")
                         for c in table.columns])
        fig.update_layout(barmode="stack")
    fig.update_layout(xaxis_title="Predicted cluster", yaxis_title="Cells", height=400,
                      **LAYOUT_DEFAULTS)
    return fig
