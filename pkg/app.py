"""
Shrinkage Contrastive Clustering Dashboard
Browse the outputs of a run directory: training curves, cosine gaps,
cluster assignments, ablations, robustness and estimator risk
"""
import os

import streamlit as st

import config
from modules import utils, visualizations
from modules.errors import ShrinkCLError

st.set_page_config(page_title=config.PAGE_TITLE, page_icon=config.PAGE_ICON, layout=config.LAYOUT)

st.markdown(f"""
    <div style="display: flex; align-items: center; gap: 15px; margin-bottom: 20px;">
        <span style="font-size: 32px;">{config.PAGE_ICON}</span>
        <span style="font-size: 28px; font-weight: 800; color: #0f3d3e;">{config.PAGE_TITLE}</span>
    </div>
""", unsafe_allow_html=True)

# ============ Sidebar ============
with st.sidebar:
    st.markdown("### 📁 Run directory")
    run_dir = st.text_input("Path", value=os.environ.get(config.RUN_DIR_ENV_VAR, "run"), key="run_dir")
    st.caption("Written by `python cli.py train --out <dir>` (and ablate / robustness / bench-estimators)")


@st.cache_data(show_spinner=False)
def _load(path: str):
    return utils.load_run(path)


if not os.path.isdir(run_dir):
    st.info(f"Directory `{run_dir}` does not exist yet. Train a model first, then point the sidebar here.")
    st.stop()

try:
    run = _load(run_dir)
except ShrinkCLError as err:
    st.error(f"❌ Could not read the run: {err}")
    st.stop()

if not run:
    st.warning(f"No run outputs found in `{run_dir}`.")
    st.stop()

# ============ Summary ============
report = run.get("report")
if report:
    scores = utils.final_scores(report)
    best = report.get("best", {})
    col1, col2, col3, col4 = st.columns(4)
    col1.metric("🎯 NMI", utils.format_score(scores.get("nmi")))
    col2.metric("🧩 ARI", utils.format_score(scores.get("ari")))
    col3.metric("📐 Cosine gap", utils.format_score(scores.get("cos_gap")))
    col4.metric("🏁 Best epoch", f"{best.get('epoch', 0)}",
                f"SURE drift {utils.format_score(best.get('sure_drift'), 6)}", delta_color="off")
    st.caption(f"{report['n_cells']:,} cells × {report['n_genes']:,} genes · "
               f"K = {report['config']['n_clusters']} · "
               f"losses {'+'.join(report['config']['loss_terms'])} · "
               f"final rule {report['config']['final_rule']}")
    st.markdown("---")

tabs = st.tabs(["📉 Training", "🧬 Clusters", "🧪 Ablation", "🛡️ Robustness", "📊 Estimators"])

with tabs[0]:
    curves = run.get("curves")
    if curves is None:
        st.info("No curves.csv in this run.")
    else:
        st.plotly_chart(visualizations.create_loss_curves(curves), use_container_width=True)
        st.plotly_chart(visualizations.create_metric_curves(curves), use_container_width=True)
    if report:
        st.plotly_chart(visualizations.create_cosine_gap_chart(report.get("evals", [])),
                        use_container_width=True)
        summary = report.get("cos_gap_summary", {})
        st.caption(f"Cosine gap across evaluations: mean {utils.format_score(summary.get('mean'))}, "
                   f"variance {utils.format_score(summary.get('var'), 6)}")

with tabs[1]:
    assignments = run.get("assignments")
    if assignments is None:
        st.info("No assignments.csv in this run.")
    else:
        column = st.radio("Assignment", ["cluster", "cluster_argmax", "cluster_kmeans"],
                          horizontal=True, key="assignment_column")
        st.plotly_chart(visualizations.create_cluster_sizes(assignments, column), use_container_width=True)
        st.dataframe(assignments, use_container_width=True, hide_index=True)

with tabs[2]:
    ablation = run.get("ablation")
    if ablation is None:
        st.info("No ablation.csv in this run.")
    else:
        metric = st.radio("Metric", ["nmi", "ari", "cos_gap_mean"], horizontal=True, key="ablation_metric")
        st.plotly_chart(visualizations.create_ablation_bar(ablation, metric), use_container_width=True)
        st.dataframe(ablation, use_container_width=True, hide_index=True)
        paired = run.get("ablation_summary", {}).get("paired_vs_full")
        if paired:
            with st.expander("Paired t-tests against the full loss"):
                st.json(paired)

with tabs[3]:
    robustness = run.get("robustness")
    if robustness is None:
        st.info("No robustness.csv in this run.")
    else:
        st.plotly_chart(visualizations.create_robustness_chart(robustness), use_container_width=True)
        st.dataframe(robustness, use_container_width=True, hide_index=True)
    if "noise_toggle" in run:
        with st.expander("Noise on/off comparison", expanded=True):
            for name, entry in run["noise_toggle"].items():
                col1, col2 = st.columns(2)
                col1.metric(f"🔊 {name}: NMI with noise", utils.format_score(entry.get("with")),
                            utils.format_delta(entry.get("difference")))
                col2.metric(f"🔇 {name}: NMI without noise", utils.format_score(entry.get("without")))
            st.json(run["noise_toggle"])

with tabs[4]:
    bench = run.get("bench")
    if bench is None:
        st.info("No bench.json in this run. Run `python cli.py bench-estimators --out <dir>/bench.json`.")
        bench_df = None
    else:
        bench_df = utils.bench_table(bench)
        mode = st.radio("Mode", ["hierarchical", "fixed_theta"], horizontal=True, key="bench_mode")
        st.plotly_chart(visualizations.create_risk_bench_bar(bench_df, mode), use_container_width=True)
        st.dataframe(bench_df, use_container_width=True, hide_index=True)

# ============ Export ============
st.markdown("---")
excel = utils.create_excel_export({
    "curves": run.get("curves"),
    "assignments": run.get("assignments"),
    "ablation": run.get("ablation"),
    "robustness": run.get("robustness"),
    "bench": bench_df,
})
st.download_button("📥 Download Excel", data=excel, file_name=f"{config.PROJECT_NAME}_run.xlsx",
                   mime="application/vnd.openxmlformats-officedocument.spreadsheetml.sheet")
