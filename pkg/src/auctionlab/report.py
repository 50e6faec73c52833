"""Render analysis tables to figures.

Each ``<table>.csv`` produced by ``analyze`` gets a matching ``<table>.png``
next to the delimited output.  Empty or missing tables are skipped.  Only a
handful of assets are drawn per curve plot to keep the figures readable.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

MAX_CURVES = 6


def _sample_assets(df: pd.DataFrame) -> list:
    assets = sorted(df["asset"].unique())
    return assets[:MAX_CURVES]


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_table1_ratios(df, path):
    piv = df[df.statistic == "typical_fraction"].pivot_table(
        index="exchange", columns="side", values="value")
    fig, ax = plt.subplots(figsize=(6, 4))
    piv.plot.bar(ax=ax, rot=0)
    ax.set_ylabel("typical auction fraction of daily volume")
    _save(fig, path)


def render_fig3_monthly(df, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, side in zip(axes, ("open", "close")):
        sub = df[df.side == side]
        for exch, grp in sub.groupby("exchange"):
            grp = grp.sort_values("month")
            ax.plot(grp["month"], grp["value"], marker="o", ms=3, label=exch)
        ax.set_title(f"{side} auction")
        ax.set_ylabel("monthly median volume ratio")
        ax.tick_params(axis="x", rotation=60, labelsize=6)
        ax.legend(fontsize=7)
    _save(fig, path)


def _curve_panel(df, stat, ylabel, path, logy=False):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, side in zip(axes, ("open", "close")):
        sub = df[(df.side == side) & (df.statistic == stat) & (df["slice"] >= 0)]
        for asset in _sample_assets(sub) if len(sub) else []:
            grp = sub[sub.asset == asset].sort_values("slice")
            ax.plot(grp["slice"], grp["value"], lw=1, label=asset)
        ax.set_title(f"{side} auction")
        ax.set_xlabel("minute")
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if len(sub):
            ax.legend(fontsize=6)
    _save(fig, path)


def render_fig4_activity(df, path):
    _curve_panel(df, "mean_update_fraction", "cumulative update fraction", path)


def render_fig5_fraction(df, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, stat in zip(axes, ("mean_fraction", "median_fraction")):
        sub = df[(df.statistic == stat) & (df["slice"] >= 0)]
        for asset in _sample_assets(sub) if len(sub) else []:
            grp = sub[sub.asset == asset].sort_values("slice")
            for side, g in grp.groupby("side"):
                ax.plot(g["slice"], g["value"], lw=1, label=f"{asset} {side}")
        ax.set_title(stat.replace("_", " "))
        ax.set_xlabel("minute")
        ax.set_ylabel("matched / final volume")
        if len(sub):
            ax.legend(fontsize=6)
    _save(fig, path)


def render_fig6_hurst(df, path):
    slices = df[(df.statistic == "median_dispersion") & (df["slice"] >= 0)]
    fits = df[df.statistic == "hurst"]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    if len(slices):
        # scatter the asset with the most supported slices, plus its fit
        counts = slices.groupby("asset")["slice"].count()
        best = counts.idxmax()
        sub = slices[slices.asset == best].sort_values("slice")
        tau = sub["slice"].to_numpy() + 0.5
        axes[0].loglog(tau, sub["value"], "o", ms=3, label=f"{best}")
        rows = df[(df.asset == best) & (df.statistic == "hurst_amplitude")]
        h_rows = df[(df.asset == best) & (df.statistic == "hurst")]
        if len(rows) and len(h_rows):
            a, h = float(rows["value"].iloc[0]), float(h_rows["value"].iloc[0])
            axes[0].loglog(tau, a * tau ** (2 * h), "-",
                           label=f"fit H={h:.2f}")
        axes[0].set_xlabel("minutes to auction")
        axes[0].set_ylabel("median normalized squared distance")
        axes[0].legend(fontsize=7)
    if len(fits):
        axes[1].hist(fits["value"], bins=20)
        axes[1].axvline(0.5, color="k", ls="--", lw=1)
        axes[1].set_xlabel("fitted H")
        axes[1].set_ylabel("assets")
    _save(fig, path)


def render_fig7_reduction(df, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    sub = df[(df.statistic == "reduction_prob") & (df["slice"] >= 0)]
    for asset in _sample_assets(sub) if len(sub) else []:
        for side, grp in sub[sub.asset == asset].groupby("side"):
            grp = grp.sort_values("slice")
            axes[0].plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
    axes[0].axhline(0.5, color="k", ls="--", lw=1)
    axes[0].set_xlabel("minute")
    axes[0].set_ylabel("P[event reduces imbalance]")
    if len(sub):
        axes[0].legend(fontsize=6)
    overall = df[df.statistic == "reduction_prob_day_avg"]
    if len(overall):
        axes[1].hist(overall["value"], bins=20)
        axes[1].axvline(0.5, color="k", ls="--", lw=1)
        axes[1].set_xlabel("day-averaged probability")
        axes[1].set_ylabel("assets")
    _save(fig, path)


def _response_panel(df, path):
    curves = sorted(df["curve"].unique()) if len(df) else []
    conds = sorted(df["condition"].unique()) if len(df) else []
    ncol = max(1, len(curves))
    nrow = max(1, len(conds))
    fig, axes = plt.subplots(nrow, ncol, figsize=(5 * ncol, 3.2 * nrow),
                             squeeze=False)
    supported = df[~df.low_support] if len(df) else df
    for i, cond in enumerate(conds or ["-"]):
        for j, curve in enumerate(curves or ["-"]):
            ax = axes[i][j]
            sub = supported[(supported.curve == curve) & (supported.condition == cond)] \
                if len(supported) else supported
            if sub is not None and len(sub):
                for (asset, side), grp in sub.groupby(["asset", "side"]):
                    if asset not in _sample_assets(sub):
                        continue
                    grp = grp.sort_values("slice")
                    ax.errorbar(grp["slice"], grp["median"], yerr=grp["dispersion"],
                                lw=1, elinewidth=0.5, capsize=2,
                                label=f"{asset} {side}")
                ax.legend(fontsize=6)
            ax.axhline(0.0, color="k", ls="--", lw=0.8)
            ax.set_title(f"{curve} / {cond}", fontsize=9)
            ax.set_xlabel("minute")
            ax.set_ylabel("median response")
    _save(fig, path)


def render_fig8_response(df, path):
    _response_panel(df, path)


def render_fig9_conditional(df, path):
    _response_panel(df, path)


def render_fig10_spread(df, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    sub = df[(df.statistic == "time_in_spread") & (df["slice"] >= 0)]
    for asset in _sample_assets(sub) if len(sub) else []:
        for side, grp in sub[sub.asset == asset].groupby("side"):
            grp = grp.sort_values("slice")
            axes[0].plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
    axes[0].set_xlabel("minute")
    axes[0].set_ylabel("P[bid <= indicative <= ask]")
    if len(sub):
        axes[0].legend(fontsize=6)
    dm = df[(df.statistic == "delta_m_median") & (df["slice"] >= 0)]
    for asset in _sample_assets(dm) if len(dm) else []:
        for side, grp in dm[dm.asset == asset].groupby("side"):
            grp = grp.sort_values("slice")
            axes[1].plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
    axes[1].set_xlabel("minute")
    axes[1].set_ylabel("median |indicative - mid| / mid")
    _save(fig, path)


def render_fig10_spread_rcdf(df, path):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for (asset, side), grp in df.groupby(["asset", "side"]):
        if asset not in _sample_assets(df):
            continue
        grp = grp.sort_values("delta_m")
        pos = grp[(grp["delta_m"] > 0) & (grp["p_greater"] > 0)]
        ax.loglog(pos["delta_m"], pos["p_greater"], lw=1, label=f"{asset} {side}")
    ax.set_xlabel("relative mid distance")
    ax.set_ylabel("P[greater]")
    if len(df):
        ax.legend(fontsize=6)
    _save(fig, path)


def render_fig11_ds(df, path):
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, stat in zip(axes, ("delta_s_mean", "delta_s_median")):
        sub = df[(df.statistic == stat) & (df["slice"] >= 0)]
        for asset in _sample_assets(sub) if len(sub) else []:
            for side, grp in sub[sub.asset == asset].groupby("side"):
                grp = grp.sort_values("slice")
                ax.plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
        ax.set_title(stat.replace("_", " "))
        ax.set_xlabel("minute")
        ax.set_ylabel("|indicative - mid| in spreads")
        if len(sub):
            ax.legend(fontsize=6)
    _save(fig, path)


def render_fig12_reversion(df, path):
    stats = ("reversion_prob", "reversion_prob_in", "reversion_prob_out",
             "overshoot_prob")
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    for ax, stat in zip(axes.ravel(), stats):
        sub = df[(df.statistic == stat) & (df["slice"] >= 0)]
        for asset in _sample_assets(sub) if len(sub) else []:
            for side, grp in sub[sub.asset == asset].groupby("side"):
                grp = grp.sort_values("slice")
                ax.plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
        ax.axhline(0.5, color="k", ls="--", lw=0.8)
        ax.set_title(stat)
        ax.set_xlabel("minute")
        if len(sub):
            ax.legend(fontsize=6)
    _save(fig, path)


def render_fig13_weightedmid(df, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    sub = df[(df.statistic == "wmid_pref") & (df["slice"] >= 0)]
    for asset in _sample_assets(sub) if len(sub) else []:
        for side, grp in sub[sub.asset == asset].groupby("side"):
            grp = grp.sort_values("slice")
            ax.plot(grp["slice"], grp["value"], lw=1, label=f"{asset} {side}")
    ax.axhline(0.5, color="k", ls="--", lw=0.8)
    ax.set_xlabel("minute")
    ax.set_ylabel("P[weighted mid closer]")
    if len(sub):
        ax.legend(fontsize=6)
    _save(fig, path)


def render_fig1_fig2_tails(df, path):
    stats = ("p_heavy_vs_exponential", "p_pl_vs_lognormal",
             "p_pl_vs_exponential", "p_pl_vs_truncated")
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    for ax, stat in zip(axes.ravel(), stats):
        sub = df[df.statistic == stat]
        if len(sub):
            ax.hist(sub["value"], bins=np.linspace(0, 1, 21))
        ax.set_title(stat)
        ax.set_xlabel("one-sided p (small favors heavy tail)")
        ax.set_ylabel("auction days")
    _save(fig, path)


RENDERERS = {
    "table1_ratios": render_table1_ratios,
    "fig3_monthly": render_fig3_monthly,
    "fig4_activity": render_fig4_activity,
    "fig5_fraction": render_fig5_fraction,
    "fig6_hurst": render_fig6_hurst,
    "fig7_reduction": render_fig7_reduction,
    "fig8_response": render_fig8_response,
    "fig9_conditional": render_fig9_conditional,
    "fig10_spread": render_fig10_spread,
    "fig10_spread_rcdf": render_fig10_spread_rcdf,
    "fig11_ds": render_fig11_ds,
    "fig12_reversion": render_fig12_reversion,
    "fig13_weightedmid": render_fig13_weightedmid,
    "fig1_fig2_tails": render_fig1_fig2_tails,
}


def render_all(analysis_dir: Path, out_dir: Path) -> list:
    """Render a PNG for every known, non-empty table in the directory."""
    out_dir.mkdir(parents=True, exist_ok=True)
    made = []
    for name, renderer in RENDERERS.items():
        csv = analysis_dir / f"{name}.csv"
        if not csv.exists():
            continue
        df = pd.read_csv(csv)
        if df.empty:
            continue
        png = out_dir / f"{name}.png"
        renderer(df, png)
        made.append(png)
    return made
