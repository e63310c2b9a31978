"""
Static SVG figures: AB boxplots for simulation studies and forest plots for
subgroup discovery.
"""

from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
import structlog  # noqa: E402

from src.models.estimates import METHODS, DiscoveryReport  # noqa: E402

logger = structlog.get_logger()

# fixed ids and no timestamp keep the SVG bytes reproducible
plt.rcParams["svg.hashsalt"] = "bni-hte"
SVG_METADATA = {"Date": None}


def _save(figure, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, format="svg", metadata=SVG_METADATA, bbox_inches="tight")
    plt.close(figure)
    logger.debug("figure_written", path=str(path))
    return path


def ab_boxplots(table: pd.DataFrame, output_dir: Union[str, Path], prefix: str = "ab") -> List[Path]:
    """One SVG per estimand: AB boxes per scenario, grouped by method."""
    written = []
    scenarios = list(dict.fromkeys(table["scenario"]))
    for estimand, group in table.groupby("estimand", sort=False):
        figure, axis = plt.subplots(figsize=(max(6.0, 1.6 * len(scenarios)), 4.0))
        width = 0.8 / len(METHODS)
        for k, method in enumerate(METHODS):
            data = [
                group.loc[(group["scenario"] == s) & (group["method"] == method), "ab"].to_numpy()
                for s in scenarios
            ]
            positions = [s + (k - (len(METHODS) - 1) / 2) * width for s in range(len(scenarios))]
            boxes = axis.boxplot(
                data,
                positions=positions,
                widths=width * 0.9,
                patch_artist=True,
                showfliers=False,
                manage_ticks=False,
            )
            for patch in boxes["boxes"]:
                patch.set_facecolor(f"C{k}")
            axis.plot([], [], color=f"C{k}", linewidth=6, label=method)
        axis.set_xticks(range(len(scenarios)))
        axis.set_xticklabels(scenarios)
        axis.set_ylabel("percent absolute bias")
        axis.set_title(f"{estimand} effects")
        axis.legend(frameon=False)
        written.append(_save(figure, Path(output_dir) / f"{prefix}_{estimand}.svg"))
    return written


def forest_plot(report: DiscoveryReport, path: Union[str, Path]) -> Path:
    """Coefficient and 95% CI per binarized covariate, significant rows filled."""
    rows = report.rows
    figure, axis = plt.subplots(figsize=(6.0, 0.4 * len(rows) + 1.2))
    for position, row in enumerate(reversed(rows)):
        axis.plot([row.ci_lower, row.ci_upper], [position, position], color="black", linewidth=1)
        axis.plot(
            row.coefficient,
            position,
            marker="o",
            color="black",
            markerfacecolor="black" if row.significant else "white",
        )
    axis.axvline(0.0, color="grey", linestyle="--", linewidth=0.8)
    axis.set_yticks(range(len(rows)))
    axis.set_yticklabels([row.covariate for row in reversed(rows)])
    axis.set_xlabel("deviation from average effect")
    axis.set_title(f"{report.estimand} (held {report.held_level}), {report.method}")
    return _save(figure, path)
