# plots.py
"""
报告图像
把报告中附带的数值序列画成静态 SVG：涡旋径向剖面 f(r)、矩坐标轨迹 (Re σ₁, Im σ₁)、
残差热图。图像写在 JSON 报告旁边。
"""

import io
from pathlib import Path
from typing import Any, Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from config import output as out_cfg
from logger import get_logger
import temp_manager

logger = get_logger("echlab.plots")

# 固定 SVG 内部 id，保证同样的数据得到同样的字节
plt.rcParams["svg.hashsalt"] = "echlab"

PLOT_KINDS = ("radial-profile", "trajectory", "residual-map")


class PlotError(ValueError):
    """报告中没有可画的序列"""


def _series(report: Any) -> Mapping[str, Any]:
    if isinstance(report, Mapping):
        return report.get("series") or {}
    return getattr(report, "series", None) or {}


def _radial_profile(data: Mapping[str, Any]):
    fig, ax = plt.subplots(figsize=(6, 4))
    r = np.asarray(data["r"], dtype=float)
    ax.plot(r, np.asarray(data["f"], dtype=float), label="f(r)")
    ax.axhline(1.0, color="gray", lw=0.5, ls="--")
    ax.set_xlabel("r")
    ax.set_ylabel("|α|")
    ax.set_title(f"n = {data.get('n', '?')}")
    ax.legend()
    return fig


def _trajectory(data: Mapping[str, Any]):
    columns = list(data["columns"])
    rows = np.asarray(data["rows"], dtype=float)
    re = rows[:, columns.index("re_sigma_1")]
    im = rows[:, columns.index("im_sigma_1")]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(re, im, lw=1.0)
    ax.plot(re[:1], im[:1], "o", label="t = 0")
    ax.plot(re[-1:], im[-1:], "s", label=f"t = {rows[-1, 0]:.3f}")
    ax.set_xlabel("Re σ₁")
    ax.set_ylabel("Im σ₁")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend()
    return fig


def _residual_map(data: Mapping[str, Any]):
    values = np.asarray(data["values"], dtype=float)
    x = np.asarray(data["x"], dtype=float)
    y = np.asarray(data["y"], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 5))
    # 对数色标，零残差处截断
    im = ax.imshow(
        np.log10(np.maximum(np.abs(values), 1e-16)).T,
        origin="lower",
        extent=(x[0], x[-1], y[0], y[-1]),
        cmap="viridis",
    )
    fig.colorbar(im, ax=ax, label=f"log10 |{data.get('label', 'residual')}|")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    return fig


_RENDERERS = {
    "radial-profile": ("radial_profile", _radial_profile),
    "trajectory": ("trajectory", _trajectory),
    "residual-map": ("residual_map", _residual_map),
}


def plottable_kinds(report: Any) -> list[str]:
    series = _series(report)
    return [kind for kind, (key, _) in _RENDERERS.items() if key in series]


def emit_plots(report: Any, kind: str = "auto", directory: Path | str | None = None, stem: str = "report") -> list[Path]:
    """
    把报告中的序列画成 SVG

    Args:
        report: 带 series 字段的报告（对象属性或字典键）
        kind: PLOT_KINDS 之一，或 "auto" 画出全部可画的序列
        directory: 输出目录（默认为配置中的输出目录）
        stem: 文件名前缀

    Returns:
        写出的文件路径

    Raises:
        PlotError: 报告中没有对应序列（"nothing to plot"）
    """
    kinds = plottable_kinds(report)
    if kind != "auto":
        if kind not in _RENDERERS:
            raise PlotError(f"未知的图像类型: {kind}（可选 {', '.join(PLOT_KINDS)}）")
        kinds = [kind] if kind in kinds else []
    if not kinds:
        raise PlotError("nothing to plot")

    directory = Path(directory or out_cfg.default_output_dir)
    series = _series(report)
    written = []
    for name in kinds:
        key, render = _RENDERERS[name]
        fig = render(series[key])
        buffer = io.BytesIO()
        try:
            fig.savefig(buffer, format=out_cfg.plot_format, metadata={"Date": None}, bbox_inches="tight")
        finally:
            plt.close(fig)
        path = directory / f"{stem}_{key}.{out_cfg.plot_format}"
        written.append(temp_manager.atomic_write_bytes(path, buffer.getvalue(), identifier="plot"))
        logger.info(f"图像已写出: {path}")
    return written
