"""Render SVG figures from the control pipeline's CSV outputs.

Three figure kinds are supported:

* ``prediction_overlay`` — measured output plus one line per prediction
  column (columns: ``t_s``, ``y_actual``, and any number of extra series).
* ``closedloop`` — two stacked panels: irrigation input on top, output
  with the target-zone band below (columns: ``t_s``, ``u_mps``,
  ``y_true``, ``zone_lo``, ``zone_hi``; optional ``y_meas``, ``P_mps``).
* ``zone_shape`` — the target-zone bounds over the prediction horizon
  (columns: ``step``, ``zone_lo``, ``zone_hi``).

Rendering is deterministic: identical CSV input yields identical SVG
bytes (embedded timestamps are disabled and SVG ids are derived from a
fixed salt).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

KINDS = ("prediction_overlay", "closedloop", "zone_shape")

# committed styling table so figures stay comparable across runs
STYLE = {
    "figure.figsize": (7.0, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "figures",
    "svg.fonttype": "none",
}
SERIES_STYLES = [
    {"color": "#1f77b4", "linestyle": "-"},
    {"color": "#d62728", "linestyle": "--"},
    {"color": "#2ca02c", "linestyle": "-."},
    {"color": "#9467bd", "linestyle": ":"},
    {"color": "#8c564b", "linestyle": "-"},
]
ZONE_FILL = {"color": "#bbbbbb", "alpha": 0.45, "linewidth": 0.0}


class SchemaError(ValueError):
    """An input CSV does not provide a required column."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    inputs: tuple
    output: Path
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {', '.join(KINDS)}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


@dataclass
class Table:
    path: Path
    columns: dict = field(default_factory=dict)

    def require(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise SchemaError(f"{self.path}: missing required column {name!r}")
        return self.columns[name]

    def get(self, name: str):
        return self.columns.get(name)

    def extras(self, known) -> list:
        return [c for c in self.columns if c not in known]


def read_table(path) -> Table:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric cell ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise SchemaError(f"{path}: ragged rows")
    return Table(path, {name: data[:, i] for i, name in enumerate(header)})


def _label(table: Table, column: str, multi: bool) -> str:
    return f"{table.path.stem}: {column}" if multi else column


def _draw_prediction_overlay(ax, tables):
    multi = len(tables) > 1
    for ti, table in enumerate(tables):
        t = table.require("t_s") / 3600.0
        actual = table.require("y_actual")
        names = table.extras(("t_s", "y_actual"))
        if not names:
            raise SchemaError(f"{table.path}: no prediction columns "
                              "besides 't_s' and 'y_actual'")
        if ti == 0:
            ax.plot(t, actual, color="black", linewidth=1.6,
                    label=_label(table, "y_actual", multi))
        for i, name in enumerate(names):
            style = SERIES_STYLES[(ti * len(names) + i) % len(SERIES_STYLES)]
            ax.plot(t, table.columns[name], linewidth=1.1,
                    label=_label(table, name, multi), **style)
    ax.set_xlabel("time [h]")
    ax.set_ylabel("water content [m$^3$/m$^3$]")
    ax.legend(loc="best", fontsize=8)


def _draw_closedloop(fig, tables):
    ax_u, ax_y = fig.subplots(2, 1, sharex=True)
    multi = len(tables) > 1
    for ti, table in enumerate(tables):
        t = table.require("t_s") / 3600.0
        u = table.require("u_mps")
        y = table.require("y_true")
        lo = table.require("zone_lo")
        hi = table.require("zone_hi")
        style = SERIES_STYLES[ti % len(SERIES_STYLES)]
        ax_u.step(t, u * 1e6, where="post", linewidth=1.1,
                  label=_label(table, "u_mps", multi), **style)
        if ti == 0:
            ax_y.fill_between(t, lo, hi, label="target zone", **ZONE_FILL)
        ax_y.plot(t, y, linewidth=1.2,
                  label=_label(table, "y_true", multi), **style)
        meas = table.get("y_meas")
        if meas is not None and not multi:
            ax_y.plot(t, meas, color="#7f7f7f", linewidth=0.7, alpha=0.8,
                      label="y_meas")
    ax_u.set_ylabel("irrigation [$\\mu$m/s]")
    ax_u.legend(loc="best", fontsize=8)
    ax_y.set_xlabel("time [h]")
    ax_y.set_ylabel("water content [m$^3$/m$^3$]")
    ax_y.legend(loc="best", fontsize=8)


def _draw_zone_shape(ax, tables):
    multi = len(tables) > 1
    for ti, table in enumerate(tables):
        j = table.require("step")
        lo = table.require("zone_lo")
        hi = table.require("zone_hi")
        style = SERIES_STYLES[ti % len(SERIES_STYLES)]
        ax.plot(j, lo, linewidth=1.3, label=_label(table, "zone_lo", multi),
                **style)
        ax.plot(j, hi, linewidth=1.3, **style)
        if ti == 0:
            ax.fill_between(j, lo, hi, **ZONE_FILL)
    ax.set_xlabel("prediction step")
    ax.set_ylabel("zone bound [m$^3$/m$^3$]")
    ax.legend(loc="best", fontsize=8)


def render(spec: FigureSpec) -> Path:
    """Draw the figure described by ``spec`` and write it as SVG."""
    tables = [read_table(p) for p in spec.inputs]
    with plt.rc_context(STYLE):
        fig = plt.figure()
        try:
            if spec.kind == "prediction_overlay":
                _draw_prediction_overlay(fig.subplots(), tables)
            elif spec.kind == "closedloop":
                _draw_closedloop(fig, tables)
            else:
                _draw_zone_shape(fig.subplots(), tables)
            if spec.title:
                fig.suptitle(spec.title)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return Path(spec.output)
