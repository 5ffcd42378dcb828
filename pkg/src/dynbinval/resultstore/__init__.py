"""Location and rendering of experiment result files."""

from __future__ import annotations

import io
import json
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

#: Default location where experiment outputs are written.
DEFAULT_RESULT_ROOT = Path(__file__).resolve().parents[3] / "results"

#: printf-style float format giving 17 significant digits.
FLOAT_FORMAT = "%.17g"

_Pathish = Union[str, Path]
Row = Mapping[str, Any]


def resolve_result_root(result_root: _Pathish | None = None) -> Path:
    """Return a :class:`Path` pointing at the result root.

    When ``None`` is provided, :data:`DEFAULT_RESULT_ROOT` is returned.  The
    directory is not created; use :func:`ensure_result_root` for that.
    """

    if result_root is None:
        return DEFAULT_RESULT_ROOT
    if isinstance(result_root, Path):
        return result_root
    return Path(result_root)


def ensure_result_root(result_root: _Pathish | None = None) -> Path:
    """Ensure the result root exists and return it as a :class:`Path`."""

    root = resolve_result_root(result_root)
    root.mkdir(parents=True, exist_ok=True)
    return root


def resolve_output_path(out: _Pathish, result_root: _Pathish | None = None) -> Path:
    """Place bare file names below the result root; other paths are kept."""

    path = Path(out)
    if path.is_absolute() or path.parent != Path("."):
        return path
    return ensure_result_root(result_root) / path


def render_csv(rows: Sequence[Row], columns: Sequence[str]) -> str:
    """One header row, ``columns`` in order, floats with 17 significant digits."""

    frame = pd.DataFrame(list(rows), columns=list(columns))
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def render_json(rows: Sequence[Row], columns: Sequence[str]) -> str:
    """Array of row objects with keys in ``columns`` order."""

    payload = [{column: row.get(column) for column in columns} for row in rows]
    return json.dumps(payload, indent=2) + "\n"


def render_heatmap(
    rows: Sequence[Row],
    x: str = "c",
    y: str = "eps",
    value: str = "mean",
    title: str | None = None,
) -> str:
    """Static SVG heatmap of ``value`` over the ``(x, y)`` grid.

    Output is byte-stable for equal input: the SVG date stamp is dropped and
    element ids are derived from a fixed salt.
    """

    frame = pd.DataFrame(list(rows))
    if frame.empty:
        raise ValueError("Cannot draw a heatmap without rows")
    if frame.duplicated(subset=[x, y]).any():
        raise ValueError(f"Several rows share a ({x}, {y}) cell; draw one heatmap per n")
    grid = frame.pivot(index=y, columns=x, values=value).sort_index()
    limit = float(abs(grid.to_numpy()).max()) or 1.0

    with plt.rc_context({"svg.hashsalt": "dynbinval", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 5))
        image = ax.imshow(
            grid.to_numpy(),
            origin="lower",
            aspect="auto",
            cmap="coolwarm",
            vmin=-limit,
            vmax=limit,
        )
        ax.set_xticks(range(len(grid.columns)), [f"{v:g}" for v in grid.columns], rotation=45)
        ax.set_yticks(range(len(grid.index)), [f"{v:g}" for v in grid.index])
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        if title:
            ax.set_title(title)
        fig.colorbar(image, ax=ax, label=value)
        fig.tight_layout()
        buffer = io.StringIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buffer.getvalue()


def render(rows: Sequence[Row], columns: Sequence[str], fmt: str) -> str:
    if fmt == "csv":
        return render_csv(rows, columns)
    if fmt == "json":
        return render_json(rows, columns)
    if fmt == "svg":
        return render_heatmap(rows)
    raise ValueError(f"Unknown output format: {fmt}")


def write_output(text: str, out: _Pathish, result_root: _Pathish | None = None) -> Path:
    """Write rendered output and return the path it landed at."""

    path = resolve_output_path(out, result_root)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


__all__ = [
    "DEFAULT_RESULT_ROOT",
    "FLOAT_FORMAT",
    "ensure_result_root",
    "render",
    "render_csv",
    "render_heatmap",
    "render_json",
    "resolve_output_path",
    "resolve_result_root",
    "write_output",
]
