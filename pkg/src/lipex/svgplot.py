"""Hand-rolled SVG plots: histogram bars, curve polylines, and the signed
explanation heatmap.  No plotting dependency; output is deterministic text,
so rendered artifacts diff cleanly."""

import numpy as np

_CURVE_COLORS = ["#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"]


def _esc(s: str) -> str:
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _f(v: float) -> str:
    return f"{float(v):.2f}"


class _Canvas:
    def __init__(self, width, height, title):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.0f}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{_esc(title)}</text>',
        ]

    def add(self, fragment: str):
        self.parts.append(fragment)

    def text(self, x, y, s, size=11, anchor="middle", color="#000"):
        self.add(
            f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}" '
            f'font-family="sans-serif" font-size="{size}" fill="{color}">{_esc(s)}</text>'
        )

    def finish(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _axes(canvas, left, top, right, bottom):
    canvas.add(
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" stroke="black"/>'
    )
    canvas.add(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" stroke="black"/>'
    )


def render_histogram(counts, edges, *, title="", xlabel="", width=640, height=420) -> str:
    counts = list(counts)
    edges = list(edges)
    canvas = _Canvas(width, height, title)
    left, top, right, bottom = 60, 40, width - 20, height - 50
    _axes(canvas, left, top, right, bottom)
    cmax = max(max(counts), 1)
    span = edges[-1] - edges[0]
    for i, c in enumerate(counts):
        x0 = left + (edges[i] - edges[0]) / span * (right - left)
        x1 = left + (edges[i + 1] - edges[0]) / span * (right - left)
        h = (bottom - top) * c / cmax
        canvas.add(
            f'<rect x="{_f(x0)}" y="{_f(bottom - h)}" width="{_f(x1 - x0)}" '
            f'height="{_f(h)}" fill="#4878a8" stroke="white" stroke-width="0.5"/>'
        )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = left + frac * (right - left)
        canvas.text(x, bottom + 16, f"{edges[0] + frac * span:.2f}")
    canvas.text(left - 8, top + 8, str(cmax), anchor="end")
    canvas.text(left - 8, bottom, "0", anchor="end")
    canvas.text((left + right) / 2, height - 12, xlabel)
    return canvas.finish()


def render_curves(xs, series: dict, *, title="", xlabel="", ylabel="",
                  width=640, height=420) -> str:
    xs = [float(x) for x in xs]
    canvas = _Canvas(width, height, title)
    left, top, right, bottom = 70, 40, width - 20, height - 50
    _axes(canvas, left, top, right, bottom)
    all_vals = [v for vals in series.values() for v in vals if v is not None]
    ymin = min(0.0, min(all_vals, default=0.0))
    ymax = max(1e-12, max(all_vals, default=1.0))
    xmin, xmax = min(xs), max(xs)
    xspan = (xmax - xmin) or 1.0

    def px(x):
        return left + (x - xmin) / xspan * (right - left)

    def py(y):
        return bottom - (y - ymin) / (ymax - ymin) * (bottom - top)

    for si, (name, vals) in enumerate(series.items()):
        color = _CURVE_COLORS[si % len(_CURVE_COLORS)]
        pts = [(px(x), py(v)) for x, v in zip(xs, vals) if v is not None]
        if len(pts) >= 2:
            path = " ".join(f"{_f(x)},{_f(y)}" for x, y in pts)
            canvas.add(
                f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
            )
        for x, y in pts:
            canvas.add(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="3" fill="{color}"/>')
        canvas.text(right - 6, top + 16 + 16 * si, name, anchor="end", color=color)
    for x in xs:
        canvas.text(px(x), bottom + 16, f"{x:.3g}")
    canvas.text(left - 8, py(ymin) , f"{ymin:.2g}", anchor="end")
    canvas.text(left - 8, py(ymax) + 4, f"{ymax:.2g}", anchor="end")
    canvas.text((left + right) / 2, height - 12, xlabel)
    canvas.text(16, (top + bottom) / 2, ylabel, anchor="middle")
    return canvas.finish()


def _diverging_color(value, vmax):
    """White at 0, red for positive, blue for negative weights."""
    if vmax <= 0:
        return "#ffffff"
    t = max(-1.0, min(1.0, value / vmax))
    if t >= 0:
        r, g, b = 255, int(255 * (1 - t * 0.75)), int(255 * (1 - t * 0.85))
    else:
        r, g, b = int(255 * (1 + t * 0.85)), int(255 * (1 + t * 0.75)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def render_heatmap(matrix, row_labels, col_labels, *, title="", cell=64) -> str:
    M = np.asarray(matrix, dtype=np.float64)
    n_rows, n_cols = M.shape
    left, top = 130, 90
    width = left + n_cols * cell + 20
    height = top + n_rows * cell + 20
    canvas = _Canvas(width, height, title)
    vmax = float(np.abs(M).max()) if M.size else 0.0
    for j, name in enumerate(col_labels):
        canvas.text(left + j * cell + cell / 2, top - 10, name, size=11)
    for i, label in enumerate(row_labels):
        canvas.text(left - 10, top + i * cell + cell / 2 + 4, label, anchor="end")
        for j in range(n_cols):
            color = _diverging_color(M[i, j], vmax)
            canvas.add(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{color}" stroke="#cccccc"/>'
            )
            canvas.text(
                left + j * cell + cell / 2, top + i * cell + cell / 2 + 4,
                f"{M[i, j]:.3f}", size=11,
            )
    return canvas.finish()
