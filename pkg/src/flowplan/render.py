"""Deterministic SVG rendering: rollout frames and the HLP grouped bar chart.

Hand-rolled SVG text, no plotting dependency; outputs are inspection
artifacts and must be byte-identical across identical runs.
"""

import numpy as np


def _fmt(value: float) -> str:
    return f"{value:.2f}"


class SvgCanvas:
    def __init__(self, width, height, world_bounds):
        self.width = width
        self.height = height
        xmin, ymin, xmax, ymax = world_bounds
        self.sx = width / (xmax - xmin)
        self.sy = height / (ymax - ymin)
        self.xmin, self.ymax = xmin, ymax
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]

    def to_px(self, x, y):
        return (x - self.xmin) * self.sx, (self.ymax - y) * self.sy

    def rect(self, xmin, ymin, xmax, ymax, fill="#888888"):
        px, py = self.to_px(xmin, ymax)
        self.parts.append(
            f'<rect x="{_fmt(px)}" y="{_fmt(py)}" width="{_fmt((xmax - xmin) * self.sx)}" '
            f'height="{_fmt((ymax - ymin) * self.sy)}" fill="{fill}"/>')

    def circle(self, cx, cy, r, fill="#888888", stroke="none"):
        px, py = self.to_px(cx, cy)
        self.parts.append(
            f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="{_fmt(r * self.sx)}" '
            f'fill="{fill}" stroke="{stroke}"/>')

    def polyline(self, xy, stroke="#000000", width=1.5, opacity=1.0):
        pts = " ".join(f"{_fmt(px)},{_fmt(py)}"
                       for px, py in (self.to_px(x, y) for x, y in xy))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def line(self, x1, y1, x2, y2, stroke="#000000", width=1.0):
        a = self.to_px(x1, y1)
        b = self.to_px(x2, y2)
        self.parts.append(
            f'<line x1="{_fmt(a[0])}" y1="{_fmt(a[1])}" x2="{_fmt(b[0])}" '
            f'y2="{_fmt(b[1])}" stroke="{stroke}" stroke-width="{width}"/>')

    def text(self, x, y, content, size=12, fill="#000000"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" fill="{fill}">{content}</text>')

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.parts))
            fh.write("\n</svg>\n")


def render_frame(path, world, agents, robot_pose, planner_output, goal,
                 size=480):
    """One rollout frame: shapes, agents, candidate fan, selected trajectory."""
    canvas = SvgCanvas(size, size, world.bounds)
    for rect in world.rects:
        canvas.rect(rect.xmin, rect.ymin, rect.xmax, rect.ymax)
    for circ in world.circles:
        canvas.circle(circ.cx, circ.cy, circ.r)
    canvas.circle(goal[0], goal[1], 0.18, fill="#2ca02c")
    for agent in agents:
        canvas.circle(agent.pos[0], agent.pos[1], agent.radius, fill="#1f77b4")

    px, py, theta = robot_pose
    if planner_output is not None:
        c, s = np.cos(theta), np.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        for k in range(planner_output.candidate_xy.shape[0]):
            world_xy = planner_output.candidate_xy[k] @ rot.T + np.array([px, py])
            canvas.polyline(world_xy, stroke="#aaaaaa", width=1.0, opacity=0.8)
        selected = planner_output.selected_xy @ rot.T + np.array([px, py])
        canvas.polyline(selected, stroke="#d62728", width=2.5)
    canvas.circle(px, py, 0.3, fill="#d62728")
    canvas.line(px, py, px + 0.45 * np.cos(theta), py + 0.45 * np.sin(theta),
                stroke="#000000", width=2.0)
    canvas.save(path)


def render_hlp_bars(path, pairs, size=(640, 360)):
    """Grouped bar chart of per-scene HLP: scorer-selected vs cost-selected."""
    width, height = size
    margin = 50
    canvas = SvgCanvas(width, height, (0, 0, width, height))
    if pairs:
        peak = max(max(s, c) for _, s, c in pairs)
    else:
        peak = 1.0
    peak = max(peak, 1e-9)
    plot_h = height - 2 * margin
    plot_w = width - 2 * margin
    group_w = plot_w / max(len(pairs), 1)
    bar_w = 0.35 * group_w
    canvas.line(margin, height - margin, width - margin, height - margin)
    canvas.line(margin, margin, margin, height - margin)
    canvas.text(margin, margin - 10, "HLP (m): scorer=blue, cost=orange", size=13)
    for i, (scene_id, hlp_scorer, hlp_cost) in enumerate(pairs):
        x0 = margin + i * group_w
        for j, (value, color) in enumerate(
                ((hlp_scorer, "#1f77b4"), (hlp_cost, "#ff7f0e"))):
            bar_h = plot_h * value / peak
            canvas.parts.append(
                f'<rect x="{_fmt(x0 + 0.1 * group_w + j * bar_w)}" '
                f'y="{_fmt(height - margin - bar_h)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(bar_h)}" fill="{color}"/>')
        canvas.text(x0 + 0.3 * group_w, height - margin + 16, str(scene_id), size=10)
    canvas.save(path)
