"""Static SVG bar charts of sweep results, one panel per ancilla method.

Pure ElementTree output so the chart is a well-formed standalone SVG with no
plotting dependency: grouped bars per environment, height = logarithmic
infidelity, winning order highlighted.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

ORDER_FILLS = {
    "XZXZ": "#9e9e9e",
    "XZZX": "#d9a441",
    "ZXXZ": "#1a1a1a",
    "ZXZX": "#f4f4f4",
}

BAR_W = 11
GROUP_GAP = 14
MARGIN_L = 56
MARGIN_R = 18
MARGIN_T = 46
PANEL_H = 230
PANEL_GAP = 42
AXIS_H = 34


class ChartError(Exception):
    pass


def _panel_rows(results):
    by_method: dict[str, list] = {}
    for r in results:
        by_method.setdefault(r.config.method, []).append(r)
    return dict(sorted(by_method.items()))


def render_sweep_chart(results, best) -> str:
    """Grouped-bar SVG for a sweep table.

    ``best`` maps (method, grid_index) to the winning order so the chart
    highlight provably matches the comparison logic that produced it.
    """
    if not results:
        raise ChartError("cannot chart an empty result table")
    panels = _panel_rows(results)
    orders = sorted({r.config.order for r in results})
    envs = sorted({r.config.env.grid_index for r in results})
    group_w = BAR_W * len(orders) + GROUP_GAP
    plot_w = group_w * len(envs)
    width = MARGIN_L + plot_w + MARGIN_R
    height = MARGIN_T + len(panels) * (PANEL_H + AXIS_H) + (
        (len(panels) - 1) * PANEL_GAP
    ) + 8
    top = max(max(r.log_infidelity for r in results) * 1.12, 1e-6)

    svg = ET.Element(
        "svg", xmlns="http://www.w3.org/2000/svg",
        width=str(width), height=str(height),
        viewBox=f"0 0 {width} {height}",
    )
    ET.SubElement(svg, "rect", x="0", y="0", width=str(width),
                  height=str(height), fill="white")
    title = ET.SubElement(svg, "text", x=str(width / 2), y="20",
                          fill="#111", style="font:bold 14px sans-serif",
                          attrib={"text-anchor": "middle"})
    title.text = "Logarithmic infidelity by error environment"
    legend_x = MARGIN_L
    for order in orders:
        ET.SubElement(svg, "rect", x=str(legend_x), y="28", width="10",
                      height="10", fill=ORDER_FILLS.get(order, "#888"),
                      stroke="#333", attrib={"stroke-width": "0.6"})
        label = ET.SubElement(svg, "text", x=str(legend_x + 14), y="37",
                              fill="#111", style="font:11px sans-serif")
        label.text = order
        legend_x += 70

    y0 = MARGIN_T
    for method, rows in panels.items():
        table = {(r.config.env.grid_index, r.config.order): r for r in rows}
        base = y0 + PANEL_H
        head = ET.SubElement(svg, "text", x=str(MARGIN_L), y=str(y0 - 4),
                             fill="#111", style="font:bold 12px sans-serif")
        head.text = f"{method} ancillae"
        # y axis with integer ticks
        ET.SubElement(svg, "line", x1=str(MARGIN_L - 6), y1=str(base),
                      x2=str(MARGIN_L + plot_w), y2=str(base),
                      stroke="#333", attrib={"stroke-width": "1"})
        tick = 0
        while tick <= top:
            y = base - tick / top * PANEL_H
            ET.SubElement(svg, "line", x1=str(MARGIN_L - 5), y1=str(y),
                          x2=str(MARGIN_L + plot_w), y2=str(y),
                          stroke="#ddd", attrib={"stroke-width": "0.5"})
            lab = ET.SubElement(svg, "text", x=str(MARGIN_L - 9), y=str(y + 3),
                                fill="#333", style="font:9px sans-serif",
                                attrib={"text-anchor": "end"})
            lab.text = str(tick)
            tick += 1
        for ei, env in enumerate(envs):
            gx = MARGIN_L + ei * group_w + GROUP_GAP / 2
            for oi, order in enumerate(orders):
                r = table.get((env, order))
                if r is None:
                    continue
                h = max(r.log_infidelity, 0.0) / top * PANEL_H
                x = gx + oi * BAR_W
                is_best = best.get((method, env)) == order
                ET.SubElement(
                    svg, "rect", x=f"{x:.1f}", y=f"{base - h:.1f}",
                    width=str(BAR_W - 1.5), height=f"{h:.1f}",
                    fill=ORDER_FILLS.get(order, "#888"),
                    stroke="#c0392b" if is_best else "#333",
                    attrib={
                        "stroke-width": "1.6" if is_best else "0.6",
                        "data-method": method,
                        "data-order": order,
                        "data-env": str(env),
                        "data-best": "1" if is_best else "0",
                    },
                )
            lab = ET.SubElement(
                svg, "text", x=f"{gx + BAR_W * len(orders) / 2:.1f}",
                y=str(base + 14), fill="#333",
                style="font:9px sans-serif", attrib={"text-anchor": "middle"},
            )
            lab.text = str(env)
        axis = ET.SubElement(svg, "text", x=str(MARGIN_L + plot_w / 2),
                             y=str(base + 27), fill="#333",
                             style="font:10px sans-serif",
                             attrib={"text-anchor": "middle"})
        axis.text = "error environment (grid index)"
        y0 = base + AXIS_H + PANEL_GAP

    return ET.tostring(svg, encoding="unicode", xml_declaration=False)


def write_sweep_chart(results, best, path) -> None:
    markup = render_sweep_chart(results, best)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('<?xml version="1.0" encoding="UTF-8"?>\n')
        fh.write(markup)
        fh.write("\n")
