// Dependency-free SVG sparkline for the rolling precision series.

export interface Point {
  decided_at_ms: number;
  precision: number;
}

const W = 560;
const H = 120;
const PAD = 8;

export function precisionPolylinePoints(series: Point[]): string {
  if (series.length === 0) return "";
  if (series.length === 1) {
    const y = PAD + (1 - series[0].precision) * (H - 2 * PAD);
    return `${PAD},${y.toFixed(1)} ${W - PAD},${y.toFixed(1)}`;
  }
  const t0 = series[0].decided_at_ms;
  const t1 = series[series.length - 1].decided_at_ms;
  const spanT = Math.max(1, t1 - t0);
  return series
    .map((p) => {
      const x = PAD + ((p.decided_at_ms - t0) / spanT) * (W - 2 * PAD);
      const y = PAD + (1 - p.precision) * (H - 2 * PAD);
      return `${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export function renderPrecisionChart(doc: Document, series: Point[]): SVGSVGElement {
  const svg = doc.createElementNS("http://www.w3.org/2000/svg", "svg");
  svg.setAttribute("viewBox", `0 0 ${W} ${H}`);
  svg.setAttribute("class", "precision-chart");
  for (const frac of [0, 0.5, 1]) {
    const line = doc.createElementNS("http://www.w3.org/2000/svg", "line");
    const y = PAD + frac * (H - 2 * PAD);
    line.setAttribute("x1", String(PAD));
    line.setAttribute("x2", String(W - PAD));
    line.setAttribute("y1", y.toFixed(1));
    line.setAttribute("y2", y.toFixed(1));
    line.setAttribute("class", "gridline");
    svg.appendChild(line);
  }
  const poly = doc.createElementNS("http://www.w3.org/2000/svg", "polyline");
  poly.setAttribute("points", precisionPolylinePoints(series));
  poly.setAttribute("class", "precision-line");
  poly.setAttribute("fill", "none");
  svg.appendChild(poly);
  return svg;
}
