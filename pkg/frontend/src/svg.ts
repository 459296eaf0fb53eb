/** Hand-rolled SVG line charts.
 *
 *  No timestamps, no randomness, fixed number formatting: the same inputs
 *  always produce byte-identical files, which the tests rely on.
 */

export interface Series {
  name: string;
  points: Array<[number, number]>;
}

export interface ChartSpec {
  title: string;
  xLabel: string;
  yLabel: string;
  series: Series[];
  yDomain?: [number, number];
}

const WIDTH = 640;
const HEIGHT = 420;
const MARGIN = { top: 42, right: 24, bottom: 52, left: 64 };

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd",
  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

function fmt(value: number): string {
  // fixed-precision, trailing zeros trimmed, so output never depends on locale
  if (!Number.isFinite(value)) return "0";
  const text = value.toFixed(4).replace(/\.?0+$/, "");
  return text === "-0" ? "0" : text;
}

function ticks(lo: number, hi: number, count = 5): number[] {
  if (hi <= lo) {
    hi = lo + 1;
  }
  const rawStep = (hi - lo) / count;
  const power = Math.pow(10, Math.floor(Math.log10(rawStep)));
  const step = [1, 2, 5, 10].map((m) => m * power).find((s) => (hi - lo) / s <= count)!;
  const first = Math.ceil(lo / step) * step;
  const out: number[] = [];
  for (let v = first; v <= hi + step * 1e-9; v += step) {
    out.push(Number(v.toFixed(10)));
  }
  return out;
}

export function lineChart(spec: ChartSpec): string {
  const xs = spec.series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = spec.series.flatMap((s) => s.points.map((p) => p[1]));
  let xLo = Math.min(...xs);
  let xHi = Math.max(...xs);
  if (xHi === xLo) {
    xLo -= 1;
    xHi += 1;
  }
  let [yLo, yHi] = spec.yDomain ?? [Math.min(...ys), Math.max(...ys)];
  if (yHi === yLo) {
    yLo -= 0.05;
    yHi += 0.05;
  }
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const px = (x: number) => MARGIN.left + ((x - xLo) / (xHi - xLo)) * plotW;
  const py = (y: number) => MARGIN.top + plotH - ((y - yLo) / (yHi - yLo)) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
    `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="Helvetica, Arial, sans-serif">`);
  parts.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  parts.push(`<text x="${WIDTH / 2}" y="24" text-anchor="middle" font-size="16">${spec.title}</text>`);

  // axes and grid
  const axisColor = "#333333";
  parts.push(`<g stroke="${axisColor}" stroke-width="1">` +
    `<line x1="${MARGIN.left}" y1="${MARGIN.top + plotH}" x2="${MARGIN.left + plotW}" y2="${MARGIN.top + plotH}"/>` +
    `<line x1="${MARGIN.left}" y1="${MARGIN.top}" x2="${MARGIN.left}" y2="${MARGIN.top + plotH}"/></g>`);
  for (const t of ticks(xLo, xHi)) {
    const x = px(t);
    parts.push(`<line x1="${fmt(x)}" y1="${MARGIN.top + plotH}" x2="${fmt(x)}" y2="${MARGIN.top + plotH + 5}" stroke="${axisColor}"/>`);
    parts.push(`<text x="${fmt(x)}" y="${MARGIN.top + plotH + 20}" text-anchor="middle" font-size="11">${fmt(t)}</text>`);
  }
  for (const t of ticks(yLo, yHi)) {
    const y = py(t);
    parts.push(`<line x1="${MARGIN.left - 5}" y1="${fmt(y)}" x2="${MARGIN.left}" y2="${fmt(y)}" stroke="${axisColor}"/>`);
    parts.push(`<text x="${MARGIN.left - 9}" y="${fmt(y + 4)}" text-anchor="end" font-size="11">${fmt(t)}</text>`);
    parts.push(`<line x1="${MARGIN.left}" y1="${fmt(y)}" x2="${MARGIN.left + plotW}" y2="${fmt(y)}" stroke="#e0e0e0" stroke-width="0.5"/>`);
  }
  parts.push(`<text x="${MARGIN.left + plotW / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="13">${spec.xLabel}</text>`);
  parts.push(`<text x="18" y="${MARGIN.top + plotH / 2}" text-anchor="middle" font-size="13" ` +
    `transform="rotate(-90 18 ${MARGIN.top + plotH / 2})">${spec.yLabel}</text>`);

  // series: a polyline when there are at least two points, markers always
  spec.series.forEach((series, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = series.points.map(([x, y]) => `${fmt(px(x))},${fmt(py(y))}`);
    if (pts.length >= 2) {
      parts.push(`<polyline fill="none" stroke="${color}" stroke-width="2" points="${pts.join(" ")}"/>`);
    }
    for (const p of pts) {
      const [cx, cy] = p.split(",");
      parts.push(`<circle cx="${cx}" cy="${cy}" r="3" fill="${color}"/>`);
    }
  });

  // legend, one entry per series
  const legendX = MARGIN.left + plotW - 150;
  spec.series.forEach((series, i) => {
    const y = MARGIN.top + 10 + i * 18;
    const color = PALETTE[i % PALETTE.length];
    parts.push(`<line x1="${legendX}" y1="${y}" x2="${legendX + 22}" y2="${y}" stroke="${color}" stroke-width="2" class="legend"/>`);
    parts.push(`<text x="${legendX + 28}" y="${y + 4}" font-size="12">${series.name}</text>`);
  });

  parts.push("</svg>");
  return parts.join("\n") + "\n";
}
