import { Viewer } from "./viewer.js";
import { RAMP_SIZE } from "./tf.js";
import type { FrameStats } from "./protocol.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing #${id}`);
  return el as T;
};

const view = $<HTMLCanvasElement>("view");
const tfCanvas = $<HTMLCanvasElement>("tf-editor");
const banner = $("banner");
const stats = $("stats");
const isoToggle = $<HTMLInputElement>("iso-toggle");
const isoSlider = $<HTMLInputElement>("iso-slider");
const isoReadout = $("iso-readout");
const rateSlider = $<HTMLInputElement>("rate-slider");
const rateReadout = $("rate-readout");
const gradientSelect = $<HTMLSelectElement>("gradient-mode");
const colorInput = $<HTMLInputElement>("point-color");

const url = `ws://${location.hostname || "127.0.0.1"}:9876/ws`;
const viewer = new Viewer(
  url,
  { width: view.width, height: view.height },
  {
    onFrame: (png, frameStats) => {
      void drawFrame(png);
      showStats(frameStats);
    },
    onInfo: (info) => {
      const [lo, hi] = info.stats.valueRange;
      isoSlider.min = String(lo);
      isoSlider.max = String(hi);
      isoSlider.step = String((hi - lo) / 500 || 0.01);
      isoSlider.value = String(0.5 * (lo + hi));
      drawTfEditor();
    },
    onStatus: (status) => {
      banner.textContent = status === "open" ? "" : `connection ${status}…`;
      banner.style.display = status === "open" ? "none" : "block";
    },
  },
);

const viewCtx = view.getContext("2d")!;
async function drawFrame(png: ArrayBuffer): Promise<void> {
  const bitmap = await createImageBitmap(new Blob([png], { type: "image/png" }));
  viewCtx.drawImage(bitmap, 0, 0, view.width, view.height);
  bitmap.close();
}

function showStats(s: FrameStats): void {
  stats.textContent =
    `${s.ms.toFixed(1)} ms | regions ${s.regions} | samples ${s.samples}` +
    (s.bvhRebuildMs > 0 ? ` | rebuild ${s.bvhRebuildMs.toFixed(1)} ms` : "");
}

// -- orbit / zoom -------------------------------------------------------------

let dragButton = -1;
let lastX = 0;
let lastY = 0;
view.addEventListener("mousedown", (ev) => {
  ev.preventDefault();
  dragButton = ev.button;
  lastX = ev.clientX;
  lastY = ev.clientY;
});
view.addEventListener("contextmenu", (ev) => ev.preventDefault());
window.addEventListener("mouseup", () => (dragButton = -1));
window.addEventListener("mousemove", (ev) => {
  if (dragButton < 0) return;
  const dx = ev.clientX - lastX;
  const dy = ev.clientY - lastY;
  lastX = ev.clientX;
  lastY = ev.clientY;
  // left drag orbits; right or middle drag (or shift-drag) pans
  if (dragButton === 0 && !ev.shiftKey) viewer.orbitBy(Math.round(-dx / 2), Math.round(dy / 2));
  else viewer.panBy(-dx, dy);
});
view.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  viewer.zoomBy(ev.deltaY < 0 ? 1 : -1);
});

// -- transfer-function editor --------------------------------------------------

const tfCtx = tfCanvas.getContext("2d")!;
const PAD = 8;
const BAR_H = 18;
let selectedPoint = -1;
let draggingPoint = -1;

const plotW = () => tfCanvas.width - 2 * PAD;
const plotH = () => tfCanvas.height - 2 * PAD - BAR_H;
const toCanvas = (x: number, alpha: number): [number, number] => [
  PAD + x * plotW(),
  PAD + (1 - alpha) * plotH(),
];
const fromCanvas = (px: number, py: number): [number, number] => [
  (px - PAD) / plotW(),
  1 - (py - PAD) / plotH(),
];

function drawTfEditor(): void {
  const { width, height } = tfCanvas;
  tfCtx.clearRect(0, 0, width, height);
  const ramp = viewer.tf.ramp();
  for (let i = 0; i < RAMP_SIZE; i++) {
    const e = ramp[i]!;
    tfCtx.fillStyle = `rgb(${e[0]! * 255},${e[1]! * 255},${e[2]! * 255})`;
    tfCtx.fillRect(PAD + (i / RAMP_SIZE) * plotW(), height - PAD - BAR_H, plotW() / RAMP_SIZE + 1, BAR_H);
  }
  tfCtx.strokeStyle = "#ddd";
  tfCtx.beginPath();
  viewer.tf.points.forEach((p, i) => {
    const [x, y] = toCanvas(p.x, p.alpha);
    i === 0 ? tfCtx.moveTo(x, y) : tfCtx.lineTo(x, y);
  });
  tfCtx.stroke();
  viewer.tf.points.forEach((p, i) => {
    const [x, y] = toCanvas(p.x, p.alpha);
    tfCtx.beginPath();
    tfCtx.arc(x, y, 5, 0, 2 * Math.PI);
    tfCtx.fillStyle = i === selectedPoint ? "#fff" : "#999";
    tfCtx.fill();
  });
}

function nearestPoint(px: number, py: number): number {
  let best = -1;
  let bestDist = 12;
  viewer.tf.points.forEach((p, i) => {
    const [x, y] = toCanvas(p.x, p.alpha);
    const d = Math.hypot(px - x, py - y);
    if (d < bestDist) {
      best = i;
      bestDist = d;
    }
  });
  return best;
}

function tfChanged(): void {
  drawTfEditor();
  viewer.tfEdited();
}

tfCanvas.addEventListener("mousedown", (ev) => {
  const rect = tfCanvas.getBoundingClientRect();
  const hit = nearestPoint(ev.clientX - rect.left, ev.clientY - rect.top);
  selectedPoint = hit;
  draggingPoint = hit;
  if (hit >= 0) {
    const c = viewer.tf.points[hit]!.color;
    colorInput.value = `#${c.map((v) => Math.round(v * 255).toString(16).padStart(2, "0")).join("")}`;
  }
  drawTfEditor();
});
window.addEventListener("mousemove", (ev) => {
  if (draggingPoint < 0) return;
  const rect = tfCanvas.getBoundingClientRect();
  const [x, alpha] = fromCanvas(ev.clientX - rect.left, ev.clientY - rect.top);
  viewer.tf.movePoint(draggingPoint, x, alpha);
  tfChanged();
});
window.addEventListener("mouseup", () => (draggingPoint = -1));
tfCanvas.addEventListener("dblclick", (ev) => {
  const rect = tfCanvas.getBoundingClientRect();
  const [x, alpha] = fromCanvas(ev.clientX - rect.left, ev.clientY - rect.top);
  selectedPoint = viewer.tf.addPoint({ x, alpha, color: [0.8, 0.8, 0.8] });
  tfChanged();
});
tfCanvas.addEventListener("contextmenu", (ev) => {
  ev.preventDefault();
  const rect = tfCanvas.getBoundingClientRect();
  const hit = nearestPoint(ev.clientX - rect.left, ev.clientY - rect.top);
  if (hit >= 0) {
    viewer.tf.removePoint(hit);
    selectedPoint = -1;
    tfChanged();
  }
});
colorInput.addEventListener("input", () => {
  const p = viewer.tf.points[selectedPoint];
  if (!p) return;
  const v = colorInput.value;
  p.color = [1, 3, 5].map((i) => parseInt(v.slice(i, i + 2), 16) / 255) as [number, number, number];
  tfChanged();
});

// -- iso / quality controls ----------------------------------------------------

function pushIso(): void {
  const value = isoToggle.checked ? Number(isoSlider.value) : null;
  isoReadout.textContent = value === null ? "off" : value.toFixed(3);
  viewer.setIso(value);
}
isoToggle.addEventListener("change", pushIso);
isoSlider.addEventListener("input", pushIso);

rateSlider.addEventListener("input", () => {
  const rate = Number(rateSlider.value);
  rateReadout.textContent = `${rate.toFixed(2)}x`;
  viewer.setRateScale(rate);
});

gradientSelect.addEventListener("change", () => {
  viewer.setGradientMode(gradientSelect.value as never);
});

viewer.connect();
