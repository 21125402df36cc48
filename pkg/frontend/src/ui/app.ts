/**
 * Single-page companion UI: upload an image, paint the removal mask, launch
 * and monitor a training job, then browse and export diverse completions.
 *
 * All state derives from service responses; the active job id lives in the
 * URL hash, so a refresh re-attaches to the same job.
 */

import { MaskfillClient, pollJob, type JobStatus, type DiversityModeName } from "../api/client.js";
import { emptyState, startStroke, extendStroke, clearStrokes, fillAll, rasterize, maskedCount, type MaskCanvasState } from "../core/raster.js";
import { encodeMaskPng } from "../core/png.js";

const client = new MaskfillClient("");

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

// ---- mask editor ------------------------------------------------------------

let baseImage: HTMLImageElement | null = null;
let maskState: MaskCanvasState | null = null;
let painting = false;

const canvas = el<HTMLCanvasElement>("editor");
const ctx = canvas.getContext("2d")!;

function redraw(): void {
  if (!baseImage || !maskState) return;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(baseImage, 0, 0);
  const mask = rasterize(maskState);
  const overlay = ctx.createImageData(canvas.width, canvas.height);
  for (let i = 0; i < mask.length; i++) {
    if (mask[i]) {
      overlay.data[i * 4] = 255;
      overlay.data[i * 4 + 3] = 110;
    }
  }
  const off = document.createElement("canvas");
  off.width = canvas.width;
  off.height = canvas.height;
  off.getContext("2d")!.putImageData(overlay, 0, 0);
  ctx.drawImage(off, 0, 0);
  el<HTMLSpanElement>("mask-info").textContent =
    `${maskedCount(mask)} / ${mask.length} px masked`;
}

function canvasPoint(ev: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

canvas.addEventListener("pointerdown", (ev) => {
  if (!maskState) return;
  painting = true;
  canvas.setPointerCapture(ev.pointerId);
  const radius = Number(el<HTMLInputElement>("brush-radius").value);
  const erase = el<HTMLInputElement>("brush-erase").checked;
  startStroke(maskState, canvasPoint(ev), radius, erase);
  redraw();
});

canvas.addEventListener("pointermove", (ev) => {
  if (!painting || !maskState) return;
  extendStroke(maskState, canvasPoint(ev));
  redraw();
});

canvas.addEventListener("pointerup", () => {
  painting = false;
});

el<HTMLButtonElement>("mask-clear").onclick = () => {
  if (maskState) {
    clearStrokes(maskState);
    redraw();
  }
};

el<HTMLButtonElement>("mask-fill").onclick = () => {
  if (maskState) {
    fillAll(maskState);
    redraw();
  }
};

el<HTMLInputElement>("file-input").addEventListener("change", async (ev) => {
  const input = ev.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  const img = new Image();
  img.onload = () => {
    baseImage = img;
    canvas.width = img.naturalWidth;
    canvas.height = img.naturalHeight;
    maskState = emptyState(img.naturalWidth, img.naturalHeight);
    el<HTMLButtonElement>("train-btn").disabled = false;
    redraw();
  };
  img.src = URL.createObjectURL(file);
});

export function exportMask(state: MaskCanvasState): Uint8Array<ArrayBuffer> {
  return encodeMaskPng(rasterize(state), state.width, state.height);
}

// ---- training ----------------------------------------------------------------

let activePoll: { stop: () => void } | null = null;

function setJobHash(jobId: string | null): void {
  location.hash = jobId ? `job=${jobId}` : "";
}

function jobFromHash(): string | null {
  const m = location.hash.match(/job=([0-9a-f]+)/);
  return m ? m[1] : null;
}

el<HTMLButtonElement>("train-btn").onclick = async () => {
  const fileInput = el<HTMLInputElement>("file-input");
  const file = fileInput.files?.[0];
  if (!file || !maskState) return;
  const imageBytes = new Uint8Array(await file.arrayBuffer());
  const maskBytes = exportMask(maskState);
  const overrides: Record<string, unknown> = {};
  const fast = el<HTMLInputElement>("fast-preset").checked;
  if (fast) {
    overrides["pyramid"] = { scale_factor: 4 / 3, min_dimension: 16, mask_threshold: 0.3 };
  }
  try {
    const job = await client.createJob(imageBytes, maskBytes, fast ? overrides : undefined);
    setJobHash(job.id);
    attachToJob(job.id);
  } catch (err) {
    showError(String(err));
  }
};

el<HTMLButtonElement>("cancel-btn").onclick = async () => {
  const jobId = jobFromHash();
  if (!jobId) return;
  try {
    await client.cancelJob(jobId);
  } catch (err) {
    showError(String(err));
  }
};

function showError(message: string): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message;
  banner.style.display = message ? "block" : "none";
}

function drawLossCurves(status: JobStatus): void {
  const plot = el<HTMLCanvasElement>("loss-plot");
  const pctx = plot.getContext("2d")!;
  pctx.clearRect(0, 0, plot.width, plot.height);
  const records = status.progress.filter((r) => r.stage === "train" && r.rec !== null);
  if (records.length < 2) return;
  const series: Array<[keyof typeof records[0], string]> = [
    ["rec", "#2a7"],
    ["d_loss", "#d55"],
  ];
  for (const [key, color] of series) {
    const values = records.map((r) => Number(r[key] ?? 0));
    const lo = Math.min(...values);
    const hi = Math.max(...values);
    const span = hi - lo || 1;
    pctx.strokeStyle = color;
    pctx.beginPath();
    values.forEach((v, i) => {
      const x = (i / (values.length - 1)) * plot.width;
      const y = plot.height - ((v - lo) / span) * (plot.height - 4) - 2;
      i === 0 ? pctx.moveTo(x, y) : pctx.lineTo(x, y);
    });
    pctx.stroke();
  }
}

function attachToJob(jobId: string): void {
  activePoll?.stop();
  showError("");
  el<HTMLDivElement>("monitor").style.display = "block";
  const stateEl = el<HTMLSpanElement>("job-state");
  let naiveShown = false;

  const handle = pollJob(client, jobId, (status) => {
    const job = status.job;
    stateEl.textContent =
      job.state === "training"
        ? `training (scale ${job.scale}, iter ${job.iteration}/${job.total_iterations})`
        : job.state;
    drawLossCurves(status);
    if (!naiveShown && (job.state === "training" || job.state === "done")) {
      const naive = el<HTMLImageElement>("naive-preview");
      naive.src = client.naiveUrl(jobId) + `?t=${Date.now()}`;
      naive.onload = () => {
        naive.style.display = "inline-block";
      };
      naiveShown = true;
    }
    if (job.state === "failed") {
      showError(job.error ?? "training failed");
    }
    const galleryReady = job.state === "done";
    el<HTMLButtonElement>("sample-btn").disabled = !galleryReady;
    el<HTMLButtonElement>("cancel-btn").disabled =
      job.state === "done" || job.state === "failed" || job.state === "cancelled";
  });
  activePoll = handle;
  handle.done.catch((err) => showError(String(err)));
}

// ---- gallery -------------------------------------------------------------------

let chosenSample: string | null = null;

let requestInFlight = false;

async function requestGallery(): Promise<void> {
  const jobId = jobFromHash();
  if (!jobId || requestInFlight || el<HTMLButtonElement>("sample-btn").disabled) return;
  const seed = Number(el<HTMLInputElement>("sample-seed").value);
  const count = Number(el<HTMLInputElement>("sample-count").value);
  const modes: DiversityModeName[] = ["normal", "medium", "high"];
  const mode = modes[Number(el<HTMLInputElement>("mode-slider").value)];
  el<HTMLSpanElement>("mode-label").textContent = mode;
  requestInFlight = true;
  try {
    const batch = await client.requestSamples(jobId, seed, mode, count);
    renderGallery(batch.samples, batch.std);
  } catch (err) {
    showError(String(err));
  } finally {
    requestInFlight = false;
  }
}

el<HTMLButtonElement>("sample-btn").onclick = requestGallery;

el<HTMLInputElement>("mode-slider").oninput = () => {
  const modes = ["normal", "medium", "high"];
  el<HTMLSpanElement>("mode-label").textContent =
    modes[Number(el<HTMLInputElement>("mode-slider").value)];
};

// releasing the slider re-requests the gallery at the new diversity level
el<HTMLInputElement>("mode-slider").onchange = () => {
  void requestGallery();
};

function renderGallery(sampleIds: string[], stdId: string): void {
  const grid = el<HTMLDivElement>("gallery");
  grid.innerHTML = "";
  const showStd = el<HTMLInputElement>("std-overlay").checked;
  for (const sid of sampleIds) {
    const tile = document.createElement("div");
    tile.className = "tile";
    const img = document.createElement("img");
    img.src = client.sampleUrl(sid);
    tile.appendChild(img);
    if (showStd) {
      const std = document.createElement("img");
      std.src = client.sampleUrl(stdId);
      std.className = "std-overlay";
      tile.appendChild(std);
    }
    tile.onclick = () => {
      chosenSample = sid;
      document.querySelectorAll(".tile.chosen").forEach((t) => t.classList.remove("chosen"));
      tile.classList.add("chosen");
      el<HTMLButtonElement>("export-btn").disabled = false;
    };
    grid.appendChild(tile);
  }
}

el<HTMLButtonElement>("export-btn").onclick = async () => {
  if (!chosenSample) return;
  const bytes = await client.fetchSample(chosenSample);
  const blob = new Blob([bytes], { type: "image/png" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${chosenSample}.png`;
  a.click();
  URL.revokeObjectURL(a.href);
};

// ---- boot ------------------------------------------------------------------------

const existing = jobFromHash();
if (existing) {
  attachToJob(existing);
}
