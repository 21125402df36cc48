/**
 * End-to-end happy path against a live service: upload a fixture image with a
 * painted mask, train (tiny schedule), browse a gallery of 8, export the
 * chosen PNG, and verify idempotent re-requests and the mask round trip.
 *
 * Requires the python package to be installed (`pip install -e .` from the
 * repository root); the test spawns `python3 -m maskfill.cli serve` itself.
 */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync, writeFileSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { inflateSync } from "node:zlib";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MaskfillClient, pollJob } from "../src/api/client.js";
import { decodeMask, encodeMaskPng, encodePng } from "../src/core/png.js";
import { emptyState, rasterize, startStroke, extendStroke } from "../src/core/raster.js";

const PORT = 18000 + Math.floor(Math.random() * 10000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess;
let storeDir: string;
const client = new MaskfillClient(BASE);
const inflate = (d: Uint8Array) => new Uint8Array(inflateSync(d));

function fixtureImage(): Uint8Array {
  const w = 64;
  const h = 48;
  const data = new Uint8Array(w * h * 3);
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const i = (y * w + x) * 3;
      data[i] = Math.round((x / (w - 1)) * 255);
      data[i + 1] = Math.round((y / (h - 1)) * 255);
      data[i + 2] = Math.round((Math.sin(x / 8) * 0.5 + 0.5) * 255);
    }
  }
  return encodePng({ width: w, height: h, channels: 3, data });
}

function paintedMask() {
  const state = emptyState(64, 48);
  startStroke(state, { x: 26, y: 20 }, 9, false);
  extendStroke(state, { x: 40, y: 26 });
  return { state, raster: rasterize(state) };
}

const tinyConfig = {
  pyramid: { scale_factor: 1.8, min_dimension: 16, mask_threshold: 0.3 },
  schedule: { coarse_iters: 6, fine_iters: 6, coarse_lr_decay_at: null, fine_lr: 5e-4 },
  naive: { iterations: 10 },
  seed: 3,
};

beforeAll(async () => {
  storeDir = mkdtempSync(join(tmpdir(), "maskfill-e2e-"));
  server = spawn(
    "python3",
    ["-m", "maskfill.cli", "serve", "--store", storeDir, "--port", String(PORT)],
    { stdio: ["ignore", "pipe", "pipe"] }
  );
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    if (await client.health()) return;
    await new Promise((r) => setTimeout(r, 300));
  }
  throw new Error("service did not come up");
}, 90_000);

afterAll(() => {
  server?.kill("SIGTERM");
  rmSync(storeDir, { recursive: true, force: true });
});

describe("live service happy path", () => {
  let jobId: string;
  const { state, raster } = paintedMask();

  it("uploads image + painted mask and trains to done", async () => {
    const job = await client.createJob(fixtureImage(), encodeMaskPng(raster, 64, 48), tinyConfig);
    jobId = job.id;
    expect(job.state).toBe("queued");

    const updates: string[] = [];
    const handle = pollJob(client, jobId, (s) => updates.push(s.job.state), 250);
    const final = await handle.done;
    expect(final.state).toBe("done");
    expect(updates.length).toBeGreaterThan(0);
  }, 240_000);

  it("echoes the uploaded mask bit-identically", async () => {
    const echoed = decodeMask(await client.fetchMaskEcho(jobId), inflate);
    expect(echoed.width).toBe(64);
    expect(echoed.height).toBe(48);
    expect(Array.from(echoed.mask)).toEqual(Array.from(raster));
  });

  it("serves a gallery of 8 and re-requests idempotently", async () => {
    const batch = await client.requestSamples(jobId, 7, "high", 8);
    expect(batch.samples).toHaveLength(8);
    const tiles = await Promise.all(batch.samples.map((sid) => client.fetchSample(sid)));

    const again = await client.requestSamples(jobId, 7, "high", 8);
    expect(again.samples).toEqual(batch.samples);
    const tiles2 = await Promise.all(again.samples.map((sid) => client.fetchSample(sid)));
    tiles.forEach((t, i) => expect(Buffer.from(t).equals(Buffer.from(tiles2[i]))).toBe(true));

    // a different mode produces a different batch
    const other = await client.requestSamples(jobId, 7, "normal", 8);
    expect(other.samples).not.toEqual(batch.samples);
  }, 120_000);

  it("exports the chosen sample as a valid PNG file", async () => {
    const batch = await client.requestSamples(jobId, 7, "high", 8);
    const chosen = batch.samples[3];
    const bytes = await client.fetchSample(chosen);
    const path = join(storeDir, "exported.png");
    writeFileSync(path, bytes);
    const reread = readFileSync(path);
    expect(Buffer.from(bytes).equals(reread)).toBe(true);
    // decodable, right dims
    const img = decodeMask(new Uint8Array(reread), inflate);
    expect(img.width).toBe(64);
    expect(img.height).toBe(48);
  }, 120_000);

  it("surfaces the naive preview and reconstruction", async () => {
    const naive = await fetch(client.naiveUrl(jobId));
    expect(naive.status).toBe(200);
    const rec = await fetch(client.reconstructionUrl(jobId));
    expect(rec.status).toBe(200);
  }, 120_000);

  it("rejects sampling for unknown jobs", async () => {
    await expect(client.requestSamples("feedfacedeadbeef", 1, "high", 2)).rejects.toThrow(/404/);
  });
});
