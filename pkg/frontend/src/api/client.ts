/**
 * Typed client for the maskfill job service. All state lives server-side;
 * this module only shapes requests and responses.
 */

export interface JobInfo {
  id: string;
  state: "queued" | "naive" | "training" | "done" | "failed" | "cancelled";
  created_at: number;
  stage: string | null;
  scale: number | null;
  iteration: number | null;
  total_iterations: number | null;
  error: string | null;
}

export interface ProgressRecord {
  stage: string;
  scale: number | null;
  iteration: number;
  total_iterations: number;
  d_loss: number | null;
  g_adv: number | null;
  rec: number | null;
  gp: number | null;
}

export interface JobStatus {
  job: JobInfo;
  progress: ProgressRecord[];
}

export interface SampleBatch {
  samples: string[];
  std: string;
  seed: number;
  mode: string;
}

export type DiversityModeName = "normal" | "medium" | "high";

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function raise(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class MaskfillClient {
  constructor(private baseUrl: string = "") {}

  url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async health(): Promise<boolean> {
    try {
      const r = await fetch(this.url("/api/health"));
      return r.ok;
    } catch {
      return false;
    }
  }

  async createJob(
    imagePng: Uint8Array<ArrayBuffer> | Blob,
    maskPng: Uint8Array<ArrayBuffer> | Blob,
    configOverrides?: Record<string, unknown>
  ): Promise<JobInfo> {
    const form = new FormData();
    form.append("image", new Blob([imagePng], { type: "image/png" }), "input.png");
    form.append("mask", new Blob([maskPng], { type: "image/png" }), "mask.png");
    if (configOverrides) {
      form.append("config", JSON.stringify(configOverrides));
    }
    const r = await fetch(this.url("/api/jobs"), { method: "POST", body: form });
    if (!r.ok) await raise(r);
    return (await r.json()).job as JobInfo;
  }

  async getStatus(jobId: string, tail = 50): Promise<JobStatus> {
    const r = await fetch(this.url(`/api/jobs/${jobId}?k=${tail}`));
    if (!r.ok) await raise(r);
    return (await r.json()) as JobStatus;
  }

  async cancelJob(jobId: string): Promise<JobInfo> {
    const r = await fetch(this.url(`/api/jobs/${jobId}/cancel`), { method: "POST" });
    if (!r.ok) await raise(r);
    return (await r.json()).job as JobInfo;
  }

  async requestSamples(
    jobId: string,
    seed: number,
    mode: DiversityModeName,
    count: number,
    noiseMultiplier = 1.0
  ): Promise<SampleBatch> {
    const r = await fetch(this.url(`/api/jobs/${jobId}/samples`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ seed, mode, count, noise_multiplier: noiseMultiplier }),
    });
    if (!r.ok) await raise(r);
    return (await r.json()) as SampleBatch;
  }

  sampleUrl(sampleId: string): string {
    return this.url(`/api/samples/${sampleId}`);
  }

  async fetchSample(sampleId: string): Promise<Uint8Array<ArrayBuffer>> {
    const r = await fetch(this.sampleUrl(sampleId));
    if (!r.ok) await raise(r);
    return new Uint8Array(await r.arrayBuffer());
  }

  async fetchMaskEcho(jobId: string): Promise<Uint8Array<ArrayBuffer>> {
    const r = await fetch(this.url(`/api/jobs/${jobId}/mask`));
    if (!r.ok) await raise(r);
    return new Uint8Array(await r.arrayBuffer());
  }

  naiveUrl(jobId: string): string {
    return this.url(`/api/jobs/${jobId}/naive`);
  }

  inputUrl(jobId: string): string {
    return this.url(`/api/jobs/${jobId}/input`);
  }

  reconstructionUrl(jobId: string): string {
    return this.url(`/api/jobs/${jobId}/reconstruction`);
  }
}

export interface PollHandle {
  stop: () => void;
  done: Promise<JobInfo>;
}

/**
 * Poll a job until it reaches a terminal state. Interval starts at
 * `intervalMs` (default 1 s) and backs off 1.5x (capped at 10 s) after
 * consecutive fetch failures; only one request is ever in flight.
 */
export function pollJob(
  client: MaskfillClient,
  jobId: string,
  onUpdate: (status: JobStatus) => void,
  intervalMs = 1000
): PollHandle {
  let stopped = false;
  let resolveDone: (j: JobInfo) => void;
  let rejectDone: (e: unknown) => void;
  const done = new Promise<JobInfo>((res, rej) => {
    resolveDone = res;
    rejectDone = rej;
  });

  const terminal = new Set(["done", "failed", "cancelled"]);
  let delay = intervalMs;

  const tick = async () => {
    if (stopped) return;
    try {
      const status = await client.getStatus(jobId);
      delay = intervalMs; // healthy response resets the backoff
      onUpdate(status);
      if (terminal.has(status.job.state)) {
        resolveDone(status.job);
        return;
      }
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        rejectDone(err);
        return;
      }
      delay = Math.min(delay * 1.5, 10_000);
    }
    if (!stopped) setTimeout(tick, delay);
  };
  setTimeout(tick, 0);

  return {
    stop: () => {
      stopped = true;
    },
    done,
  };
}
