/** Typed client for the fault-retrieval service HTTP API. */

export interface ResultCardPayload {
  recording_id: string;
  score: number;
  annotation: string;
  truth_class: string;
  spectrum_preview: number[];
}

export interface RetrievePayload {
  results: ResultCardPayload[];
}

export interface ZeroShotPayload {
  /** scores[i][j]: query i scored against recording j. */
  scores: number[][];
  /** argmax[j]: index of the best query for recording j. */
  argmax: number[];
}

export interface RecordingInfoPayload {
  recording_id: string;
  asset_id: string;
  subasset_id: string;
  timestamp: string;
  truth_class: string;
}

export interface RecordingsPayload {
  total: number;
  offset: number;
  recordings: RecordingInfoPayload[];
}

/** Non-2xx response or unreachable service; message is display-ready. */
export class ServiceError extends Error {
  readonly status: number;

  constructor(status: number, message: string) {
    super(message);
    this.name = "ServiceError";
    this.status = status;
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

async function request<T>(base: string, path: string, init: RequestInit): Promise<T> {
  const url = base.replace(/\/+$/, "") + path;
  let resp: Response;
  try {
    resp = await fetch(url, init);
  } catch (err) {
    if (isAbort(err)) {
      throw err; // superseded request, callers ignore it
    }
    throw new ServiceError(0, "service unreachable");
  }
  if (!resp.ok) {
    let detail = `service returned ${resp.status}`;
    try {
      const body = (await resp.json()) as { error?: unknown };
      if (typeof body.error === "string" && body.error) {
        detail = body.error;
      }
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ServiceError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

function post(body: unknown, signal?: AbortSignal): RequestInit {
  return {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
    signal,
  };
}

export function retrieve(
  base: string,
  query: string,
  k: number,
  signal?: AbortSignal,
): Promise<RetrievePayload> {
  return request(base, "/retrieve", post({ query, k }, signal));
}

export function zeroShot(
  base: string,
  queries: string[],
  recordingIds: string[],
  signal?: AbortSignal,
): Promise<ZeroShotPayload> {
  return request(base, "/zeroshot", post({ queries, recording_ids: recordingIds }, signal));
}

export function listRecordings(
  base: string,
  limit: number,
  offset: number,
  signal?: AbortSignal,
): Promise<RecordingsPayload> {
  return request(base, `/recordings?limit=${limit}&offset=${offset}`, { signal });
}
