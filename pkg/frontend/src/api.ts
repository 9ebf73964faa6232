import type { DetectResponse, MergeRule, NeutralizeResponse } from "./types.js";

export class ApiError extends Error {
  code: string;

  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

type FetchFn = typeof fetch;

async function post<T>(
  fetchFn: FetchFn,
  url: string,
  payload: unknown,
): Promise<T> {
  let resp: Response;
  try {
    resp = await fetchFn(url, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  } catch (err) {
    throw new ApiError("network", String(err));
  }
  const body = await resp.json().catch(() => null);
  if (!resp.ok) {
    if (body && typeof body.code === "string") {
      throw new ApiError(body.code, String(body.message ?? "request failed"));
    }
    throw new ApiError(`http-${resp.status}`, "request failed");
  }
  return body as T;
}

export async function detect(
  server: string,
  text: string,
  category: string,
  fetchFn: FetchFn = fetch,
): Promise<DetectResponse> {
  return post(fetchFn, `${server}/api/detect`, { text, category });
}

export interface NeutralizePayload {
  text: string;
  category: string;
  control?: number[];
  merge: MergeRule;
}

export async function neutralize(
  server: string,
  payload: NeutralizePayload,
  fetchFn: FetchFn = fetch,
): Promise<NeutralizeResponse> {
  return post(fetchFn, `${server}/api/neutralize`, payload);
}

export async function health(
  server: string,
  fetchFn: FetchFn = fetch,
): Promise<{ status: string; model: string }> {
  const resp = await fetchFn(`${server}/api/health`);
  if (!resp.ok) throw new ApiError(`http-${resp.status}`, "health check failed");
  return (await resp.json()) as { status: string; model: string };
}
