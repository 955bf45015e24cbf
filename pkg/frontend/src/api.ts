/** Typed client for the explorer service, plus the request scheduling
 * primitives the input streams rely on: a trailing debounce and a
 * sequence-number gate that discards stale responses. The client never
 * transforms geometry; callers receive the service payload as parsed.
 */

export interface ServiceInfo {
  latent_dim: number;
  sigma_object: number[];
  conditions: string[][];
  corpus_size: number;
  bbox: { min: number[]; max: number[]; diagonal: number };
  n_vertices: number;
}

export interface MeshPayload {
  vertices: number[][];
  faces?: number[][];
}

export interface ModelPayload extends MeshPayload {
  mu: number[];
  name: string;
  labels?: string[];
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`service error ${status}: ${detail}`);
  }
}

async function asJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: unknown };
      if (body.detail !== undefined) detail = JSON.stringify(body.detail);
    } catch {
      /* non-JSON error body: keep the status text */
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly base = "",
    private readonly fetcher: typeof fetch = fetch,
  ) {}

  private get(path: string): Promise<Response> {
    return this.fetcher(`${this.base}${path}`);
  }

  private post(path: string, body: unknown): Promise<Response> {
    return this.fetcher(`${this.base}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  async info(): Promise<ServiceInfo> {
    return asJson(await this.get("/api/info"));
  }

  async topology(): Promise<{ n_vertices: number; faces: number[][] }> {
    return asJson(await this.get("/api/topology"));
  }

  async decode(
    code: number[],
    condition: string[] | null = null,
    verticesOnly = true,
  ): Promise<MeshPayload> {
    return asJson(
      await this.post("/api/decode", {
        code,
        condition,
        vertices_only: verticesOnly,
      }),
    );
  }

  /** OBJ text rendered by the service itself, passed through verbatim so
   * an export is byte-identical to the CLI writing the same code. */
  async decodeObj(code: number[], condition: string[] | null = null): Promise<string> {
    const body = await asJson<{ obj: string }>(
      await this.post("/api/decode", { code, condition, format: "obj" }),
    );
    return body.obj;
  }

  async grid(
    dims: [number, number],
    baseCode: number[],
    range: [number, number],
    resolution: number,
    condition: string[] | null = null,
  ): Promise<{ resolution: number; cells: MeshPayload[][] }> {
    return asJson(
      await this.post("/api/grid", {
        dims,
        base_code: baseCode,
        range,
        resolution,
        condition,
        vertices_only: true,
      }),
    );
  }

  async interpolate(
    aCode: number[],
    bCode: number[],
    steps: number,
    condition: string[] | null = null,
  ): Promise<{ frames: MeshPayload[] }> {
    return asJson(
      await this.post("/api/interpolate", {
        a_code: aCode,
        b_code: bCode,
        steps,
        condition,
        vertices_only: true,
      }),
    );
  }

  async model(k: number): Promise<ModelPayload> {
    return asJson(await this.get(`/api/model/${k}`));
  }
}

/** Newest-wins gate: each call takes the next sequence number, and a
 * result is delivered only if no newer call started meanwhile. */
export class LatestGate {
  private seq = 0;

  async run<T>(task: () => Promise<T>): Promise<T | undefined> {
    const ticket = ++this.seq;
    const value = await task();
    return ticket === this.seq ? value : undefined;
  }

  get pendingTicket(): number {
    return this.seq;
  }
}

/** Trailing-edge debounce; at most one underlying call per `ms` window. */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  ms: number,
): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    if (timer !== undefined) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = undefined;
      fn(...args);
    }, ms);
  };
}
