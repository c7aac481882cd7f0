/**
 * In-memory stand-in for the gateway: answers /centroids and /knn with the
 * server's exact semantics (prefix-sorted groups; distance-then-prefix
 * ordering, k clamped) over injected data, while recording every request so
 * tests can assert what the UI asked for — and that it asked nothing else.
 */

import type { Centroid, FetchLike } from "../src/api.js";

export type RequestLog = {
  path: string;
  params: URLSearchParams;
};

const SOURCE = "federation/root;targets=shard-all";

export class FixtureGateway {
  requests: RequestLog[] = [];
  /** Peak concurrent non-aborted requests, per kind. */
  maxInFlight: Record<string, number> = {};
  private inFlight: Record<string, number> = {};
  private gates: Record<string, Promise<void> | undefined> = {};
  private failures: Record<string, { status: number; type: string; message: string } | undefined> = {};

  constructor(private centroidsForZoom: (zoom: number) => Centroid[]) {}

  /** Hold the next request of this kind until the given promise resolves. */
  delayNext(kind: "centroids" | "knn", gate: Promise<void>): void {
    this.gates[kind] = gate;
  }

  /** Make the next request of this kind fail with a gateway-shaped error. */
  failNext(kind: "centroids" | "knn", status: number, type: string, message: string): void {
    this.failures[kind] = { status, type, message };
  }

  requestsFor(kind: string): RequestLog[] {
    return this.requests.filter((r) => r.path === `/${kind}`);
  }

  fetch: FetchLike = async (input, init) => {
    const url = new URL(input, "http://fixture");
    const path = url.pathname;
    const kind = path.slice(1);
    const params = url.searchParams;
    this.requests.push({ path, params });

    // count a request as in-flight only until it settles *or* is aborted —
    // an aborted request is dead the moment the client moves on
    this.inFlight[kind] = (this.inFlight[kind] ?? 0) + 1;
    this.maxInFlight[kind] = Math.max(this.maxInFlight[kind] ?? 0, this.inFlight[kind]!);
    let active = true;
    const retire = () => {
      if (active) {
        active = false;
        this.inFlight[kind]! -= 1;
      }
    };
    init?.signal?.addEventListener("abort", retire, { once: true });

    try {
      const gate = this.gates[kind];
      if (gate) {
        this.gates[kind] = undefined;
        await Promise.race([gate, rejectOnAbort(init?.signal)]);
      }
      if (init?.signal?.aborted) throw abortError();

      const failure = this.failures[kind];
      if (failure) {
        this.failures[kind] = undefined;
        return json({ error: { message: failure.message, type: failure.type } }, failure.status);
      }

      if (path === "/centroids") return json(this.centroidsBody(params));
      if (path === "/knn") return json(this.knnBody(params));
      return json({ error: { message: "Not Found", type: "HTTPError" } }, 404);
    } finally {
      retire();
    }
  };

  private centroidsBody(params: URLSearchParams) {
    const zoom = Number(params.get("zoom"));
    const cents = this.centroidsForZoom(zoom);
    return { centroids: cents, total: cents.length, zoom };
  }

  private knnBody(params: URLSearchParams) {
    const zoom = Number(params.get("zoom"));
    const k = Number(params.get("k"));
    const lon = Number(params.get("lon") ?? "0");
    const lat = Number(params.get("lat") ?? "0");
    const ranked = this.centroidsForZoom(zoom)
      .map((c) => ({ ...c, distance: Math.hypot(c.lon - lon, c.lat - lat) }))
      .sort((a, b) => a.distance - b.distance || a.prefix.localeCompare(b.prefix))
      .slice(0, Math.max(k, 0));
    return {
      address: { lon, lat },
      k,
      neighbours: ranked,
      total: ranked.length,
      zoom,
    };
  }
}

function json(body: unknown, status = 200): Response {
  return {
    ok: status >= 200 && status < 300,
    status,
    headers: { get: (name: string) => (name.toLowerCase() === "x-fdbs-source" ? SOURCE : null) },
    json: async () => body,
  } as unknown as Response;
}

function abortError(): Error {
  return new DOMException("aborted", "AbortError");
}

function rejectOnAbort(signal: AbortSignal | null | undefined): Promise<never> {
  return new Promise((_, reject) => {
    if (!signal) return; // never settles; the gate side wins
    if (signal.aborted) reject(abortError());
    signal.addEventListener("abort", () => reject(abortError()), { once: true });
  });
}

/** Deterministic fixture datasets. */

export function tenPrefixCentroids(): Centroid[] {
  // one group per leading digit, like a first-digit zoom over a full dataset
  return Array.from({ length: 10 }, (_, i) => ({
    prefix: String(i),
    lon: -135 + i * 30,
    lat: ((i % 5) - 2) * 20,
  }));
}

export function fiftyRecordCentroids(): Centroid[] {
  // 50 distinct full postcodes -> 50 singleton groups at max zoom
  return Array.from({ length: 50 }, (_, i) => ({
    prefix: String(10000 + i * 137),
    lon: -170 + i * 6.8,
    lat: -60 + ((i * 7) % 120),
  }));
}

/** Bucket by the gateway's zoom policy: coarse below 11, one per record above. */
export function defaultZoomData(zoom: number): Centroid[] {
  return zoom >= 11 ? fiftyRecordCentroids() : tenPrefixCentroids();
}
