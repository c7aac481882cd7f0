/**
 * Typed client for the gateway's read API.
 *
 * One outstanding request per query kind: issuing a new centroids (or knn)
 * request aborts the previous one, and responses carry a sequence number so
 * a caller can drop anything stale that still managed to resolve. The UI
 * never computes marker data itself — everything comes back from here.
 */

export type Centroid = {
  prefix: string;
  lon: number;
  lat: number;
};

export type Neighbour = Centroid & { distance: number };

export type CentroidsResponse = {
  centroids: Centroid[];
  total: number;
  zoom: number;
};

export type KnnResponse = {
  address: { lon: number; lat: number };
  k: number;
  neighbours: Neighbour[];
  total: number;
  zoom: number;
};

export type Predicate = {
  prefix?: string;
  theme?: string;
  bbox?: [number, number, number, number];
};

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class GatewayError extends Error {
  constructor(
    readonly status: number,
    readonly type: string,
    message: string,
  ) {
    super(message);
  }
}

/** Request was superseded by a newer one of the same kind. */
export class Superseded extends Error {
  constructor() {
    super("superseded by a newer request");
  }
}

type QueryKind = "centroids" | "knn";

/** Response payload plus client bookkeeping: sequence number and the
 * gateway's answering-node trace (the x-fdbs-source header), when present. */
export type Enveloped<T> = T & { seq: number; source?: string };

export class GatewayClient {
  private controllers: Partial<Record<QueryKind, AbortController>> = {};
  private sequences: Record<QueryKind, number> = { centroids: 0, knn: 0 };
  private fetchFn: FetchLike;

  constructor(
    readonly endpoint: string,
    fetchFn?: FetchLike,
  ) {
    // injectable for tests; bind because bare fetch loses its receiver
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async getCentroids(zoom: number, pred?: Predicate): Promise<Enveloped<CentroidsResponse>> {
    const params = this.predicateParams(pred);
    params.set("zoom", String(zoom));
    return this.issue("centroids", `/centroids?${params}`);
  }

  async getKnn(
    zoom: number,
    address: { lon: number; lat: number },
    k: number,
    pred?: Predicate,
  ): Promise<Enveloped<KnnResponse>> {
    const params = this.predicateParams(pred);
    params.set("zoom", String(zoom));
    params.set("k", String(k));
    params.set("lon", String(address.lon));
    params.set("lat", String(address.lat));
    return this.issue("knn", `/knn?${params}`);
  }

  /** Sequence number of the newest request of this kind (stale = smaller). */
  latestSeq(kind: QueryKind): number {
    return this.sequences[kind];
  }

  private predicateParams(pred?: Predicate): URLSearchParams {
    const params = new URLSearchParams();
    if (pred?.prefix !== undefined) params.set("prefix", pred.prefix);
    if (pred?.theme !== undefined) params.set("theme", pred.theme);
    if (pred?.bbox !== undefined) params.set("bbox", pred.bbox.join(","));
    return params;
  }

  private async issue<T>(kind: QueryKind, path: string): Promise<Enveloped<T>> {
    this.controllers[kind]?.abort();
    const controller = new AbortController();
    this.controllers[kind] = controller;
    const seq = ++this.sequences[kind];

    let response: Response;
    try {
      response = await this.fetchFn(this.endpoint + path, { signal: controller.signal });
    } catch (err) {
      if (controller.signal.aborted) throw new Superseded();
      throw err;
    }
    if (seq !== this.sequences[kind]) throw new Superseded();
    if (!response.ok) {
      const body = await response.json().catch(() => null);
      const error = body?.error ?? {};
      throw new GatewayError(response.status, error.type ?? "HTTPError", error.message ?? "request failed");
    }
    const payload = (await response.json()) as T;
    if (seq !== this.sequences[kind]) throw new Superseded();
    const source = response.headers?.get?.("x-fdbs-source") ?? undefined;
    return { ...payload, seq, source };
  }
}
