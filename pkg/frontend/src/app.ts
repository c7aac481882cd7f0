/**
 * Event wiring between the map surface and the gateway.
 *
 * State is (zoom, address, k). Zoom changes refresh the centroid markers;
 * clicks and k changes refresh the k-nearest highlights. Each refresh goes
 * through the client's supersession, so a stale response never touches the
 * DOM — the catch for Superseded below is the entire concurrency story.
 *
 * On a gateway failure the previous markers stay up but are flagged stale,
 * and the error surfaces through onStatus (the banner in main.ts).
 */

import {
  CentroidsResponse,
  Enveloped,
  GatewayClient,
  KnnResponse,
  Predicate,
  Superseded,
} from "./api.js";
import { MapView } from "./map.js";

export type AppOptions = {
  initialZoom?: number;
  initialK?: number;
  predicate?: Predicate;
  /** Called with an error message on failure, null once recovered. */
  onStatus?: (error: string | null) => void;
};

export class MapApp {
  zoom: number;
  k: number;
  address: { lon: number; lat: number } | null = null;
  readonly predicate?: Predicate;

  /** Most recent successfully rendered payload, source trace included. */
  lastResponse: Enveloped<CentroidsResponse> | Enveloped<KnnResponse> | null = null;
  lastError: string | null = null;

  /** How many responses actually rendered; tests watch this. */
  renders = { centroids: 0, knn: 0 };

  private onStatus?: (error: string | null) => void;

  constructor(
    readonly client: GatewayClient,
    readonly view: MapView,
    options: AppOptions = {},
  ) {
    this.zoom = options.initialZoom ?? 3;
    this.k = options.initialK ?? 1;
    this.predicate = options.predicate;
    this.onStatus = options.onStatus;
    view.onClick((lon, lat) => void this.onMapClicked(lon, lat));
  }

  /** Initial load: draw markers for the starting zoom. */
  async start(): Promise<void> {
    await this.refreshCentroids();
  }

  async onZoomChanged(zoom: number): Promise<void> {
    if (!Number.isInteger(zoom) || zoom < 0) return; // widget gives integers; guard anyway
    this.zoom = zoom;
    await this.refreshCentroids();
    if (this.address !== null) await this.refreshKnn();
  }

  async onMapClicked(lon: number, lat: number): Promise<void> {
    this.address = { lon, lat };
    await this.refreshKnn();
  }

  /** Invalid k never leaves the client: no request, state unchanged. */
  async onKChanged(k: number): Promise<boolean> {
    if (!Number.isInteger(k) || k < 0) return false;
    this.k = k;
    if (this.address !== null) await this.refreshKnn();
    return true;
  }

  private async refreshCentroids(): Promise<void> {
    let response;
    try {
      response = await this.client.getCentroids(this.zoom, this.predicate);
    } catch (err) {
      if (!(err instanceof Superseded)) this.fail(err);
      return;
    }
    this.view.renderMarkers(response.centroids);
    this.view.highlight([]); // old highlights are meaningless on new markers
    this.rendered(response);
    this.renders.centroids += 1;
  }

  private async refreshKnn(): Promise<void> {
    if (this.address === null) return;
    let response;
    try {
      response = await this.client.getKnn(this.zoom, this.address, this.k, this.predicate);
    } catch (err) {
      if (!(err instanceof Superseded)) this.fail(err);
      return;
    }
    this.view.highlight(response.neighbours.map((n) => n.prefix));
    this.rendered(response);
    this.renders.knn += 1;
  }

  private rendered(response: NonNullable<MapApp["lastResponse"]>): void {
    this.lastResponse = response;
    this.lastError = null;
    this.view.setStale(false);
    this.onStatus?.(null);
  }

  /** Keep the stale markers visible but flagged, and surface the message. */
  private fail(err: unknown): void {
    this.lastError = err instanceof Error ? err.message : String(err);
    this.view.setStale(true);
    this.onStatus?.(this.lastError);
  }
}
