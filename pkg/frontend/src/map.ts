/**
 * The map surface: an SVG viewport with a plain graticule base layer, one
 * marker per centroid, and a distinct highlight ring for kNN results.
 *
 * Rendering is dumb on purpose: markers appear in response order at the
 * projected response coordinates, nothing is computed from record data.
 * A tile endpoint can be configured for a real base map; without one the
 * graticule keeps everything working offline.
 */

export type MarkerDatum = { prefix: string; lon: number; lat: number };

export type MapOptions = {
  width?: number;
  height?: number;
  /** e.g. "https://tile.example/{z}/{x}/{y}.png"; empty = graticule only */
  tileUrlTemplate?: string;
  graticuleStepDeg?: number;
};

const SVG_NS = "http://www.w3.org/2000/svg";

export class MapView {
  readonly svg: SVGSVGElement;
  private markerLayer: SVGGElement;
  private width: number;
  private height: number;
  private clickHandlers: Array<(lon: number, lat: number) => void> = [];

  constructor(container: HTMLElement, options: MapOptions = {}) {
    this.width = options.width ?? 720;
    this.height = options.height ?? 360;
    this.svg = document.createElementNS(SVG_NS, "svg");
    this.svg.setAttribute("viewBox", `0 0 ${this.width} ${this.height}`);
    this.svg.setAttribute("width", String(this.width));
    this.svg.setAttribute("height", String(this.height));
    this.svg.classList.add("fdbs-map");
    container.appendChild(this.svg);

    this.renderBaseLayer(options);
    this.markerLayer = document.createElementNS(SVG_NS, "g");
    this.markerLayer.classList.add("markers");
    this.svg.appendChild(this.markerLayer);

    this.svg.addEventListener("click", (event) => {
      const { lon, lat } = this.unproject(this.eventPoint(event));
      for (const handler of this.clickHandlers) handler(lon, lat);
    });
  }

  onClick(handler: (lon: number, lat: number) => void): void {
    this.clickHandlers.push(handler);
  }

  /** Equirectangular: the whole world fills the viewport. */
  project(lon: number, lat: number): { x: number; y: number } {
    return {
      x: ((lon + 180) / 360) * this.width,
      y: ((90 - lat) / 180) * this.height,
    };
  }

  unproject(point: { x: number; y: number }): { lon: number; lat: number } {
    return {
      lon: (point.x / this.width) * 360 - 180,
      lat: 90 - (point.y / this.height) * 180,
    };
  }

  /** Replace all markers, in the given (response) order. */
  renderMarkers(data: MarkerDatum[]): void {
    this.markerLayer.replaceChildren();
    for (const datum of data) {
      const { x, y } = this.project(datum.lon, datum.lat);
      const marker = document.createElementNS(SVG_NS, "circle");
      marker.classList.add("marker");
      marker.setAttribute("cx", String(x));
      marker.setAttribute("cy", String(y));
      marker.setAttribute("r", "4");
      marker.dataset.prefix = datum.prefix;
      marker.dataset.lon = String(datum.lon);
      marker.dataset.lat = String(datum.lat);
      this.markerLayer.appendChild(marker);
    }
  }

  /** Highlight exactly these prefixes; everything else goes back to normal. */
  highlight(prefixes: Iterable<string>): void {
    const wanted = new Set(prefixes);
    for (const marker of this.markers()) {
      marker.classList.toggle("highlighted", wanted.has(marker.dataset.prefix ?? ""));
    }
  }

  /** Mark the current markers as possibly out of date (failed refresh). */
  setStale(stale: boolean): void {
    this.markerLayer.classList.toggle("stale", stale);
  }

  isStale(): boolean {
    return this.markerLayer.classList.contains("stale");
  }

  markers(): SVGCircleElement[] {
    return Array.from(this.markerLayer.querySelectorAll("circle.marker"));
  }

  highlighted(): SVGCircleElement[] {
    return this.markers().filter((m) => m.classList.contains("highlighted"));
  }

  private eventPoint(event: MouseEvent): { x: number; y: number } {
    // getBoundingClientRect is zero-sized under jsdom; fall back to the
    // viewBox-sized surface so synthetic clicks still map to coordinates
    const rect = this.svg.getBoundingClientRect();
    const w = rect.width || this.width;
    const h = rect.height || this.height;
    return {
      x: ((event.clientX - rect.left) / w) * this.width,
      y: ((event.clientY - rect.top) / h) * this.height,
    };
  }

  private renderBaseLayer(options: MapOptions): void {
    const base = document.createElementNS(SVG_NS, "g");
    base.classList.add("base-layer");
    this.svg.appendChild(base);

    if (options.tileUrlTemplate) {
      // single world tile is enough for the fixed viewport; a full slippy
      // pyramid is out of scope for a read-only overview map
      const tile = document.createElementNS(SVG_NS, "image");
      tile.setAttribute("href", options.tileUrlTemplate.replace("{z}", "0").replace("{x}", "0").replace("{y}", "0"));
      tile.setAttribute("width", String(this.width));
      tile.setAttribute("height", String(this.height));
      base.appendChild(tile);
      return;
    }

    const step = options.graticuleStepDeg ?? 30;
    for (let lon = -180; lon <= 180; lon += step) {
      const { x } = this.project(lon, 0);
      base.appendChild(this.line(x, 0, x, this.height, lon === 0));
    }
    for (let lat = -90; lat <= 90; lat += step) {
      const { y } = this.project(0, lat);
      base.appendChild(this.line(0, y, this.width, y, lat === 0));
    }
  }

  private line(x1: number, y1: number, x2: number, y2: number, axis: boolean): SVGLineElement {
    const line = document.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(x1));
    line.setAttribute("y1", String(y1));
    line.setAttribute("x2", String(x2));
    line.setAttribute("y2", String(y2));
    line.classList.add(axis ? "graticule-axis" : "graticule");
    return line;
  }
}
