/**
 * Browser bootstrap: reads the gateway endpoint from ?endpoint= (default
 * same-origin), builds the map plus a minimal zoom/k control strip, and
 * starts the app. Everything interesting lives in app.ts / map.ts.
 */

import { GatewayClient } from "./api.js";
import { MapApp } from "./app.js";
import { MapView } from "./map.js";

function controlStrip(app: MapApp): HTMLElement {
  const strip = document.createElement("div");
  strip.className = "controls";

  const zoomLabel = document.createElement("span");
  const showZoom = () => (zoomLabel.textContent = `zoom ${app.zoom}`);

  const zoomButton = (text: string, delta: number) => {
    const button = document.createElement("button");
    button.textContent = text;
    button.addEventListener("click", () => {
      void app.onZoomChanged(Math.max(0, app.zoom + delta)).then(showZoom);
    });
    return button;
  };

  const kInput = document.createElement("input");
  kInput.type = "number";
  kInput.min = "0";
  kInput.step = "1";
  kInput.value = String(app.k);
  kInput.title = "k nearest centroids";
  kInput.addEventListener("change", () => {
    void app.onKChanged(Number(kInput.value)).then((accepted) => {
      if (!accepted) kInput.value = String(app.k); // snap back, no request
    });
  });

  strip.append(zoomButton("−", -1), zoomLabel, zoomButton("+", +1), kInput);
  showZoom();
  return strip;
}

export function mount(root: HTMLElement, endpoint: string): MapApp {
  const banner = document.createElement("div");
  banner.className = "banner";
  banner.hidden = true;

  const source = document.createElement("div");
  source.className = "source";

  const view = new MapView(root);
  const app = new MapApp(new GatewayClient(endpoint), view, {
    onStatus: (error) => {
      banner.hidden = error === null;
      banner.textContent = error ?? "";
      source.textContent = app.lastResponse?.source ?? "";
    },
  });
  root.prepend(controlStrip(app), banner);
  root.append(source);
  void app.start();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const endpoint =
    new URLSearchParams(location.search).get("endpoint") ?? location.origin;
  mount(document.getElementById("app")!, endpoint);
}
