import { Api } from "./api.js";
import { App } from "./app.js";

declare global {
  interface Window {
    COADAPT_SERVICE_URL?: string;
  }
}

function serviceUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("service");
  return fromQuery ?? window.COADAPT_SERVICE_URL ?? "http://127.0.0.1:8000";
}

const root = document.getElementById("app");
if (root) {
  const app = new App(root, new Api(serviceUrl()));
  void app.start();
}
