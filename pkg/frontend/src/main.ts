import { HttpTransport } from "./api.js";
import { SessionStore } from "./store.js";
import { mountDashboard } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8700";

const store = new SessionStore(new HttpTransport(baseUrl), {
  split: params.get("split") ?? undefined,
});
mountDashboard(document.getElementById("app")!, store);
void store.connect(params.get("session") ?? undefined);
