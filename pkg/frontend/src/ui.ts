import type { SessionStore } from "./store.js";

/** DOM rendering only; all behavior lives in the store. */
export function mountDashboard(root: HTMLElement, store: SessionStore): void {
  root.innerHTML = `
    <header>
      <h1>earnmore steering</h1>
      <div id="status" class="status"></div>
    </header>
    <section id="universe-section">
      <h2>Stock pool</h2>
      <div id="universe" class="chips"></div>
    </section>
    <section>
      <h2>Portfolio value</h2>
      <svg id="curve" viewBox="0 0 600 220" preserveAspectRatio="none"></svg>
      <div id="curve-meta" class="meta"></div>
    </section>
    <section>
      <h2>Allocation</h2>
      <div id="bars"></div>
    </section>
    <section>
      <div class="controls">
        <button id="step1">step 1</button>
        <button id="step5">step 5</button>
        <button id="play">play</button>
        <button id="pause">pause</button>
        <label>cadence <select id="cadence">
          <option value="1000">1s</option>
          <option value="500" selected>0.5s</option>
          <option value="150">0.15s</option>
        </select></label>
      </div>
    </section>
    <section>
      <h2>Event log</h2>
      <ul id="log"></ul>
    </section>`;

  const el = <T extends HTMLElement>(id: string) =>
    root.querySelector<T>(`#${id}`)!;

  el<HTMLButtonElement>("step1").onclick = () => void store.stepSession(1);
  el<HTMLButtonElement>("step5").onclick = () => void store.stepSession(5);
  el<HTMLButtonElement>("play").onclick = () => store.play();
  el<HTMLButtonElement>("pause").onclick = () => store.pause();
  el<HTMLSelectElement>("cadence").onchange = (event) => {
    store.playCadenceMs = Number((event.target as HTMLSelectElement).value);
  };

  const render = () => {
    const status = el("status");
    if (store.connection === "error") {
      status.textContent = `connection error: ${store.connectionError} `;
      const retry = document.createElement("button");
      retry.textContent = "retry";
      retry.onclick = () => void store.connect(store.sessionId || undefined);
      status.appendChild(retry);
    } else {
      status.textContent = store.connection === "ready"
        ? `session ${store.sessionId} · step ${store.step}` +
          (store.exhausted ? " · exhausted" : "")
        : store.connection;
    }

    const universe = el("universe");
    universe.innerHTML = "";
    store.universe.forEach((ticker, slot) => {
      const chip = document.createElement("button");
      chip.className = "chip" +
        (store.poolSelected[slot] ? " on" : " off") +
        (store.pendingTickers.has(ticker) ? " pending" : "");
      chip.textContent = ticker;
      chip.onclick = () => void store.toggleStock(ticker);
      universe.appendChild(chip);
    });

    renderCurve(el<HTMLElement>("curve"), store.curve);
    el("curve-meta").textContent = store.curve.length
      ? `${store.curve.length} points · last ${store.curve[store.curve.length - 1].toFixed(4)}`
      : "no data";
    renderBars(el("bars"), store);

    const log = el("log");
    log.innerHTML = "";
    for (const entry of [...store.eventLog].reverse().slice(0, 50)) {
      const item = document.createElement("li");
      item.textContent = `step ${entry.step}: ${entry.text}`;
      log.appendChild(item);
    }

    el<HTMLButtonElement>("step1").disabled = store.exhausted;
    el<HTMLButtonElement>("step5").disabled = store.exhausted;
    el<HTMLButtonElement>("play").disabled = store.exhausted || store.playing;
    el<HTMLButtonElement>("pause").disabled = !store.playing;
  };

  store.subscribe(render);
  render();
}

function renderCurve(svg: HTMLElement, curve: number[]): void {
  if (curve.length < 2) {
    svg.innerHTML = "";
    return;
  }
  const lo = Math.min(...curve);
  const hi = Math.max(...curve);
  const span = hi - lo || 1;
  const points = curve.map((v, i) => {
    const x = (i / (curve.length - 1)) * 600;
    const y = 210 - ((v - lo) / span) * 200;
    return `${x.toFixed(2)},${y.toFixed(2)}`;
  });
  svg.innerHTML = `<polyline fill="none" stroke="#2c7" stroke-width="2" ` +
    `points="${points.join(" ")}"/>`;
}

function renderBars(container: HTMLElement, store: SessionStore): void {
  container.innerHTML = "";
  if (!store.weights) {
    container.textContent = "no allocation yet — step the session";
    return;
  }
  const labels = ["cash", ...store.universe];
  store.weights.forEach((weight, i) => {
    const row = document.createElement("div");
    row.className = "bar-row" + (i === 0 ? " cash" : "");
    const label = document.createElement("span");
    label.className = "bar-label";
    label.textContent = labels[i] ?? `slot ${i}`;
    const track = document.createElement("div");
    track.className = "bar-track";
    const fill = document.createElement("div");
    fill.className = "bar-fill";
    fill.style.width = `${(weight * 100).toFixed(2)}%`;
    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = `${(weight * 100).toFixed(2)}%`;
    track.appendChild(fill);
    row.append(label, track, value);
    container.appendChild(row);
  });
}
