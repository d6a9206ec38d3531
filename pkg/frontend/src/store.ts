import type { PoolResponse, SessionSnapshot, StepResponse, StreamEvent,
              Transport } from "./types.js";

export type Connection = "idle" | "connecting" | "ready" | "error";

export interface LogEntry {
  step: number;
  text: string;
}

/**
 * Client-side session state. The store is the single source of truth for
 * rendering: pool toggles mirror the server mask only after an acknowledged
 * command, the value curve is append-only (stream events are deduplicated
 * by sequence number), and at most one pool request per ticker is in
 * flight, extra clicks queue behind it.
 */
export class SessionStore {
  connection: Connection = "idle";
  connectionError = "";
  sessionId = "";
  universe: string[] = [];
  poolSelected: boolean[] = [];
  step = 0;
  exhausted = false;
  curve: number[] = [];
  dates: string[] = [];
  weights: number[] | null = null;
  eventLog: LogEntry[] = [];
  playing = false;
  playCadenceMs = 500;
  pendingTickers = new Set<string>();

  private lastSeq = -1;
  private closeStream: (() => void) | null = null;
  private tickerChains = new Map<string, Promise<void>>();
  private tickerQueued = new Set<string>();
  private listeners = new Set<() => void>();
  private playTimer: ReturnType<typeof setTimeout> | null = null;

  constructor(private readonly transport: Transport,
              private readonly options: { split?: string; temperature?: number } = {}) {}

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Load the universe, open (or re-attach to) a session, subscribe events. */
  async connect(existingSessionId?: string): Promise<void> {
    this.connection = "connecting";
    this.notify();
    try {
      const universe = await this.transport.request<{ tickers: string[] }>(
        "GET", "/universe");
      this.universe = universe.tickers;
      const snapshot = existingSessionId
        ? await this.transport.request<SessionSnapshot>(
            "GET", `/sessions/${existingSessionId}`)
        : await this.transport.request<SessionSnapshot>("POST", "/sessions", {
            split: this.options.split,
            temperature: this.options.temperature,
          });
      this.applySnapshot(snapshot);
      this.openStream();
      this.connection = "ready";
      this.connectionError = "";
    } catch (error) {
      this.connection = "error";
      this.connectionError = error instanceof Error ? error.message : String(error);
    }
    this.notify();
  }

  /** Rebuild state from a full snapshot (initial load and reconnects). */
  private applySnapshot(snapshot: SessionSnapshot): void {
    this.sessionId = snapshot.id;
    this.poolSelected = [...snapshot.mask];
    this.step = snapshot.step;
    this.exhausted = snapshot.exhausted;
    this.curve = [...snapshot.values];
    this.dates = [...snapshot.dates];
    this.weights = snapshot.weights ? [...snapshot.weights] : null;
    // history replay will re-deliver everything; seq dedup keeps the curve
    // free of duplicates, so reset the cursor to replay cleanly
    this.lastSeq = -1;
    this.eventLog = snapshot.pool_log.map((entry) => ({
      step: entry.step,
      text: `pool ${entry.add.length ? "+" + entry.add.join(",") : ""}` +
            `${entry.remove.length ? " -" + entry.remove.join(",") : ""}`.trim(),
    }));
  }

  private openStream(): void {
    this.closeStream?.();
    this.closeStream = this.transport.openStream(
      `/sessions/${this.sessionId}/events`,
      (event) => this.onStreamEvent(event),
      () => this.onStreamError(),
    );
  }

  private onStreamEvent(event: StreamEvent): void {
    if (event.seq <= this.lastSeq) return; // replayed history
    this.lastSeq = event.seq;
    if (event.type === "step") {
      // curve is append-only; the snapshot may already contain this point
      if (event.step >= this.curve.length && event.value !== undefined) {
        this.curve.push(event.value);
      }
      this.step = Math.max(this.step, event.step);
      if (event.weights) this.weights = [...event.weights];
      if (event.mask) this.poolSelected = [...event.mask];
    } else if (event.type === "pool") {
      if (event.mask) this.poolSelected = [...event.mask];
      const added = event.add?.length ? `+${event.add.join(",")}` : "";
      const removed = event.remove?.length ? `-${event.remove.join(",")}` : "";
      this.eventLog.push({ step: event.step, text: `pool ${added} ${removed}`.trim() });
    }
    this.notify();
  }

  private async onStreamError(): Promise<void> {
    if (!this.sessionId) return;
    try {
      const snapshot = await this.transport.request<SessionSnapshot>(
        "GET", `/sessions/${this.sessionId}`);
      this.applySnapshot(snapshot);
      this.openStream();
      this.connection = "ready";
    } catch (error) {
      this.connection = "error";
      this.connectionError = error instanceof Error ? error.message : String(error);
    }
    this.notify();
  }

  selectedCount(): number {
    return this.poolSelected.filter(Boolean).length;
  }

  /**
   * Toggle a ticker in/out of the pool. The toggle chip only flips once the
   * server acknowledges; rejections surface in the event log. Rapid clicks
   * on the same ticker queue exactly one follow-up request.
   */
  toggleStock(ticker: string): Promise<void> {
    const slot = this.universe.indexOf(ticker);
    if (slot < 0) return Promise.resolve();
    if (this.pendingTickers.has(ticker)) {
      if (this.tickerQueued.has(ticker)) return this.tickerChains.get(ticker)!;
      this.tickerQueued.add(ticker);
      const chained = (this.tickerChains.get(ticker) ?? Promise.resolve())
        .then(() => {
          this.tickerQueued.delete(ticker);
          return this.issueToggle(ticker, slot);
        });
      this.tickerChains.set(ticker, chained);
      return chained;
    }
    const request = this.issueToggle(ticker, slot);
    this.tickerChains.set(ticker, request);
    return request;
  }

  private async issueToggle(ticker: string, slot: number): Promise<void> {
    const removing = this.poolSelected[slot];
    if (removing && this.selectedCount() <= 1) {
      this.eventLog.push({ step: this.step,
                           text: `blocked: cannot empty the pool (${ticker})` });
      this.notify();
      return;
    }
    this.pendingTickers.add(ticker);
    this.notify();
    try {
      const body = removing ? { remove: [ticker] } : { add: [ticker] };
      const response = await this.transport.request<PoolResponse>(
        "POST", `/sessions/${this.sessionId}/pool`, body);
      this.poolSelected = [...response.mask];
    } catch (error) {
      const reason = error instanceof Error ? error.message : String(error);
      this.eventLog.push({ step: this.step, text: `rejected: ${reason}` });
    } finally {
      this.pendingTickers.delete(ticker);
      this.notify();
    }
  }

  /** Advance the session; curve points arrive through the event stream. */
  async stepSession(count: number): Promise<void> {
    if (this.exhausted || count <= 0) return;
    try {
      const response = await this.transport.request<StepResponse>(
        "POST", `/sessions/${this.sessionId}/step`, { count });
      this.step = response.step;
      this.exhausted = response.exhausted;
      if (response.weights) this.weights = [...response.weights];
    } catch (error) {
      const reason = error instanceof Error ? error.message : String(error);
      this.eventLog.push({ step: this.step, text: `step failed: ${reason}` });
    }
    this.notify();
  }

  play(): void {
    if (this.playing || this.exhausted) return;
    this.playing = true;
    this.notify();
    const tick = async () => {
      if (!this.playing) return;
      await this.stepSession(1);
      if (this.exhausted) {
        this.pause();
        return;
      }
      this.playTimer = setTimeout(tick, this.playCadenceMs);
    };
    void tick();
  }

  pause(): void {
    this.playing = false;
    if (this.playTimer !== null) {
      clearTimeout(this.playTimer);
      this.playTimer = null;
    }
    this.notify();
  }

  dispose(): void {
    this.pause();
    this.closeStream?.();
    this.closeStream = null;
  }
}
