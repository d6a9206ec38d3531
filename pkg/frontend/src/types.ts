/** Payload shapes of the steering service JSON API. */

export interface SessionSnapshot {
  id: string;
  split: string;
  mode: string;
  step: number;
  exhausted: boolean;
  value: number;
  values: number[];
  dates: string[];
  weights: number[] | null;
  mask: boolean[];
  selected_tickers: string[];
  pool_log: PoolLogEntry[];
  metrics: Record<string, number | null> | null;
}

export interface PoolLogEntry {
  step: number;
  add: string[];
  remove: string[];
  mask: boolean[];
}

export interface StreamEvent {
  seq: number;
  type: "start" | "step" | "pool";
  step: number;
  value?: number;
  weights?: number[];
  mask?: boolean[];
  add?: string[];
  remove?: string[];
}

export interface StepResponse extends SessionSnapshot {
  stepped: number;
}

export interface PoolResponse {
  mask: boolean[];
  selected_tickers: string[];
}

/** Transport seam so tests can run against an in-memory server. */
export interface Transport {
  request<T>(method: string, path: string, body?: unknown): Promise<T>;
  /** Subscribe to a session event stream; returns an unsubscribe handle. */
  openStream(path: string, onEvent: (event: StreamEvent) => void,
             onError?: () => void): () => void;
}
