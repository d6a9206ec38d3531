import type { StreamEvent, Transport } from "./types.js";

/** fetch + EventSource transport against a running steering service. */
export class HttpTransport implements Transport {
  constructor(private readonly baseUrl: string) {}

  async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new Error(payload.error ?? `HTTP ${response.status}`);
    }
    return payload as T;
  }

  openStream(path: string, onEvent: (event: StreamEvent) => void,
             onError?: () => void): () => void {
    const source = new EventSource(this.baseUrl + path);
    source.onmessage = (message) => {
      onEvent(JSON.parse(message.data) as StreamEvent);
    };
    source.onerror = () => onError?.();
    return () => source.close();
  }
}
