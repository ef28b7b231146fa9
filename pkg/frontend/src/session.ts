/**
 * One live chat session over either transport.
 *
 * WebSocket mode: the first server frame is the bootstrap; afterwards the
 * server pushes one batch per update and log deltas are the new lines
 * (applied newest-first). Request/response mode: the bootstrap comes from
 * POST /frp/bootstrap and every outbound batch is one POST exchange whose
 * response carries the refreshed log in full — so a submission includes a
 * pacing pulse and sees its own message in the same round trip.
 *
 * Each inbound batch is validated whole before any state changes, and
 * produces exactly one onUpdate call; a malformed frame moves the session to
 * the error state without rendering a partial update.
 */

import {
  BatchFrame,
  BootFrame,
  ChatNodes,
  ManifestView,
  ProtocolError,
  WireMessage,
  encodeBatch,
  locateChatNodes,
  parseFrame,
  parseManifest,
} from "./protocol.js";

export type Mode = "ws" | "xhr";

export interface ChatState {
  status: "connecting" | "live" | "closed" | "error";
  error: string | null;
  client: string | null;
  mode: Mode | null;
  log: string[];
  extras: Record<number, unknown>;
}

/** Minimal WebSocket surface so tests can inject an implementation. */
export interface WebSocketLike {
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev: unknown) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: ((ev: unknown) => void) | null;
  send(data: string): void;
  close(): void;
}

export interface SessionOptions {
  url: string;
  mode?: "auto" | Mode;
  onUpdate: (state: ChatState) => void;
  /** capture hook for conformance tests: direction is "in" or "out" */
  onFrame?: (direction: "in" | "out", text: string) => void;
  wsFactory?: (url: string) => WebSocketLike;
  fetchFn?: typeof fetch;
  /** polling period for request/response mode, seconds; 0 disables */
  pollSeconds?: number;
}

export class ChatSession {
  readonly state: ChatState = {
    status: "connecting",
    error: null,
    client: null,
    mode: null,
    log: [],
    extras: {},
  };
  manifest: ManifestView | null = null;
  nodes: ChatNodes | null = null;

  private readonly opts: SessionOptions;
  private readonly fetchFn: typeof fetch;
  private ws: WebSocketLike | null = null;
  private cycle = 0;
  private polls = 0;
  private pollTimer: ReturnType<typeof setInterval> | null = null;
  private exchangeChain: Promise<void> = Promise.resolve();

  constructor(opts: SessionOptions) {
    this.opts = opts;
    this.fetchFn = opts.fetchFn ?? fetch.bind(globalThis);
  }

  async connect(): Promise<void> {
    try {
      const base = this.opts.url.replace(/\/$/, "");
      const resp = await this.fetchFn(base + "/frp/manifest");
      if (!resp.ok) throw new ProtocolError(`manifest fetch failed: ${resp.status}`);
      this.manifest = parseManifest(await resp.json());
      this.nodes = locateChatNodes(this.manifest);
      const mode = this.opts.mode ?? "auto";
      if (mode === "ws" || mode === "auto") {
        try {
          await this.connectWebSocket(base);
          return;
        } catch (exc) {
          if (mode === "ws") throw exc;
        }
      }
      await this.connectXhr(base);
    } catch (exc) {
      this.fault(String(exc));
      throw exc;
    }
  }

  submit(name: string, message: string): void {
    if (this.state.status !== "live" || !this.nodes) {
      this.fault("cannot submit: session is not live");
      return;
    }
    const messages: WireMessage[] = [
      { n: this.nodes.messageSource, p: { name, message } },
    ];
    if (this.state.mode === "xhr" && this.nodes.pacing !== null) {
      // Pacing pulse rides along so the response carries the updated log.
      messages.push({ n: this.nodes.pacing, p: this.nextPacingValue() });
    }
    this.sendBatch(messages);
  }

  close(): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
    if (this.ws) this.ws.close();
    if (this.state.status !== "error") {
      this.state.status = "closed";
      this.opts.onUpdate(this.state);
    }
  }

  // -- websocket ---------------------------------------------------------

  private connectWebSocket(base: string): Promise<void> {
    const wsUrl = base.replace(/^http/, "ws") + "/frp/ws";
    const factory =
      this.opts.wsFactory ??
      ((url: string) => new (globalThis as { WebSocket: new (u: string) => WebSocketLike }).WebSocket(url));
    return new Promise((resolve, reject) => {
      let settled = false;
      const ws = factory(wsUrl);
      ws.onerror = (ev) => {
        if (!settled) {
          settled = true;
          reject(new ProtocolError(`websocket failed: ${ev}`));
        } else {
          this.fault("websocket error");
        }
      };
      ws.onclose = () => {
        if (!settled) {
          settled = true;
          reject(new ProtocolError("websocket closed before bootstrap"));
        } else if (this.state.status === "live") {
          this.state.status = "closed";
          this.opts.onUpdate(this.state);
        }
      };
      ws.onmessage = (ev) => {
        const text = String(ev.data);
        this.opts.onFrame?.("in", text);
        if (!settled) {
          try {
            this.applyBootstrap(parseFrame(text));
            this.ws = ws;
            this.state.mode = "ws";
            settled = true;
            resolve();
          } catch (exc) {
            settled = true;
            ws.close();
            reject(exc);
          }
          return;
        }
        this.applyServerFrame(text);
      };
    });
  }

  // -- request/response --------------------------------------------------

  private async connectXhr(base: string): Promise<void> {
    const resp = await this.fetchFn(base + "/frp/bootstrap", { method: "POST" });
    if (!resp.ok) throw new ProtocolError(`bootstrap failed: ${resp.status}`);
    const text = await resp.text();
    this.opts.onFrame?.("in", text);
    this.applyBootstrap(parseFrame(text));
    this.state.mode = "xhr";
    const period = this.opts.pollSeconds ?? 0.5;
    if (period > 0 && this.nodes?.pacing !== null) {
      this.pollTimer = setInterval(() => this.poll(), period * 1000);
    }
  }

  /** One unsolicited poll: just the pacing pulse, to pick up others' posts. */
  poll(): void {
    if (this.state.status !== "live" || !this.nodes || this.nodes.pacing === null) return;
    this.sendBatch([{ n: this.nodes.pacing, p: this.nextPacingValue() }]);
  }

  private nextPacingValue(): number {
    this.polls += 1;
    return this.polls * (this.opts.pollSeconds ?? 0.5);
  }

  // -- shared ------------------------------------------------------------

  private sendBatch(messages: WireMessage[]): void {
    this.cycle += 1;
    const frame = encodeBatch(this.cycle, messages);
    this.opts.onFrame?.("out", frame);
    if (this.state.mode === "ws") {
      try {
        this.ws!.send(frame);
      } catch (exc) {
        this.fault(`send failed: ${exc}`);
      }
      return;
    }
    const base = this.opts.url.replace(/\/$/, "");
    const url = `${base}/frp/exchange?client=${this.state.client}`;
    // Exchanges are strictly ordered: each waits for the previous response.
    this.exchangeChain = this.exchangeChain.then(async () => {
      try {
        const resp = await this.fetchFn(url, {
          method: "POST",
          headers: { "Content-Type": "application/json" },
          body: frame,
        });
        if (!resp.ok) throw new ProtocolError(`exchange failed: ${resp.status}`);
        const body = await resp.text();
        if (body.length === 0) return; // nothing crossed back this cycle
        this.opts.onFrame?.("in", body);
        this.applyServerFrame(body);
      } catch (exc) {
        this.fault(String(exc));
      }
    });
  }

  private applyBootstrap(frame: BatchFrame | BootFrame): void {
    if (frame.t !== "boot") throw new ProtocolError("expected a bootstrap frame first");
    if (!this.manifest || frame.v !== this.manifest.version) {
      throw new ProtocolError(
        `manifest version mismatch: server ${frame.v}, manifest ${this.manifest?.version}`,
      );
    }
    const updates = this.decodeUpdates(frame.vals, true);
    this.state.client = frame.client;
    this.state.status = "live";
    this.commit(updates);
  }

  private applyServerFrame(text: string): void {
    let updates: Array<(s: ChatState) => void>;
    try {
      const frame = parseFrame(text);
      if (frame.t !== "batch") throw new ProtocolError("expected a batch frame");
      updates = this.decodeUpdates(frame.m, false);
    } catch (exc) {
      this.fault(String(exc));
      return;
    }
    this.commit(updates);
  }

  /** Validate a whole frame into state mutations; throws before touching state. */
  private decodeUpdates(messages: WireMessage[], bootstrap: boolean): Array<(s: ChatState) => void> {
    const nodes = this.nodes!;
    const updates: Array<(s: ChatState) => void> = [];
    for (const m of messages) {
      if (m.n === nodes.log) {
        const lines = m.p;
        if (!Array.isArray(lines) || lines.some((x) => typeof x !== "string")) {
          throw new ProtocolError(`log payload is not a string list: ${JSON.stringify(m.p)}`);
        }
        if (bootstrap || this.state.mode === "xhr") {
          // full value: the bootstrap, or a polled snapshot
          updates.push((s) => (s.log = lines as string[]));
        } else {
          // push-mode delta: the new lines, newest first
          updates.push((s) => (s.log = (lines as string[]).concat(s.log)));
        }
      } else if (nodes.extras.some((e) => e.node === m.n)) {
        updates.push((s) => (s.extras[m.n] = m.p));
      } else {
        throw new ProtocolError(`frame names unknown node ${m.n}`);
      }
    }
    return updates;
  }

  private commit(updates: Array<(s: ChatState) => void>): void {
    for (const apply of updates) apply(this.state);
    this.opts.onUpdate(this.state); // exactly one render per inbound frame
  }

  private fault(message: string): void {
    this.state.status = "error";
    this.state.error = message;
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = null;
    this.opts.onUpdate(this.state);
  }
}
