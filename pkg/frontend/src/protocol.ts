/**
 * Wire protocol types and parsing for the chat client.
 *
 * Everything here is driven by the server's manifest: node identifiers and
 * codec names are discovered, never hard-coded, so the client keeps working
 * when the program is rebuilt and ids shift.
 */

export interface ManifestNode {
  id: number;
  tier: "client" | "session" | "application";
  kind: "event" | "behavior" | "dbehavior" | "ibehavior";
  op: string;
  direction?: "c2s" | "s2c" | "s2a" | "a2s";
  codec?: Record<string, string>;
}

export interface ManifestView {
  version: number;
  mainView: number | null;
  nodes: ManifestNode[];
}

export interface WireMessage {
  n: number;
  p: unknown;
}

export interface BatchFrame {
  t: "batch";
  c: number;
  m: WireMessage[];
}

export interface BootFrame {
  t: "boot";
  client: string;
  v: number;
  vals: WireMessage[];
}

export class ProtocolError extends Error {}

function fail(message: string): never {
  throw new ProtocolError(message);
}

export function parseManifest(raw: unknown): ManifestView {
  if (typeof raw !== "object" || raw === null) fail("manifest is not an object");
  const obj = raw as Record<string, unknown>;
  if (typeof obj.version !== "number" || !Array.isArray(obj.nodes)) {
    fail("manifest missing version or nodes");
  }
  for (const node of obj.nodes as ManifestNode[]) {
    if (typeof node.id !== "number" || typeof node.op !== "string") {
      fail(`malformed manifest node: ${JSON.stringify(node)}`);
    }
  }
  return {
    version: obj.version,
    mainView: (obj.mainView as number | null) ?? null,
    nodes: obj.nodes as ManifestNode[],
  };
}

export function parseFrame(text: string): BatchFrame | BootFrame {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (exc) {
    fail(`frame is not JSON: ${exc}`);
  }
  if (typeof obj !== "object" || obj === null) fail("frame is not an object");
  const tagged = obj as Record<string, unknown>;
  if (tagged.t === "batch") {
    if (typeof tagged.c !== "number" || !Array.isArray(tagged.m)) {
      fail("batch frame missing cycle or messages");
    }
    for (const m of tagged.m as WireMessage[]) {
      if (typeof m !== "object" || m === null || typeof m.n !== "number" || !("p" in m)) {
        fail(`malformed batch message: ${JSON.stringify(m)}`);
      }
    }
    return tagged as unknown as BatchFrame;
  }
  if (tagged.t === "boot") {
    if (typeof tagged.client !== "string" || typeof tagged.v !== "number" || !Array.isArray(tagged.vals)) {
      fail("bootstrap frame missing client, version or values");
    }
    return tagged as unknown as BootFrame;
  }
  fail(`unknown frame type ${JSON.stringify(tagged.t)}`);
}

/** Canonical JSON: sorted keys, no whitespace. Matches the server's frames. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object" && value !== null) {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
    return "{" + entries.join(",") + "}";
  }
  return JSON.stringify(value);
}

export function encodeBatch(cycle: number, messages: WireMessage[]): string {
  return canonicalJson({ t: "batch", c: cycle, m: messages });
}

/** The chat-shaped nodes, located by direction, kind and codec names. */
export interface ChatNodes {
  /** client-to-session event crossing carrying {name, message} records */
  messageSource: number;
  /** client-to-session event crossing pacing the polled variant, if any */
  pacing: number | null;
  /** session-to-client incremental crossing carrying the rendered log */
  log: number;
  /** other session-to-client value crossings, displayed verbatim */
  extras: { node: number; codec: string }[];
}

export function locateChatNodes(manifest: ManifestView): ChatNodes {
  let messageSource: number | null = null;
  let pacing: number | null = null;
  let log: number | null = null;
  const extras: { node: number; codec: string }[] = [];
  for (const node of manifest.nodes) {
    if (node.direction === "c2s" && node.kind === "event") {
      const codec = node.codec?.value;
      if (codec === "message") messageSource = node.id;
      else if (codec === "float" || codec === "int") pacing = node.id;
    }
    if (node.direction === "s2c" && node.kind === "ibehavior") {
      const codec = node.codec?.value;
      if (codec === "list<str>" && log === null) log = node.id;
      else if (codec) extras.push({ node: node.id, codec });
    }
  }
  if (messageSource === null) fail("manifest has no message-record crossing to post to");
  if (log === null) fail("manifest has no log crossing to render");
  return { messageSource, pacing, log, extras };
}
