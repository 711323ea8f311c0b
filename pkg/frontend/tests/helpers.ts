/** Shared test scaffolding: a recording fake fetch and artifact factories. */

import { Artifact, FetchLike } from "../src/api.js";

export interface RecordedCall {
  method: string;
  path: string;
  body: unknown;
}

export interface FakeResponseSpec {
  status?: number;
  json: unknown;
}

export type RouteHandler = (
  call: RecordedCall,
) => FakeResponseSpec | undefined;

export interface FakeFetch {
  fetch: FetchLike;
  calls: RecordedCall[];
}

/** A fetch whose responses come from `handler`; every call is recorded.
 * Returning undefined from the handler produces a 404. */
export function fakeFetch(handler: RouteHandler): FakeFetch {
  const calls: RecordedCall[] = [];
  const fetch: FetchLike = async (input, init) => {
    const url = new URL(input);
    const call: RecordedCall = {
      method: init?.method ?? "GET",
      path: url.pathname + url.search,
      body: init?.body === undefined ? undefined : JSON.parse(String(init.body)),
    };
    calls.push(call);
    const spec = handler(call) ?? {
      status: 404,
      json: { error: "not_found", message: `no route for ${call.path}` },
    };
    return new Response(JSON.stringify(spec.json), {
      status: spec.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
  return { fetch, calls };
}

let artifactCounter = 0;

export function makeArtifact(overrides: Partial<Artifact> = {}): Artifact {
  artifactCounter += 1;
  return {
    artifact_id: `art-${String(artifactCounter).padStart(6, "0")}`,
    sku: "sku-1",
    description: "a warm lamp that makes every room feel calm .",
    text: "a warm lamp that makes every room feel calm .",
    candidates: [
      { text: "a warm lamp that makes every room feel calm .", score: -0.42 },
      { text: "a warm lamp for calm rooms .", score: -0.97 },
    ],
    provenance: "model",
    model_version: "abc123def456",
    verdict: { accepted: true, reasons: [] },
    screening_state: "pending",
    edited_text: null,
    created_at: 1700000000.0,
    reviewed_at: null,
    ...overrides,
  };
}

/** A promise with its resolver exposed, for holding a fetch in flight. */
export function deferred<T>(): {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (reason?: unknown) => void;
} {
  let resolve!: (value: T) => void;
  let reject!: (reason?: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}
