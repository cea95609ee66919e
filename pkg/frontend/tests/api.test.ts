import { describe, expect, it } from "vitest";

import { ApiClient, ApiError, DecisionOutbox } from "../src/api.js";
import type { Decision } from "../src/types.js";

function decision(id = "s01", ts = 1.0): Decision {
  return {
    sample_id: id,
    verdict: "accept",
    reviewer: "rev1",
    timestamp: ts,
    layer_rejects: [],
    note: "",
  };
}

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("decision outbox", () => {
  it("delivers immediately when online", async () => {
    const posts: string[] = [];
    const client = new ApiClient("http://svc", async (url, init) => {
      posts.push(String(init?.body));
      return jsonResponse({ status: "ok", deduplicated: false });
    });
    const outbox = new DecisionOutbox(client);
    const result = await outbox.submit(decision());
    expect(result.delivered).toBe(true);
    expect(outbox.pending).toHaveLength(0);
    expect(posts).toHaveLength(1);
  });

  it("queues on network failure and redelivers exactly once on flush", async () => {
    let online = false;
    const received: Decision[] = [];
    const client = new ApiClient("http://svc", async (_url, init) => {
      if (!online) throw new TypeError("fetch failed");
      const body = JSON.parse(String(init?.body)) as Decision;
      const duplicate = received.some(
        (d) =>
          d.sample_id === body.sample_id &&
          d.reviewer === body.reviewer &&
          d.timestamp === body.timestamp,
      );
      if (!duplicate) received.push(body);
      return jsonResponse({ status: "ok", deduplicated: duplicate });
    });
    const pendingCounts: number[] = [];
    const outbox = new DecisionOutbox(client, (n) => pendingCounts.push(n));

    const offline = await outbox.submit(decision("s01", 7.5));
    expect(offline.delivered).toBe(false);
    expect(outbox.pending).toHaveLength(1);

    expect(await outbox.flush()).toBe(0); // still offline; nothing lost
    expect(outbox.pending).toHaveLength(1);

    online = true;
    expect(await outbox.flush()).toBe(1);
    expect(outbox.pending).toHaveLength(0);
    expect(received).toHaveLength(1);
    expect(received[0].timestamp).toBe(7.5); // identical idempotency key, not a new draft

    expect(await outbox.flush()).toBe(0); // nothing left: exactly-once
    expect(received).toHaveLength(1);
    expect(pendingCounts.at(-1)).toBe(0);
  });

  it("does not queue server-side rejections", async () => {
    const client = new ApiClient("http://svc", async () => jsonResponse({ errors: [] }, 400));
    const outbox = new DecisionOutbox(client);
    await expect(outbox.submit(decision())).rejects.toBeInstanceOf(ApiError);
    expect(outbox.pending).toHaveLength(0);
  });

  it("flush preserves order across multiple pending decisions", async () => {
    let online = false;
    const order: string[] = [];
    const client = new ApiClient("http://svc", async (_url, init) => {
      if (!online) throw new TypeError("offline");
      order.push((JSON.parse(String(init?.body)) as Decision).sample_id);
      return jsonResponse({ status: "ok", deduplicated: false });
    });
    const outbox = new DecisionOutbox(client);
    await outbox.submit(decision("a", 1));
    await outbox.submit(decision("b", 2));
    await outbox.submit(decision("c", 3));
    online = true;
    expect(await outbox.flush()).toBe(3);
    expect(order).toEqual(["a", "b", "c"]);
  });
});
