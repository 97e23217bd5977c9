/** Stateful fetch substitute replaying recorded reader-service responses. */

import fx from "./fixtures/session.json";

export interface FakeService {
  fetchFn: typeof fetch;
  posted: { judgments: any[]; arbitrations: any[] };
  offline: boolean;
  expectedCall(readerId: string, caseId: string): string;
  arbitrationCall(caseId: string): string;
  arbitrateDirect(caseId: string): void;
  fixture: typeof fx;
}

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function createFakeService(opts: { judgmentsDone?: boolean } = {}): FakeService {
  const nextCursor: Record<string, number> = { reader_a: 0, reader_b: 0 };
  const judged = new Set<string>();
  if (opts.judgmentsDone) {
    for (const j of fx.judgments) {
      judged.add(`${j.request.reader_id}:${j.request.case_id}`);
    }
    nextCursor.reader_a = fx.next.reader_a.length - 1;
    nextCursor.reader_b = fx.next.reader_b.length - 1;
  }
  const judgmentByKey = new Map(
    fx.judgments.map((j) => [`${j.request.reader_id}:${j.request.case_id}`, j]),
  );
  const arbitrationByCase = new Map(
    fx.arbitrations.map((a) => [a.request.case_id, a]),
  );
  const arbitrated = new Set<string>();

  const service: FakeService = {
    posted: { judgments: [], arbitrations: [] },
    offline: false,
    fixture: fx,
    expectedCall: (readerId, caseId) =>
      judgmentByKey.get(`${readerId}:${caseId}`)!.request.call,
    arbitrationCall: (caseId) => arbitrationByCase.get(caseId)!.request.call,
    arbitrateDirect: (caseId) => {
      arbitrated.add(caseId);
    },
    fetchFn: (async (input: RequestInfo | URL, init?: RequestInit) => {
      if (service.offline) throw new TypeError("network error");
      const url = new URL(String(input), "http://service.test");
      const method = init?.method ?? "GET";
      const body = init?.body ? JSON.parse(String(init.body)) : null;

      if (method === "GET" && /^\/sessions\/[^/]+\/next$/.test(url.pathname)) {
        const reader = url.searchParams.get("reader")!;
        return json(fx.next[reader as "reader_a" | "reader_b"][nextCursor[reader]]);
      }
      if (method === "POST" && url.pathname === "/judgments") {
        const key = `${body.reader_id}:${body.case_id}`;
        const rec = judgmentByKey.get(key);
        if (!rec) return json({ detail: `unknown case ${body.case_id}` }, 404);
        if (judged.has(key)) {
          return json({ detail: `already judged ${body.case_id}` }, 409);
        }
        if (rec.request.call !== body.call) {
          return json({ detail: "call diverges from recording" }, 400);
        }
        judged.add(key);
        nextCursor[body.reader_id] += 1;
        service.posted.judgments.push(body);
        return json(rec.response);
      }
      if (method === "GET" && /^\/sessions\/[^/]+\/conflicts$/.test(url.pathname)) {
        const k = arbitrated.size;
        return json(k === 0 ? fx.conflicts_before : fx.conflicts_after_each[k - 1]);
      }
      if (method === "POST" && url.pathname === "/arbitrations") {
        const rec = arbitrationByCase.get(body.case_id);
        if (!rec) return json({ detail: `unknown case ${body.case_id}` }, 404);
        if (arbitrated.has(body.case_id)) {
          return json(fx.arbitration_resolved_error.body,
                      fx.arbitration_resolved_error.status);
        }
        arbitrated.add(body.case_id);
        service.posted.arbitrations.push(body);
        return json(rec.response);
      }
      if (method === "GET" && /^\/sessions\/[^/]+\/report$/.test(url.pathname)) {
        if (arbitrated.size < fx.arbitrations.length) {
          return json(fx.report_unresolved.body, fx.report_unresolved.status);
        }
        return json(fx.report);
      }
      return json({ detail: `unrecorded route ${method} ${url.pathname}` }, 404);
    }) as typeof fetch,
  };
  return service;
}

export async function flush(): Promise<void> {
  for (let i = 0; i < 8; i += 1) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}
