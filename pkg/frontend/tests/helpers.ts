/** In-memory stand-ins for fetch and localStorage used by the unit tests. */
import { FetchLike } from "../src/api.js";
import { KeyValueStore } from "../src/flow.js";

export class MemoryStorage implements KeyValueStore {
  private map = new Map<string, string>();

  getItem(key: string): string | null {
    return this.map.get(key) ?? null;
  }

  setItem(key: string, value: string): void {
    this.map.set(key, value);
  }

  removeItem(key: string): void {
    this.map.delete(key);
  }
}

export interface FakeServerState {
  questionCount: number;
  sessions: Map<string, Map<number, number>>; // id -> question -> position
  failNext: { count: number };
  requests: string[];
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

/** Minimal in-memory service honoring the documented API shapes. */
export function makeFakeServer(questionCount = 11): {
  fetchFn: FetchLike;
  state: FakeServerState;
} {
  const state: FakeServerState = {
    questionCount,
    sessions: new Map(),
    failNext: { count: 0 },
    requests: [],
  };
  let counter = 0;

  const fetchFn: FetchLike = async (input, init) => {
    const method = init?.method ?? "GET";
    const path = input.replace(/^https?:\/\/[^/]+/, "");
    state.requests.push(`${method} ${path}`);
    if (state.failNext.count > 0) {
      state.failNext.count -= 1;
      throw new TypeError("network down");
    }

    if (method === "POST" && path === "/api/sessions") {
      const id = `fake-${counter++}`;
      state.sessions.set(id, new Map());
      return json(201, { session_id: id, question_count: questionCount });
    }

    let match = path.match(/^\/api\/sessions\/([^/]+)$/);
    if (match && method === "GET") {
      const answers = state.sessions.get(match[1]);
      if (!answers) return json(404, { code: "unknown_session", message: "?" });
      return json(200, {
        session_id: match[1],
        question_count: questionCount,
        answered: [...answers.keys()].sort((a, b) => a - b),
      });
    }

    match = path.match(/^\/api\/sessions\/([^/]+)\/questions\/(\d+)$/);
    if (match && method === "GET") {
      const answers = state.sessions.get(match[1]);
      if (!answers) return json(404, { code: "unknown_session", message: "?" });
      const index = Number(match[2]);
      if (index < 1 || index > questionCount) {
        return json(400, { code: "bad_request", message: "index" });
      }
      return json(200, {
        question_index: index,
        question_count: questionCount,
        images: [1, 2, 3].map((k) => `/images/q${index}_${k}.png`),
      });
    }

    match = path.match(/^\/api\/sessions\/([^/]+)\/questions\/(\d+)\/choice$/);
    if (match && method === "POST") {
      const answers = state.sessions.get(match[1]);
      if (!answers) return json(404, { code: "unknown_session", message: "?" });
      const index = Number(match[2]);
      const position = JSON.parse(String(init?.body ?? "{}")).position;
      if (![1, 2, 3].includes(position)) {
        return json(400, { code: "bad_request", message: "position" });
      }
      const existing = answers.get(index);
      if (existing !== undefined && existing !== position) {
        return json(409, { code: "already_answered", message: "locked" });
      }
      answers.set(index, position);
      return json(200, { ok: true, question_index: index, position });
    }

    return json(404, { code: "not_found", message: path });
  };

  return { fetchFn, state };
}
