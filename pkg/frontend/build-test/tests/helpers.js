export class MemoryStorage {
    constructor() {
        this.map = new Map();
    }
    getItem(key) {
        return this.map.get(key) ?? null;
    }
    setItem(key, value) {
        this.map.set(key, value);
    }
    removeItem(key) {
        this.map.delete(key);
    }
}
function json(status, body) {
    return new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
    });
}
/** Minimal in-memory service honoring the documented API shapes. */
export function makeFakeServer(questionCount = 11) {
    const state = {
        questionCount,
        sessions: new Map(),
        failNext: { count: 0 },
        requests: [],
    };
    let counter = 0;
    const fetchFn = async (input, init) => {
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
            if (!answers)
                return json(404, { code: "unknown_session", message: "?" });
            return json(200, {
                session_id: match[1],
                question_count: questionCount,
                answered: [...answers.keys()].sort((a, b) => a - b),
            });
        }
        match = path.match(/^\/api\/sessions\/([^/]+)\/questions\/(\d+)$/);
        if (match && method === "GET") {
            const answers = state.sessions.get(match[1]);
            if (!answers)
                return json(404, { code: "unknown_session", message: "?" });
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
            if (!answers)
                return json(404, { code: "unknown_session", message: "?" });
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
