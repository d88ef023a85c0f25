/** Typed client of the study service HTTP API. No logic beyond transport. */
export class ApiError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
async function parse(response) {
    const text = await response.text();
    if (!response.ok) {
        let code = "http_error";
        let message = text;
        try {
            const body = JSON.parse(text);
            code = body.code ?? code;
            message = body.message ?? message;
        }
        catch {
            /* non-JSON error body: keep raw text */
        }
        throw new ApiError(response.status, code, message);
    }
    return JSON.parse(text);
}
export class StudyApi {
    constructor(base, fetchFn = (input, init) => fetch(input, init)) {
        this.base = base;
        this.fetchFn = fetchFn;
    }
    url(path) {
        return `${this.base}${path}`;
    }
    async createSession(participantLabel) {
        const response = await this.fetchFn(this.url("/api/sessions"), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(participantLabel ? { participant_label: participantLabel } : {}),
        });
        return parse(response);
    }
    async getSession(sessionId) {
        const response = await this.fetchFn(this.url(`/api/sessions/${sessionId}`));
        return parse(response);
    }
    async getQuestion(sessionId, index) {
        const response = await this.fetchFn(this.url(`/api/sessions/${sessionId}/questions/${index}`));
        return parse(response);
    }
    async submitChoice(sessionId, index, position) {
        const response = await this.fetchFn(this.url(`/api/sessions/${sessionId}/questions/${index}/choice`), {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ position }),
        });
        await parse(response);
    }
    async getResults() {
        const response = await this.fetchFn(this.url("/api/results"));
        return parse(response);
    }
    /** Raw body of GET /api/results, for byte-level comparisons. */
    async getResultsRaw() {
        const response = await this.fetchFn(this.url("/api/results"));
        if (!response.ok) {
            throw new ApiError(response.status, "http_error", await response.text());
        }
        return response.text();
    }
}
