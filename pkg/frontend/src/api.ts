/** Typed client of the study service HTTP API. No logic beyond transport. */

export interface SessionCreated {
  session_id: string;
  question_count: number;
}

export interface SessionState {
  session_id: string;
  question_count: number;
  answered: number[];
}

export interface QuestionPayload {
  question_index: number;
  question_count: number;
  images: string[];
}

export interface ResultsPayload {
  question_counts: Record<string, number>[];
  method_percentages: Record<string, number>;
  participant_count: number;
  completed_count: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function parse<T>(response: Response): Promise<T> {
  const text = await response.text();
  if (!response.ok) {
    let code = "http_error";
    let message = text;
    try {
      const body = JSON.parse(text);
      code = body.code ?? code;
      message = body.message ?? message;
    } catch {
      /* non-JSON error body: keep raw text */
    }
    throw new ApiError(response.status, code, message);
  }
  return JSON.parse(text) as T;
}

export class StudyApi {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  url(path: string): string {
    return `${this.base}${path}`;
  }

  async createSession(participantLabel?: string): Promise<SessionCreated> {
    const response = await this.fetchFn(this.url("/api/sessions"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(
        participantLabel ? { participant_label: participantLabel } : {},
      ),
    });
    return parse<SessionCreated>(response);
  }

  async getSession(sessionId: string): Promise<SessionState> {
    const response = await this.fetchFn(this.url(`/api/sessions/${sessionId}`));
    return parse<SessionState>(response);
  }

  async getQuestion(sessionId: string, index: number): Promise<QuestionPayload> {
    const response = await this.fetchFn(
      this.url(`/api/sessions/${sessionId}/questions/${index}`),
    );
    return parse<QuestionPayload>(response);
  }

  async submitChoice(
    sessionId: string,
    index: number,
    position: number,
  ): Promise<void> {
    const response = await this.fetchFn(
      this.url(`/api/sessions/${sessionId}/questions/${index}/choice`),
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ position }),
      },
    );
    await parse<unknown>(response);
  }

  async getResults(): Promise<ResultsPayload> {
    const response = await this.fetchFn(this.url("/api/results"));
    return parse<ResultsPayload>(response);
  }

  /** Raw body of GET /api/results, for byte-level comparisons. */
  async getResultsRaw(): Promise<string> {
    const response = await this.fetchFn(this.url("/api/results"));
    if (!response.ok) {
      throw new ApiError(response.status, "http_error", await response.text());
    }
    return response.text();
  }
}
