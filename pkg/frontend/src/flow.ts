/** Participant state machine: one forced choice per question, in order.
 *
 * All transitions live here so the DOM layer stays declarative. A network
 * failure parks the machine in an "error" state whose retry() re-runs the
 * failed transition without losing the session or the pending selection.
 */
import { ApiError, QuestionPayload, StudyApi } from "./api.js";

export interface KeyValueStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const SESSION_KEY = "platesr-study-session";

export type FlowState =
  | { kind: "idle" }
  | { kind: "loading" }
  | {
      kind: "question";
      index: number;
      count: number;
      images: string[];
      selected: number | null;
      submitting: boolean;
    }
  | { kind: "done"; count: number }
  | { kind: "error"; message: string };

export class ParticipantFlow {
  private state: FlowState = { kind: "idle" };
  private sessionId: string | null = null;
  private questionCount = 0;
  private answered = new Set<number>();
  private retryAction: (() => Promise<void>) | null = null;
  private listeners: Array<(state: FlowState) => void> = [];

  constructor(
    private api: StudyApi,
    private storage: KeyValueStore,
  ) {}

  getState(): FlowState {
    return this.state;
  }

  onChange(listener: (state: FlowState) => void): void {
    this.listeners.push(listener);
  }

  private setState(state: FlowState): void {
    this.state = state;
    for (const listener of this.listeners) listener(state);
  }

  private fail(error: unknown, retry: () => Promise<void>): void {
    this.retryAction = retry;
    const message =
      error instanceof Error ? error.message : "request failed";
    this.setState({ kind: "error", message });
  }

  /** Re-run whatever transition last failed. */
  async retry(): Promise<void> {
    const action = this.retryAction;
    if (action) await action();
  }

  /** Create or resume a session, then show the first unanswered question. */
  async start(): Promise<void> {
    this.setState({ kind: "loading" });
    try {
      const storedId = this.storage.getItem(SESSION_KEY);
      if (storedId) {
        try {
          const session = await this.api.getSession(storedId);
          this.sessionId = session.session_id;
          this.questionCount = session.question_count;
          this.answered = new Set(session.answered);
          await this.showNext();
          return;
        } catch (error) {
          // a vanished session (e.g. wiped server data) starts over; a
          // network failure must NOT discard the stored id
          if (!(error instanceof ApiError && error.status === 404)) throw error;
          this.storage.removeItem(SESSION_KEY);
        }
      }
      const created = await this.api.createSession();
      this.sessionId = created.session_id;
      this.questionCount = created.question_count;
      this.answered = new Set();
      this.storage.setItem(SESSION_KEY, created.session_id);
      await this.showNext();
    } catch (error) {
      this.fail(error, () => this.start());
    }
  }

  private firstUnanswered(): number | null {
    for (let index = 1; index <= this.questionCount; index++) {
      if (!this.answered.has(index)) return index;
    }
    return null;
  }

  private async showNext(): Promise<void> {
    const next = this.firstUnanswered();
    if (next === null) {
      this.setState({ kind: "done", count: this.questionCount });
      return;
    }
    const payload: QuestionPayload = await this.api.getQuestion(
      this.sessionId!,
      next,
    );
    this.setState({
      kind: "question",
      index: payload.question_index,
      count: payload.question_count,
      images: payload.images,
      selected: null,
      submitting: false,
    });
  }

  /** Select one of the three displayed positions (1..3). */
  select(position: number): void {
    if (this.state.kind !== "question" || this.state.submitting) return;
    if (position < 1 || position > 3) return;
    this.setState({ ...this.state, selected: position });
  }

  /** Submit the current selection; double calls while in flight are dropped. */
  async submit(): Promise<void> {
    if (this.state.kind !== "question") return;
    const { index, selected, submitting } = this.state;
    if (selected === null || submitting) return;
    this.setState({ ...this.state, submitting: true });
    try {
      await this.api.submitChoice(this.sessionId!, index, selected);
      this.answered.add(index);
      await this.showNext();
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        // answered in another tab: accept the recorded answer and move on
        this.answered.add(index);
        await this.showNext();
        return;
      }
      this.fail(error, () => this.reload(index, selected));
    }
  }

  private async reload(index: number, selected: number | null): Promise<void> {
    try {
      const payload = await this.api.getQuestion(this.sessionId!, index);
      this.setState({
        kind: "question",
        index: payload.question_index,
        count: payload.question_count,
        images: payload.images,
        selected,
        submitting: false,
      });
    } catch (error) {
      this.fail(error, () => this.reload(index, selected));
    }
  }
}
