/** Participant state machine: one forced choice per question, in order.
 *
 * All transitions live here so the DOM layer stays declarative. A network
 * failure parks the machine in an "error" state whose retry() re-runs the
 * failed transition without losing the session or the pending selection.
 */
import { ApiError } from "./api.js";
const SESSION_KEY = "platesr-study-session";
export class ParticipantFlow {
    constructor(api, storage) {
        this.api = api;
        this.storage = storage;
        this.state = { kind: "idle" };
        this.sessionId = null;
        this.questionCount = 0;
        this.answered = new Set();
        this.retryAction = null;
        this.listeners = [];
    }
    getState() {
        return this.state;
    }
    onChange(listener) {
        this.listeners.push(listener);
    }
    setState(state) {
        this.state = state;
        for (const listener of this.listeners)
            listener(state);
    }
    fail(error, retry) {
        this.retryAction = retry;
        const message = error instanceof Error ? error.message : "request failed";
        this.setState({ kind: "error", message });
    }
    /** Re-run whatever transition last failed. */
    async retry() {
        const action = this.retryAction;
        if (action)
            await action();
    }
    /** Create or resume a session, then show the first unanswered question. */
    async start() {
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
                }
                catch (error) {
                    // a vanished session (e.g. wiped server data) starts over; a
                    // network failure must NOT discard the stored id
                    if (!(error instanceof ApiError && error.status === 404))
                        throw error;
                    this.storage.removeItem(SESSION_KEY);
                }
            }
            const created = await this.api.createSession();
            this.sessionId = created.session_id;
            this.questionCount = created.question_count;
            this.answered = new Set();
            this.storage.setItem(SESSION_KEY, created.session_id);
            await this.showNext();
        }
        catch (error) {
            this.fail(error, () => this.start());
        }
    }
    firstUnanswered() {
        for (let index = 1; index <= this.questionCount; index++) {
            if (!this.answered.has(index))
                return index;
        }
        return null;
    }
    async showNext() {
        const next = this.firstUnanswered();
        if (next === null) {
            this.setState({ kind: "done", count: this.questionCount });
            return;
        }
        const payload = await this.api.getQuestion(this.sessionId, next);
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
    select(position) {
        if (this.state.kind !== "question" || this.state.submitting)
            return;
        if (position < 1 || position > 3)
            return;
        this.setState({ ...this.state, selected: position });
    }
    /** Submit the current selection; double calls while in flight are dropped. */
    async submit() {
        if (this.state.kind !== "question")
            return;
        const { index, selected, submitting } = this.state;
        if (selected === null || submitting)
            return;
        this.setState({ ...this.state, submitting: true });
        try {
            await this.api.submitChoice(this.sessionId, index, selected);
            this.answered.add(index);
            await this.showNext();
        }
        catch (error) {
            if (error instanceof ApiError && error.status === 409) {
                // answered in another tab: accept the recorded answer and move on
                this.answered.add(index);
                await this.showNext();
                return;
            }
            this.fail(error, () => this.reload(index, selected));
        }
    }
    async reload(index, selected) {
        try {
            const payload = await this.api.getQuestion(this.sessionId, index);
            this.setState({
                kind: "question",
                index: payload.question_index,
                count: payload.question_count,
                images: payload.images,
                selected,
                submitting: false,
            });
        }
        catch (error) {
            this.fail(error, () => this.reload(index, selected));
        }
    }
}
