import assert from "node:assert/strict";
import { test } from "node:test";
import { StudyApi } from "../src/api.js";
import { ParticipantFlow } from "../src/flow.js";
import { MemoryStorage, makeFakeServer } from "./helpers.js";
function makeRig(questionCount = 11) {
    const { fetchFn, state } = makeFakeServer(questionCount);
    const storage = new MemoryStorage();
    const flow = new ParticipantFlow(new StudyApi("", fetchFn), storage);
    const states = [];
    flow.onChange((s) => states.push(s));
    return { flow, state, storage, fetchFn, states };
}
function expectQuestion(flow, index) {
    const s = flow.getState();
    assert.equal(s.kind, "question");
    if (s.kind === "question") {
        assert.equal(s.index, index);
        assert.equal(s.images.length, 3);
    }
}
test("walks all 11 questions in order and finishes", async () => {
    const { flow, state } = makeRig();
    await flow.start();
    for (let q = 1; q <= 11; q++) {
        expectQuestion(flow, q);
        flow.select(((q - 1) % 3) + 1);
        await flow.submit();
    }
    assert.deepEqual(flow.getState(), { kind: "done", count: 11 });
    const answers = [...state.sessions.values()][0];
    assert.equal(answers.size, 11);
});
test("submit without a selection is a no-op", async () => {
    const { flow } = makeRig();
    await flow.start();
    await flow.submit();
    expectQuestion(flow, 1);
});
test("selection outside 1..3 is ignored", async () => {
    const { flow } = makeRig();
    await flow.start();
    flow.select(0);
    flow.select(4);
    const s = flow.getState();
    assert.equal(s.kind === "question" && s.selected, null);
});
test("double submit sends exactly one choice", async () => {
    const { flow, state } = makeRig();
    await flow.start();
    flow.select(2);
    await Promise.all([flow.submit(), flow.submit()]);
    const posts = state.requests.filter((r) => r.includes("/choice"));
    assert.equal(posts.length, 1);
});
test("refresh resumes at the first unanswered question", async () => {
    const rig = makeRig();
    await rig.flow.start();
    for (let q = 1; q <= 4; q++) {
        rig.flow.select(1);
        await rig.flow.submit();
    }
    // "refresh": a fresh flow over the same storage and the same server
    const flow2 = new ParticipantFlow(new StudyApi("", rig.fetchFn), rig.storage);
    await flow2.start();
    expectQuestion(flow2, 5);
    assert.equal(rig.state.sessions.size, 1); // no second session created
});
test("a vanished stored session starts a new one", async () => {
    const rig = makeRig();
    rig.storage.setItem("platesr-study-session", "no-longer-there");
    await rig.flow.start();
    expectQuestion(rig.flow, 1);
    assert.equal(rig.state.sessions.size, 1);
});
test("network failure shows retry and preserves state", async () => {
    const rig = makeRig();
    await rig.flow.start();
    rig.flow.select(3);
    rig.state.failNext.count = 1; // the submit POST dies
    await rig.flow.submit();
    assert.equal(rig.flow.getState().kind, "error");
    await rig.flow.retry();
    const s = rig.flow.getState();
    assert.equal(s.kind, "question");
    if (s.kind === "question") {
        assert.equal(s.index, 1);
        assert.equal(s.selected, 3); // the pending selection survived
    }
    await rig.flow.submit();
    expectQuestion(rig.flow, 2);
    const answers = [...rig.state.sessions.values()][0];
    assert.equal(answers.get(1), 3);
});
test("a 409 from another tab advances instead of erroring", async () => {
    const rig = makeRig();
    await rig.flow.start();
    const sessionId = [...rig.state.sessions.keys()][0];
    rig.state.sessions.get(sessionId).set(1, 2); // answered elsewhere
    rig.flow.select(1);
    await rig.flow.submit();
    expectQuestion(rig.flow, 2);
});
test("startup network failure keeps the stored session for retry", async () => {
    const rig = makeRig();
    await rig.flow.start();
    for (let q = 1; q <= 2; q++) {
        rig.flow.select(1);
        await rig.flow.submit();
    }
    const stored = rig.storage.getItem("platesr-study-session");
    const flow2 = new ParticipantFlow(new StudyApi("", rig.fetchFn), rig.storage);
    rig.state.failNext.count = 1;
    await flow2.start();
    assert.equal(flow2.getState().kind, "error");
    assert.equal(rig.storage.getItem("platesr-study-session"), stored);
    await flow2.retry();
    const s = flow2.getState();
    assert.equal(s.kind === "question" && s.index, 3);
});
