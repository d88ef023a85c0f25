import assert from "node:assert/strict";
import { test } from "node:test";
import { buildResultsView } from "../src/results.js";
const payload = {
    question_counts: [
        { ours: 46, swinir: 3, esrgan: 1 },
        { ours: 44, swinir: 6, esrgan: 0 },
    ],
    method_percentages: { ours: 90.0, swinir: 9.0, esrgan: 1.0 },
    participant_count: 50,
    completed_count: 48,
};
test("view model is a pure reshape of the payload", () => {
    const view = buildResultsView(payload);
    assert.deepEqual(view.methods, ["esrgan", "ours", "swinir"]);
    assert.equal(view.perQuestion.length, 2);
    assert.equal(view.perQuestion[0].question, 1);
    for (const [qi, counts] of payload.question_counts.entries()) {
        for (const bar of view.perQuestion[qi].bars) {
            assert.equal(bar.count, counts[bar.method]);
            assert.equal(bar.label, String(counts[bar.method]));
        }
    }
    for (const p of view.percentages) {
        assert.equal(p.value, payload.method_percentages[p.method]);
        assert.equal(p.label, String(payload.method_percentages[p.method]));
    }
    assert.equal(view.participantLabel, "50");
    assert.equal(view.completedLabel, "48");
    assert.equal(view.maxCount, 46);
});
test("empty study renders zeros", () => {
    const empty = {
        question_counts: [{ ours: 0, swinir: 0, esrgan: 0 }],
        method_percentages: { ours: 0.0, swinir: 0.0, esrgan: 0.0 },
        participant_count: 0,
        completed_count: 0,
    };
    const view = buildResultsView(empty);
    assert.ok(view.perQuestion[0].bars.every((b) => b.count === 0));
    assert.ok(view.percentages.every((p) => p.value === 0));
    assert.equal(view.maxCount, 1); // avoids division by zero in bar widths
});
test("missing methods in a question row count as zero", () => {
    const sparse = {
        question_counts: [{ ours: 2 }],
        method_percentages: { ours: 100.0, swinir: 0.0 },
        participant_count: 2,
        completed_count: 2,
    };
    const view = buildResultsView(sparse);
    const bySlug = Object.fromEntries(view.perQuestion[0].bars.map((b) => [b.method, b.count]));
    assert.deepEqual(bySlug, { ours: 2, swinir: 0 });
});
