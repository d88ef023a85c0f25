export function buildResultsView(payload) {
    const methods = Object.keys(payload.method_percentages).sort();
    const perQuestion = payload.question_counts.map((counts, i) => ({
        question: i + 1,
        bars: methods.map((method) => ({
            method,
            count: counts[method] ?? 0,
            label: String(counts[method] ?? 0),
        })),
    }));
    const maxCount = Math.max(1, ...perQuestion.flatMap((q) => q.bars.map((b) => b.count)));
    return {
        methods,
        participantLabel: String(payload.participant_count),
        completedLabel: String(payload.completed_count),
        perQuestion,
        percentages: methods.map((method) => ({
            method,
            value: payload.method_percentages[method],
            label: String(payload.method_percentages[method]),
        })),
        maxCount,
    };
}
