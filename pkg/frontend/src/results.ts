/** Results-view model: a pure reshape of GET /api/results for rendering.
 *
 * No aggregation happens here; every displayed number is the payload value
 * itself (labels are String() of the raw value, so what renders is
 * byte-equal to what the service reported).
 */
import { ResultsPayload } from "./api.js";

export interface QuestionBars {
  question: number; // 1-based
  bars: Array<{ method: string; count: number; label: string }>;
}

export interface ResultsViewModel {
  methods: string[];
  participantLabel: string;
  completedLabel: string;
  perQuestion: QuestionBars[];
  percentages: Array<{ method: string; value: number; label: string }>;
  maxCount: number;
}

export function buildResultsView(payload: ResultsPayload): ResultsViewModel {
  const methods = Object.keys(payload.method_percentages).sort();
  const perQuestion: QuestionBars[] = payload.question_counts.map(
    (counts, i) => ({
      question: i + 1,
      bars: methods.map((method) => ({
        method,
        count: counts[method] ?? 0,
        label: String(counts[method] ?? 0),
      })),
    }),
  );
  const maxCount = Math.max(
    1,
    ...perQuestion.flatMap((q) => q.bars.map((b) => b.count)),
  );
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
