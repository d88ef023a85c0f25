/** DOM wiring: renders the flow state and the results view.
 *
 * Route "" runs the participant flow; "#results" shows the admin charts.
 * Keys 1/2/3 pick a position, Enter submits.
 */
import { StudyApi } from "./api.js";
import { FlowState, ParticipantFlow } from "./flow.js";
import { buildResultsView } from "./results.js";

const api = new StudyApi("");
const root = document.getElementById("app")!;

function el(tag: string, className?: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderFlow(flow: ParticipantFlow, state: FlowState): void {
  root.replaceChildren();
  if (state.kind === "idle" || state.kind === "loading") {
    root.append(el("p", "status", "Loading…"));
    return;
  }
  if (state.kind === "error") {
    const box = el("div", "error-box");
    box.append(el("p", "status", `Connection problem: ${state.message}`));
    const retry = el("button", "retry", "Retry") as HTMLButtonElement;
    retry.addEventListener("click", () => void flow.retry());
    box.append(retry);
    root.append(box);
    return;
  }
  if (state.kind === "done") {
    const box = el("div", "done-box");
    box.append(el("h2", undefined, "All done"));
    box.append(
      el("p", undefined,
         `Thank you! You answered all ${state.count} questions.`),
    );
    root.append(box);
    return;
  }

  const header = el("div", "header");
  header.append(el("h2", undefined, "Pick the clearest, highest-quality image"));
  header.append(
    el("p", "progress", `Question ${state.index} of ${state.count}`),
  );
  root.append(header);

  const row = el("div", "candidates");
  state.images.forEach((src, i) => {
    const position = i + 1;
    const card = el("figure",
                    "card" + (state.selected === position ? " selected" : ""));
    const img = el("img") as HTMLImageElement;
    img.src = src;
    img.alt = `candidate ${position}`;
    img.draggable = false;
    const caption = el("figcaption", undefined, `Press ${position}`);
    card.append(img, caption);
    card.addEventListener("click", () => {
      flow.select(position);
    });
    row.append(card);
  });
  root.append(row);

  const submit = el("button", "submit", "Submit choice") as HTMLButtonElement;
  submit.disabled = state.selected === null || state.submitting;
  submit.addEventListener("click", () => void flow.submit());
  root.append(submit);
}

function barsBlock(title: string, entries: Array<{ name: string; value: number;
                   label: string }>, max: number): HTMLElement {
  const block = el("div", "chart-block");
  block.append(el("h3", undefined, title));
  for (const entry of entries) {
    const row = el("div", "bar-row");
    row.append(el("span", "bar-name", entry.name));
    const track = el("div", "bar-track");
    const bar = el("div", "bar-fill");
    bar.style.width = `${(entry.value / max) * 100}%`;
    track.append(bar);
    row.append(track);
    row.append(el("span", "bar-value", entry.label));
    block.append(row);
  }
  return block;
}

async function renderResults(): Promise<void> {
  root.replaceChildren(el("p", "status", "Loading results…"));
  try {
    const payload = await api.getResults();
    const view = buildResultsView(payload);
    root.replaceChildren();
    root.append(el("h2", undefined, "Study results"));
    root.append(
      el("p", "summary",
         `Participants: ${view.participantLabel} ` +
         `(completed: ${view.completedLabel})`),
    );
    root.append(barsBlock(
      "Average selection percentage",
      view.percentages.map((p) => ({ name: p.method, value: p.value,
                                     label: p.label })),
      100,
    ));
    for (const q of view.perQuestion) {
      root.append(barsBlock(
        `Question ${q.question}`,
        q.bars.map((b) => ({ name: b.method, value: b.count, label: b.label })),
        view.maxCount,
      ));
    }
  } catch (error) {
    const box = el("div", "error-box");
    const message = error instanceof Error ? error.message : "failed";
    box.append(el("p", "status", `Could not load results: ${message}`));
    const retry = el("button", "retry", "Retry") as HTMLButtonElement;
    retry.addEventListener("click", () => void renderResults());
    box.append(retry);
    root.replaceChildren(box);
  }
}

function route(): void {
  if (location.hash === "#results") {
    void renderResults();
    return;
  }
  const flow = new ParticipantFlow(api, localStorage);
  flow.onChange((state) => renderFlow(flow, state));
  document.addEventListener("keydown", (event) => {
    if (event.key === "1" || event.key === "2" || event.key === "3") {
      flow.select(Number(event.key));
    } else if (event.key === "Enter") {
      void flow.submit();
    }
  });
  void flow.start();
}

window.addEventListener("hashchange", () => location.reload());
route();
