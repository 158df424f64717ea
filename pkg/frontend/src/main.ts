// DOM wiring for the rating form. One item per screen; the gold question
// sits in a collapsed panel that expands when Novelty gains focus, since
// only novelty is judged against it. Model identity stays hidden unless
// the page is loaded with ?show_models=1.

import { CRITERIA, Criterion, HarnessApi, ApiError } from "./api.js";
import { RatingSession, FormView } from "./state.js";
import { bindKeyboard, KeyAction } from "./keyboard.js";

const params = new URLSearchParams(location.search);
const showModels = params.get("show_models") === "1";

const app = document.getElementById("app")!;
const api = new HarnessApi("");

let session: RatingSession | null = null;
let focusedCriterion = 0;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderStart(): void {
  app.replaceChildren();
  const form = el("div", "start");
  form.append(el("h1", undefined, "Question rating"));
  const input = el("input");
  input.placeholder = "rater id";
  input.value = params.get("rater") ?? "";
  const button = el("button", undefined, "Start");
  button.addEventListener("click", () => start(input.value.trim()));
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") start(input.value.trim());
  });
  form.append(input, button);
  app.append(form);
  input.focus();
}

async function start(raterId: string): Promise<void> {
  if (!raterId) return;
  session = new RatingSession(api, raterId);
  render(await session.loadNextBatch());
}

function render(view: FormView): void {
  app.replaceChildren();
  if (view.phase === "loading") {
    app.append(el("p", "status", "Loading batch..."));
    return;
  }
  if (view.phase === "error" && !view.item) {
    const banner = el("div", "banner error");
    banner.append(el("p", undefined, `Cannot reach the service: ${view.error}`));
    const retry = el("button", undefined, "Retry");
    retry.addEventListener("click", async () => render(await session!.loadNextBatch()));
    banner.append(retry);
    app.append(banner);
    return;
  }
  if (view.phase === "done" || !view.item) {
    const done = el("div", "done");
    done.append(el("h1", undefined, "All caught up"));
    done.append(el("p", undefined, `Remaining items: ${view.remaining}`));
    app.append(done, agreementPanel());
    return;
  }

  const header = el("div", "header");
  header.append(
    el("span", "progress", `${view.ratedInBatch}/${view.batchSize} in this batch`),
    el("span", "remaining", `${view.remaining} remaining overall`),
  );
  app.append(header);

  if (view.error) {
    app.append(el("div", "banner error", view.error));
  }

  const card = el("div", "card");
  card.append(el("h2", undefined, "Context"));
  card.append(el("p", "context", view.item.context));
  card.append(el("h2", undefined, "Generated question"));
  card.append(el("p", "question", view.item.generated_question));
  const meta = showModels
    ? `${view.item.model_id} / ${view.item.setting}`
    : view.item.setting;
  card.append(el("p", "meta", meta));
  app.append(card);

  if (view.item.gold_question !== undefined) {
    const details = el("details", "gold");
    details.id = "gold-panel";
    const summary = el("summary", undefined, "Gold question");
    details.append(summary, el("p", undefined, view.item.gold_question));
    app.append(details);
  }

  const table = el("div", "criteria");
  CRITERIA.forEach((criterion, row) => {
    const line = el("div", row === focusedCriterion ? "criterion focused" : "criterion");
    line.append(el("span", "name", criterion));
    for (let value = 1; value <= 5; value++) {
      const button = el(
        "button",
        view.scores[criterion] === value ? "score selected" : "score",
        String(value),
      );
      button.addEventListener("click", () => {
        focusedCriterion = row;
        session!.setScore(criterion, value);
        advanceFocus();
        render(session!.view());
      });
      line.append(button);
    }
    table.append(line);
  });
  app.append(table);

  const submit = el("button", "submit", view.inFlight ? "Submitting..." : "Submit");
  submit.disabled = !view.canSubmit;
  submit.addEventListener("click", () => void doSubmit());
  app.append(submit);

  syncGoldPanel();
}

function agreementPanel(): HTMLElement {
  const panel = el("div", "agreement");
  const button = el("button", undefined, "Show inter-annotator agreement");
  const output = el("pre");
  button.addEventListener("click", async () => {
    try {
      const report = await api.agreement();
      output.textContent = CRITERIA.map(
        (c) => `${c}: ${report.kappa[c].toFixed(2)}`,
      ).join("\n");
    } catch (err) {
      output.textContent =
        err instanceof ApiError && err.status === 409
          ? "Coverage incomplete: agreement is available once every rater has rated every item."
          : `Unavailable: ${err instanceof Error ? err.message : err}`;
    }
  });
  panel.append(button, output);
  return panel;
}

function advanceFocus(): void {
  if (focusedCriterion < CRITERIA.length - 1) focusedCriterion += 1;
}

async function doSubmit(): Promise<void> {
  const before = session!.view().ratedInBatch;
  const view = await session!.submit();
  if (view.ratedInBatch !== before || view.phase !== "rating") {
    focusedCriterion = 0; // fresh item, start at the first criterion
  }
  render(view);
}

function syncGoldPanel(): void {
  const panel = document.getElementById("gold-panel") as HTMLDetailsElement | null;
  if (panel) {
    const novelty: Criterion = "Novelty";
    panel.open = CRITERIA[focusedCriterion] === novelty;
  }
}

function handleKey(action: KeyAction): void {
  if (!session || !session.currentItem()) return;
  if (action.type === "set-score") {
    const criterion = CRITERIA[focusedCriterion];
    if (criterion) session.setScore(criterion, action.value);
    advanceFocus();
    render(session.view());
  } else if (action.type === "focus-next") {
    if (focusedCriterion < CRITERIA.length - 1) focusedCriterion += 1;
    render(session.view());
  } else if (action.type === "focus-prev") {
    if (focusedCriterion > 0) focusedCriterion -= 1;
    render(session.view());
  } else if (action.type === "submit") {
    void doSubmit();
  }
}

bindKeyboard(document, handleKey);
renderStart();
