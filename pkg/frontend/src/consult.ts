// Consultation wizard: pick a KB, answer questions one at a time, read the
// outcome with its proof tree. Every transition is a service call; the
// browser never infers anything on its own.

import { ApiClient, ApiError } from "./api";
import { clear, el } from "./dom";
import type {
  AnswerRecord,
  ApiValue,
  KbDetail,
  KbSummary,
  Question,
  SessionView,
  WhyView,
  DeclDoc,
} from "./types";
import { valueLabel } from "./types";

interface SetupState {
  kbs: KbSummary[];
  kbId: string | null;
  detail: KbDetail | null;
  mode: "backward" | "hybrid";
  goal: string | null;
}

export function parseAnswerInput(kind: string, raw: string): ApiValue {
  const text = raw.trim();
  if (kind === "number") {
    const parsed = Number(text);
    if (text === "" || Number.isNaN(parsed) || !Number.isFinite(parsed)) {
      throw new Error(`not a number: ${raw}`);
    }
    return { kind: "number", payload: parsed };
  }
  return { kind: "text", payload: text };
}

export function answerPrefix(answers: AnswerRecord[], index: number): AnswerRecord[] {
  return answers.slice(0, index);
}

export class ConsultView {
  private setup: SetupState = {
    kbs: [],
    kbId: null,
    detail: null,
    mode: "backward",
    goal: null,
  };
  private session: SessionView | null = null;
  private why: WhyView | null = null;
  private howTexts: { variable: string; text: string }[] = [];
  private error: string | null = null;
  private archived = false;

  constructor(
    private client: ApiClient,
    private root: HTMLElement,
  ) {}

  async mount(): Promise<void> {
    this.setup.kbs = await this.client.listKbs();
    if (this.setup.kbs.length > 0) {
      await this.selectKb(this.setup.kbs[0].id);
    } else {
      this.render();
    }
  }

  private async selectKb(kbId: string): Promise<void> {
    this.setup.kbId = kbId;
    this.setup.detail = await this.client.getKb(kbId);
    const decls = this.declarations();
    this.setup.goal = decls.length > 0 ? decls[decls.length - 1].name : null;
    this.render();
  }

  private declarations(): DeclDoc[] {
    const detail = this.setup.detail;
    if (!detail || detail.kb.rulebases.length === 0) return [];
    const rb = detail.kb.rulebases[0];
    return [...detail.kb.global_declarations, ...rb.declarations];
  }

  private async start(): Promise<void> {
    if (!this.setup.kbId) return;
    this.error = null;
    this.archived = false;
    this.howTexts = [];
    try {
      this.session = await this.client.createSession({
        kb_id: this.setup.kbId,
        mode: this.setup.mode,
        goal: this.setup.mode === "backward" ? this.setup.goal ?? undefined : undefined,
      });
      await this.afterTransition();
    } catch (err) {
      this.showError(err);
    }
  }

  private async answer(value: ApiValue | null): Promise<void> {
    if (!this.session) return;
    this.error = null;
    this.why = null;
    try {
      this.session = await this.client.postAnswer(this.session.id, value);
      await this.afterTransition();
    } catch (err) {
      this.showError(err);
    }
  }

  private async afterTransition(): Promise<void> {
    if (this.session && this.session.status === "done") {
      await this.loadProofs();
    }
    this.render();
  }

  private async loadProofs(): Promise<void> {
    const session = this.session;
    if (!session || !session.outcome) return;
    this.howTexts = [];
    const targets: string[] = [];
    if (session.mode === "backward" && session.goal && session.outcome.proven) {
      targets.push(session.goal);
    } else {
      for (const fact of session.outcome.facts) {
        if (fact.provenance.kind === "derived") targets.push(fact.variable);
      }
    }
    for (const variable of targets) {
      const how = await this.client.how(session.id, variable);
      this.howTexts.push({ variable, text: how.text });
    }
  }

  private async showWhy(): Promise<void> {
    if (!this.session) return;
    try {
      this.why = await this.client.why(this.session.id);
      this.render();
    } catch (err) {
      this.showError(err);
    }
  }

  private async stepBack(index: number): Promise<void> {
    // sessions are immutable server-side: replay the answer prefix into a
    // fresh session, then continue from there
    const old = this.session;
    if (!old) return;
    this.error = null;
    this.why = null;
    try {
      let session = await this.client.createSession({
        kb_id: old.kb_id,
        version: old.kb_version,
        mode: old.mode,
        goal: old.goal ?? undefined,
      });
      for (const answer of answerPrefix(old.answers, index)) {
        session = await this.client.postAnswer(session.id, answer.value);
      }
      this.session = session;
      this.archived = false;
      await this.afterTransition();
    } catch (err) {
      this.showError(err);
    }
  }

  private async archiveSession(): Promise<void> {
    if (!this.session) return;
    try {
      await this.client.archive(this.session.id);
      this.archived = true;
      this.render();
    } catch (err) {
      this.showError(err);
    }
  }

  private showError(err: unknown): void {
    this.error = err instanceof ApiError ? `${err.status}: ${err.detail}` : String(err);
    this.render();
  }

  private render(): void {
    clear(this.root);
    if (!this.session) {
      this.root.append(this.renderSetup());
    } else if (this.session.status === "needs_answer") {
      this.root.append(this.renderQuestion(this.session.question!));
      this.root.append(this.renderHistory());
    } else {
      this.root.append(this.renderOutcome());
      this.root.append(this.renderHistory());
    }
    if (this.error) {
      this.root.append(el("p", { class: "consult-error error-banner" }, this.error));
    }
  }

  private renderSetup(): HTMLElement {
    const kbOptions = this.setup.kbs.map((kb) =>
      el("option", { value: kb.id, ...(kb.id === this.setup.kbId ? { selected: true } : {}) }, kb.id),
    );
    const goalable = this.declarations();
    const goalOptions = goalable.map((d) =>
      el(
        "option",
        { value: d.name, ...(d.name === this.setup.goal ? { selected: true } : {}) },
        d.name,
      ),
    );
    const card = el(
      "section",
      { id: "consult-setup", class: "card" },
      el("h2", {}, "New consultation"),
      this.setup.kbs.length === 0
        ? el("p", {}, "No knowledge bases yet. Upload one in the editor.")
        : el(
            "form",
            {
              onsubmit: ((event: Event) => {
                event.preventDefault();
                void this.start();
              }) as EventListener,
            },
            el(
              "label",
              {},
              "Knowledge base ",
              el(
                "select",
                {
                  id: "kb-select",
                  onchange: ((event: Event) => {
                    void this.selectKb((event.target as HTMLSelectElement).value);
                  }) as EventListener,
                },
                ...kbOptions,
              ),
            ),
            el(
              "label",
              {},
              "Mode ",
              el(
                "select",
                {
                  id: "mode-select",
                  onchange: ((event: Event) => {
                    this.setup.mode = (event.target as HTMLSelectElement).value as
                      | "backward"
                      | "hybrid";
                    this.render();
                  }) as EventListener,
                },
                el(
                  "option",
                  { value: "backward", ...(this.setup.mode === "backward" ? { selected: true } : {}) },
                  "backward (goal-driven)",
                ),
                el(
                  "option",
                  { value: "hybrid", ...(this.setup.mode === "hybrid" ? { selected: true } : {}) },
                  "hybrid",
                ),
              ),
            ),
            this.setup.mode === "backward"
              ? el(
                  "label",
                  {},
                  "Goal ",
                  el(
                    "select",
                    {
                      id: "goal-select",
                      onchange: ((event: Event) => {
                        this.setup.goal = (event.target as HTMLSelectElement).value;
                      }) as EventListener,
                    },
                    ...goalOptions,
                  ),
                )
              : null,
            el("button", { id: "start-consult", type: "submit" }, "Start"),
          ),
    );
    return card;
  }

  private renderQuestion(question: Question): HTMLElement {
    const buttons: HTMLElement[] = [];
    if (question.allowed_values) {
      for (const value of question.allowed_values) {
        const label = valueLabel(value);
        buttons.push(
          el(
            "button",
            {
              class: "answer-btn",
              "data-value": label,
              onclick: (() => void this.answer(value)) as EventListener,
            },
            label,
          ),
        );
      }
    }
    let freeInput: HTMLInputElement | null = null;
    if (!question.allowed_values) {
      freeInput = el("input", { id: "answer-input", type: "text" });
      const kind = this.kindOf(question.variable);
      buttons.push(
        el(
          "button",
          {
            class: "answer-btn",
            id: "answer-submit",
            onclick: (() => {
              try {
                const value = parseAnswerInput(kind, freeInput!.value);
                void this.answer(value);
              } catch (err) {
                this.showError(err);
              }
            }) as EventListener,
          },
          "Answer",
        ),
      );
    }
    return el(
      "section",
      { class: "card question-card" },
      el("h2", { class: "question-prompt" }, question.prompt),
      el("p", { class: "question-variable" }, `variable: ${question.variable}`),
      freeInput,
      el("div", { class: "answer-row" }, ...buttons),
      el(
        "div",
        { class: "answer-row" },
        el(
          "button",
          {
            id: "answer-unknown",
            onclick: (() => void this.answer(null)) as EventListener,
          },
          "unknown",
        ),
        el(
          "button",
          { id: "answer-why", onclick: (() => void this.showWhy()) as EventListener },
          "why?",
        ),
      ),
      this.why
        ? el(
            "aside",
            { class: "why-panel" },
            el("h3", {}, "Why is this asked?"),
            el("pre", { class: "why-text" }, this.why.text),
          )
        : null,
    );
  }

  private kindOf(variable: string): string {
    for (const decl of this.declarations()) {
      if (decl.name === variable) return decl.kind;
    }
    return "text";
  }

  private renderHistory(): HTMLElement {
    const session = this.session!;
    const entries = session.answers.map((answer, index) =>
      el(
        "li",
        { class: "history-entry" },
        `${answer.variable} = ${answer.value ? valueLabel(answer.value) : "unknown"} `,
        el(
          "button",
          {
            class: "history-back",
            "data-index": String(index),
            onclick: (() => void this.stepBack(index)) as EventListener,
          },
          "back to here",
        ),
      ),
    );
    return el(
      "section",
      { class: "card history-card" },
      el("h3", {}, "Answers so far"),
      entries.length > 0 ? el("ul", {}, ...entries) : el("p", {}, "none yet"),
      el(
        "button",
        { id: "restart-consult", onclick: (() => this.reset()) as EventListener },
        "new consultation",
      ),
    );
  }

  private reset(): void {
    this.session = null;
    this.why = null;
    this.error = null;
    this.howTexts = [];
    this.render();
  }

  private renderOutcome(): HTMLElement {
    const session = this.session!;
    const outcome = session.outcome!;
    const parts: (HTMLElement | null)[] = [];
    if (session.mode === "backward") {
      parts.push(
        el(
          "p",
          { class: "outcome-value" },
          outcome.proven && outcome.value
            ? `${session.goal} = ${valueLabel(outcome.value)}`
            : `${session.goal} not proven`,
        ),
      );
    } else {
      const derived = outcome.facts.filter((f) => f.provenance.kind === "derived");
      parts.push(
        derived.length > 0
          ? el(
              "ul",
              { class: "outcome-facts" },
              ...derived.map((f) =>
                el("li", { class: "outcome-value" }, `${f.variable} = ${valueLabel(f.value)}`),
              ),
            )
          : el("p", { class: "outcome-value" }, "nothing derived"),
      );
    }
    for (const recommendation of outcome.recommendations) {
      parts.push(el("p", { class: "recommendation" }, `recommend: ${recommendation}`));
    }
    for (const how of this.howTexts) {
      parts.push(
        el(
          "div",
          { class: "how-block" },
          el("h3", {}, `How was ${how.variable} established?`),
          el("pre", { class: "how-tree" }, how.text),
        ),
      );
    }
    return el(
      "section",
      { class: "card outcome-card" },
      el("h2", {}, "Outcome"),
      ...(parts.filter(Boolean) as HTMLElement[]),
      el(
        "button",
        {
          id: "archive-btn",
          ...(this.archived ? { disabled: true } : {}),
          onclick: (() => void this.archiveSession()) as EventListener,
        },
        this.archived ? "archived" : "archive case",
      ),
    );
  }
}
