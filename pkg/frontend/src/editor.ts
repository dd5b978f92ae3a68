// Knowledge-base editor: DSL text with live server-side diagnostics anchored
// to line/column markers, version-aware saves, and a rule-level side panel.
// Saving is blocked while any error-severity diagnostic exists.

import { ApiClient, ApiError } from "./api";
import { clear, el } from "./dom";
import type { DiagnosticView, KbDetail, KbSummary } from "./types";

const TEMPLATE = `rulebase draft {
  var example: bool ask "Is the example flag set?"
  var result: bool
  rule R1: if example = true then result := true
}
`;

export class EditorView {
  private kbs: KbSummary[] = [];
  private detail: KbDetail | null = null;
  private kbId: string | null = null;
  private text = "";
  private dirty = false;
  private diagnostics: DiagnosticView[] = [];
  private validating = false;
  private conflict = false;
  private notice: string | null = null;
  private replaceTarget: string | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private client: ApiClient,
    private root: HTMLElement,
    private debounceMs = 300,
  ) {}

  async mount(): Promise<void> {
    this.kbs = await this.client.listKbs();
    if (this.kbs.length > 0) {
      await this.load(this.kbs[0].id);
    } else {
      this.kbId = null;
      this.detail = null;
      this.text = TEMPLATE;
      this.dirty = true;
      this.render();
      await this.validateNow();
    }
  }

  private async load(kbId: string, version?: number): Promise<void> {
    this.detail = await this.client.getKb(kbId, version);
    this.kbId = kbId;
    this.text = this.detail.dsl;
    this.dirty = false;
    this.conflict = false;
    this.notice = null;
    this.replaceTarget = null;
    this.diagnostics = this.detail.diagnostics;
    this.render();
  }

  get hasErrors(): boolean {
    return this.diagnostics.some((d) => d.severity === "error");
  }

  get saveDisabled(): boolean {
    return this.hasErrors || this.validating || !this.dirty;
  }

  private onInput(value: string): void {
    this.text = value;
    this.dirty = true;
    this.validating = true;
    this.renderControls();
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => void this.validateNow(), this.debounceMs);
  }

  async validateNow(): Promise<void> {
    this.timer = null;
    const snapshot = this.text;
    try {
      const result = await this.client.validateDsl(snapshot);
      if (snapshot !== this.text) return; // superseded by newer input
      this.diagnostics = result.diagnostics;
    } catch (err) {
      this.notice = err instanceof ApiError ? err.detail : String(err);
    }
    this.validating = false;
    this.render();
  }

  private async save(): Promise<void> {
    if (this.saveDisabled) return;
    const args: { id?: string; dsl: string; if_version?: number } = { dsl: this.text };
    if (this.detail) {
      args.id = this.detail.id;
      args.if_version = this.detail.latest_version;
    } else if (this.kbId) {
      args.id = this.kbId;
    }
    try {
      const stored = await this.client.uploadKb(args);
      this.notice = `saved ${stored.id} as version ${stored.version}`;
      this.kbs = await this.client.listKbs();
      await this.load(stored.id);
      this.notice = `saved ${stored.id} as version ${stored.version}`;
      this.render();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = true;
        this.render();
        return;
      }
      this.notice = err instanceof ApiError ? err.detail : String(err);
      this.render();
    }
  }

  private async removeRule(ruleId: string): Promise<void> {
    if (!this.detail) return;
    try {
      await this.client.deleteRule(this.detail.id, ruleId, this.detail.latest_version);
      await this.load(this.detail.id);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = true;
        this.render();
        return;
      }
      this.notice = err instanceof ApiError ? err.detail : String(err);
      this.render();
    }
  }

  private async submitRule(snippet: string): Promise<void> {
    if (!this.detail || !snippet.trim()) return;
    try {
      if (this.replaceTarget) {
        await this.client.replaceRule(
          this.detail.id,
          this.replaceTarget,
          snippet,
          undefined,
          this.detail.latest_version,
        );
      } else {
        await this.client.addRule(
          this.detail.id,
          snippet,
          undefined,
          this.detail.latest_version,
        );
      }
      await this.load(this.detail.id);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.conflict = true;
      } else if (err instanceof ApiError) {
        this.notice =
          err.diagnostics.length > 0 ? err.diagnostics[0].message : err.detail;
      } else {
        this.notice = String(err);
      }
      this.render();
    }
  }

  private ruleDslLine(ruleId: string): string {
    if (!this.detail) return "";
    for (const line of this.detail.dsl.split("\n")) {
      const trimmed = line.trim();
      if (trimmed.startsWith(`rule ${ruleId}:`)) return trimmed;
    }
    return "";
  }

  private render(): void {
    clear(this.root);
    const picker = el(
      "div",
      { class: "editor-toolbar" },
      el(
        "select",
        {
          id: "editor-kb-select",
          onchange: ((event: Event) => {
            void this.load((event.target as HTMLSelectElement).value);
          }) as EventListener,
        },
        ...this.kbs.map((kb) =>
          el(
            "option",
            { value: kb.id, ...(kb.id === this.kbId ? { selected: true } : {}) },
            `${kb.id} (v${kb.latest_version})`,
          ),
        ),
      ),
      el("input", { id: "new-kb-id", type: "text", placeholder: "new kb id" }),
      el(
        "button",
        {
          id: "new-kb-btn",
          onclick: (() => {
            const input = this.root.querySelector<HTMLInputElement>("#new-kb-id");
            const kbId = input?.value.trim();
            if (!kbId) return;
            this.detail = null;
            this.kbId = kbId;
            this.text = TEMPLATE;
            this.dirty = true;
            this.conflict = false;
            this.render();
            void this.validateNow();
          }) as EventListener,
        },
        "new KB",
      ),
      el(
        "span",
        { id: "editor-version" },
        this.detail ? `version ${this.detail.version}` : "unsaved draft",
      ),
    );

    const textarea = el("textarea", {
      id: "editor-text",
      spellcheck: "false",
      oninput: ((event: Event) => {
        this.onInput((event.target as HTMLTextAreaElement).value);
      }) as EventListener,
    });
    textarea.value = this.text;

    const editorPane = el(
      "div",
      { class: "editor-pane" },
      this.renderMirror(),
      textarea,
    );

    const conflictBanner = this.conflict
      ? el(
          "div",
          { class: "editor-conflict error-banner" },
          "This knowledge base changed on the server since you loaded it. ",
          el(
            "button",
            {
              id: "editor-reload",
              onclick: (() => {
                if (this.kbId) void this.load(this.kbId);
              }) as EventListener,
            },
            "reload latest",
          ),
        )
      : null;

    this.root.append(
      el(
        "section",
        { class: "card editor-card" },
        el("h2", {}, "Knowledge-base editor"),
        picker,
        conflictBanner,
        editorPane,
        this.renderControlsNode(),
        this.renderDiagnostics(),
      ),
      this.renderRulePanel(),
    );
    if (this.notice) {
      this.root.append(el("p", { class: "editor-notice" }, this.notice));
    }
  }

  private renderMirror(): HTMLElement {
    // read-only mirror of the text with per-line diagnostic highlighting
    const byLine = new Map<number, DiagnosticView[]>();
    for (const diag of this.diagnostics) {
      const line = diag.location?.line;
      if (line !== undefined) {
        const bucket = byLine.get(line) ?? [];
        bucket.push(diag);
        byLine.set(line, bucket);
      }
    }
    const lines = this.text.split("\n").map((content, i) => {
      const diags = byLine.get(i + 1) ?? [];
      const classes = ["mirror-line"];
      if (diags.some((d) => d.severity === "error")) classes.push("line-error");
      else if (diags.length > 0) classes.push("line-warning");
      return el("div", { class: classes.join(" ") }, content || " ");
    });
    return el("pre", { class: "editor-mirror", "aria-hidden": "true" }, ...lines);
  }

  private renderControlsNode(): HTMLElement {
    return el(
      "div",
      { class: "editor-controls" },
      el(
        "button",
        {
          id: "editor-save",
          ...(this.saveDisabled ? { disabled: true } : {}),
          onclick: (() => void this.save()) as EventListener,
        },
        this.validating ? "validating..." : "save as new version",
      ),
      el(
        "span",
        { class: "editor-state" },
        this.validating ? "checking" : this.hasErrors ? "errors" : this.dirty ? "valid" : "clean",
      ),
    );
  }

  private renderControls(): void {
    const controls = this.root.querySelector(".editor-controls");
    if (controls) controls.replaceWith(this.renderControlsNode());
  }

  private renderDiagnostics(): HTMLElement {
    if (this.diagnostics.length === 0) {
      return el("p", { class: "diag-clean" }, "no diagnostics");
    }
    const items = this.diagnostics.map((diag) => {
      const line = diag.location?.line;
      const column = diag.location?.column;
      const anchor = line !== undefined ? `${line}:${column ?? 1} ` : "";
      return el(
        "li",
        {
          class: `diag-marker diag-${diag.severity}`,
          ...(line !== undefined ? { "data-line": String(line) } : {}),
          ...(column !== undefined ? { "data-column": String(column) } : {}),
          "data-code": diag.code,
          onclick: (() => {
            const textarea = this.root.querySelector<HTMLTextAreaElement>("#editor-text");
            if (textarea && line !== undefined) {
              const offset = this.text
                .split("\n")
                .slice(0, line - 1)
                .reduce((n, s) => n + s.length + 1, 0);
              textarea.focus();
              textarea.setSelectionRange(offset + (column ?? 1) - 1, offset + (column ?? 1));
            }
          }) as EventListener,
        },
        `${diag.severity} ${anchor}${diag.code}: ${diag.message}`,
      );
    });
    return el("ul", { class: "diag-list" }, ...items);
  }

  private renderRulePanel(): HTMLElement {
    if (!this.detail || this.detail.kb.rulebases.length === 0) {
      return el("aside", { class: "card rule-panel" }, el("h3", {}, "Rules"), el("p", {}, "no stored version"));
    }
    const rows = this.detail.kb.rulebases.flatMap((rb) =>
      rb.rules.map((rule) =>
        el(
          "li",
          { class: "rule-row", "data-rule": rule.id },
          el("code", {}, this.ruleDslLine(rule.id) || `rule ${rule.id}`),
          el(
            "button",
            {
              class: "rule-edit",
              onclick: (() => {
                this.replaceTarget = rule.id;
                const input = this.root.querySelector<HTMLInputElement>("#rule-input");
                if (input) input.value = this.ruleDslLine(rule.id);
                const submit = this.root.querySelector<HTMLButtonElement>("#rule-submit");
                if (submit) submit.textContent = `replace ${rule.id}`;
              }) as EventListener,
            },
            "edit",
          ),
          el(
            "button",
            {
              class: "rule-remove",
              onclick: (() => void this.removeRule(rule.id)) as EventListener,
            },
            "remove",
          ),
        ),
      ),
    );
    const input = el("input", {
      id: "rule-input",
      type: "text",
      placeholder: "rule R9: if ... then ...",
    });
    return el(
      "aside",
      { class: "card rule-panel" },
      el("h3", {}, "Rules"),
      el("ul", { class: "rule-list" }, ...rows),
      input,
      el(
        "button",
        {
          id: "rule-submit",
          onclick: (() => void this.submitRule(input.value)) as EventListener,
        },
        this.replaceTarget ? `replace ${this.replaceTarget}` : "add rule",
      ),
    );
  }
}
