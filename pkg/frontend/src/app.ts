/*
 * Annotation console for the review service.
 *
 * Plain DOM, no framework. The app pulls one blinded task at a time from
 * GET /api/tasks/next, renders it by kind, and posts the label back to
 * POST /api/tasks/{id}/label. The server stays the authority on label
 * shape: anything it rejects is shown to the annotator verbatim, status
 * code included, and the task stays on screen so the answer can be fixed.
 */

export type Fetcher = (input: string, init?: RequestInit) => Promise<Response>;

export interface AppOptions {
  /* Prefix for API calls; empty string means same origin. */
  baseUrl?: string;
  /* Injectable for tests; defaults to the global fetch. */
  fetchImpl?: Fetcher;
}

export interface SlotView {
  slot: string;
  text: string;
}

/* Shape of GET /api/tasks/next. Kind-specific fields are optional because
 * the server flattens the task payload into the top level of the view. */
export interface TaskView {
  task_id: string;
  kind: string;
  doc_id: string;
  doc_excerpt?: string;
  adjudication_of?: string;
  slots?: SlotView[];
  personas?: string[];
  persona?: string;
  summary?: string;
  summary_a?: string;
  summary_b?: string;
  choices?: string[];
}

interface ProgressView {
  total: number;
  done: number;
  open: number;
  records: number;
}

export const TASK_KINDS = ["persona_id", "quality_check", "comparative"] as const;

const KIND_TITLES: Record<string, string> = {
  persona_id: "Who was this written for?",
  quality_check: "Quality check",
  comparative: "Which summary is better?",
};

const QUALITY_FIELDS: ReadonlyArray<readonly [string, string]> = [
  ["relevant", "Relevant to the document"],
  ["covers_key_points", "Covers the key points"],
  ["useful", "Useful for this reader"],
];

const CHOICE_LABELS: Record<string, string> = {
  a_better: "A is better",
  both_good: "Both are good",
  b_better: "B is better",
  both_bad: "Neither works",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: Array<Node | string>
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [name, value] of Object.entries(attrs)) {
    if (name === "class") {
      node.className = value;
    } else {
      node.setAttribute(name, value);
    }
  }
  node.append(...children);
  return node;
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      return body.detail;
    }
    return JSON.stringify(body);
  } catch {
    return response.statusText || "no detail given";
  }
}

export class AnnotationApp {
  private readonly base: string;
  private readonly fetcher: Fetcher;

  private readonly annotatorInput: HTMLInputElement;
  private readonly kindSelect: HTMLSelectElement;
  private readonly startButton: HTMLButtonElement;
  private readonly statusEl: HTMLElement;
  private readonly errorEl: HTMLElement;
  private readonly taskEl: HTMLElement;
  private readonly progressEl: HTMLElement;

  private annotatorId = "";
  private kindFilter = "all";
  private task: TaskView | null = null;

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.base = options.baseUrl ?? "";
    const fallback: Fetcher = (input, init) => fetch(input, init);
    this.fetcher = options.fetchImpl ?? fallback;

    this.annotatorInput = el("input", {
      id: "annotator",
      type: "text",
      placeholder: "your annotator id",
      autocomplete: "off",
    });
    this.kindSelect = el(
      "select",
      { id: "kind" },
      el("option", { value: "all" }, "all kinds"),
      ...TASK_KINDS.map((kind) => el("option", { value: kind }, kind)),
    );
    this.startButton = el("button", { id: "start", type: "button" }, "Start");
    this.statusEl = el("div", { id: "status", class: "status" });
    this.errorEl = el("div", { id: "error", class: "error", role: "alert", hidden: "" });
    this.taskEl = el("section", { id: "task" });
    this.progressEl = el("footer", { id: "progress" });

    root.replaceChildren(
      el(
        "header",
        { class: "controls" },
        el("label", {}, "annotator ", this.annotatorInput),
        el("label", {}, "tasks ", this.kindSelect),
        this.startButton,
      ),
      this.errorEl,
      this.statusEl,
      this.taskEl,
      this.progressEl,
    );

    this.startButton.addEventListener("click", () => {
      void this.start();
    });
    this.annotatorInput.addEventListener("keydown", (event) => {
      if (event.key === "Enter") {
        void this.start();
      }
    });
  }

  async start(): Promise<void> {
    const annotator = this.annotatorInput.value.trim();
    if (!annotator) {
      this.setError("Enter an annotator id first.");
      return;
    }
    this.annotatorId = annotator;
    this.kindFilter = this.kindSelect.value;
    this.clearError();
    this.setStatus("");
    await this.fetchNext();
  }

  async fetchNext(): Promise<void> {
    const params = new URLSearchParams({ annotator: this.annotatorId });
    if (this.kindFilter !== "all") {
      params.set("kind", this.kindFilter);
    }
    let response: Response;
    try {
      response = await this.fetcher(`${this.base}/api/tasks/next?${params.toString()}`);
    } catch (err) {
      this.setError(`Cannot reach the service: ${String(err)}`);
      return;
    }
    if (response.status === 204) {
      this.task = null;
      this.renderExhausted();
      await this.refreshProgress();
      return;
    }
    if (!response.ok) {
      this.setError(`Could not get a task (${response.status}): ${await errorDetail(response)}`);
      return;
    }
    this.task = (await response.json()) as TaskView;
    this.renderTask(this.task);
    await this.refreshProgress();
  }

  async submit(): Promise<void> {
    if (!this.task) {
      return;
    }
    const payload = this.collectPayload(this.task);
    if (payload === null) {
      return;
    }
    this.clearError();
    const button = this.taskEl.querySelector<HTMLButtonElement>("#submit");
    if (button) {
      button.disabled = true;
    }
    try {
      let response: Response;
      try {
        response = await this.fetcher(
          `${this.base}/api/tasks/${encodeURIComponent(this.task.task_id)}/label`,
          {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify({ annotator_id: this.annotatorId, payload }),
          },
        );
      } catch (err) {
        this.setError(`Cannot reach the service: ${String(err)}`);
        return;
      }
      if (!response.ok) {
        this.setError(
          `The service rejected this label (${response.status}): ${await errorDetail(response)}`,
        );
        return;
      }
      const body = (await response.json()) as { status?: string };
      this.setStatus(body.status === "duplicate" ? "Already recorded." : "Recorded.");
      await this.refreshProgress();
      await this.fetchNext();
    } finally {
      const stale = this.taskEl.querySelector<HTMLButtonElement>("#submit");
      if (stale) {
        stale.disabled = false;
      }
    }
  }

  private collectPayload(task: TaskView): Record<string, unknown> | null {
    if (task.kind === "persona_id") {
      const assignments: Record<string, string> = {};
      for (const select of this.taskEl.querySelectorAll<HTMLSelectElement>(".slot-select")) {
        const slot = select.dataset.slot ?? "";
        if (!select.value) {
          this.setError("Pick a persona for every summary before submitting.");
          return null;
        }
        assignments[slot] = select.value;
      }
      return { assignments };
    }
    if (task.kind === "quality_check") {
      const payload: Record<string, unknown> = {};
      for (const [field] of QUALITY_FIELDS) {
        const box = this.taskEl.querySelector<HTMLInputElement>(`#field-${field}`);
        payload[field] = box ? box.checked : false;
      }
      return payload;
    }
    if (task.kind === "comparative") {
      const picked = this.taskEl.querySelector<HTMLInputElement>("input.choice:checked");
      if (!picked) {
        this.setError("Pick one of the options before submitting.");
        return null;
      }
      return { choice: picked.value };
    }
    this.setError(`Cannot render tasks of kind ${task.kind}.`);
    return null;
  }

  private renderTask(task: TaskView): void {
    const title = KIND_TITLES[task.kind] ?? task.kind;
    const parts: Array<Node> = [el("h2", {}, title)];
    if (task.adjudication_of) {
      parts.push(
        el("p", { class: "note" }, `Tie-break review of task ${task.adjudication_of}.`),
      );
    }
    parts.push(el("p", { class: "meta" }, `document ${task.doc_id}`));
    if (task.doc_excerpt) {
      parts.push(el("blockquote", { class: "excerpt" }, task.doc_excerpt));
    }
    if (task.kind === "persona_id") {
      parts.push(...this.personaIdForm(task));
    } else if (task.kind === "quality_check") {
      parts.push(...this.qualityForm(task));
    } else if (task.kind === "comparative") {
      parts.push(...this.comparativeForm(task));
    } else {
      this.setError(`Cannot render tasks of kind ${task.kind}.`);
      return;
    }
    const submit = el("button", { id: "submit", type: "button" }, "Submit label");
    submit.addEventListener("click", () => {
      void this.submit();
    });
    parts.push(submit);
    this.taskEl.replaceChildren(...parts);
    this.taskEl.dataset.taskId = task.task_id;
    this.taskEl.dataset.kind = task.kind;
  }

  private personaIdForm(task: TaskView): Array<Node> {
    const personas = task.personas ?? [];
    const parts: Array<Node> = [
      el(
        "p",
        { class: "instructions" },
        "Match each summary to the reader it was written for. Use every persona exactly once.",
      ),
    ];
    for (const { slot, text } of task.slots ?? []) {
      const select = el(
        "select",
        { class: "slot-select", "data-slot": slot },
        el("option", { value: "" }, "choose a persona"),
        ...personas.map((p) => el("option", { value: p }, p)),
      );
      parts.push(
        el(
          "article",
          { class: "slot" },
          el("h3", {}, `Summary ${slot}`),
          el("p", { class: "slot-text" }, text),
          el("label", {}, "written for ", select),
        ),
      );
    }
    return parts;
  }

  private qualityForm(task: TaskView): Array<Node> {
    const parts: Array<Node> = [
      el("p", { class: "meta" }, `written for: ${task.persona ?? ""}`),
      el("p", { class: "summary" }, task.summary ?? ""),
      el("p", { class: "instructions" }, "Tick everything that holds for this summary."),
    ];
    for (const [field, label] of QUALITY_FIELDS) {
      const box = el("input", { type: "checkbox", id: `field-${field}` });
      parts.push(el("label", { class: "field" }, box, ` ${label}`));
    }
    return parts;
  }

  private comparativeForm(task: TaskView): Array<Node> {
    const parts: Array<Node> = [
      el("p", { class: "meta" }, `written for: ${task.persona ?? ""}`),
      el(
        "div",
        { class: "panels" },
        el(
          "article",
          { class: "panel" },
          el("h3", {}, "Summary A"),
          el("p", { id: "summary-a" }, task.summary_a ?? ""),
        ),
        el(
          "article",
          { class: "panel" },
          el("h3", {}, "Summary B"),
          el("p", { id: "summary-b" }, task.summary_b ?? ""),
        ),
      ),
    ];
    for (const choice of task.choices ?? []) {
      const radio = el("input", {
        type: "radio",
        class: "choice",
        name: "choice",
        value: choice,
      });
      parts.push(el("label", { class: "field" }, radio, ` ${CHOICE_LABELS[choice] ?? choice}`));
    }
    return parts;
  }

  private renderExhausted(): void {
    this.taskEl.replaceChildren(
      el("p", { class: "exhausted" }, "No open tasks for you right now."),
    );
    delete this.taskEl.dataset.taskId;
    delete this.taskEl.dataset.kind;
  }

  private async refreshProgress(): Promise<void> {
    let response: Response;
    try {
      response = await this.fetcher(`${this.base}/api/progress`);
    } catch {
      return;
    }
    if (!response.ok) {
      return;
    }
    const progress = (await response.json()) as ProgressView;
    this.progressEl.textContent =
      `${progress.done}/${progress.total} tasks finished, ` +
      `${progress.records} labels recorded`;
  }

  private setStatus(message: string): void {
    this.statusEl.textContent = message;
  }

  private setError(message: string): void {
    this.errorEl.textContent = message;
    this.errorEl.removeAttribute("hidden");
  }

  private clearError(): void {
    this.errorEl.textContent = "";
    this.errorEl.setAttribute("hidden", "");
  }
}

export function createApp(root: HTMLElement, options: AppOptions = {}): AnnotationApp {
  return new AnnotationApp(root, options);
}
