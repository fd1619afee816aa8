import { ConsoleApp, disagreeingAgents, shortcutMap, tallySegments } from "./app.js";
import type { ConsoleState } from "./app.js";
import type { ReviewItem } from "./types.js";

// Rendering only: every number and label shown here came from the server via
// the app state. No labeling logic lives in this file.

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

function clear(node: HTMLElement): void {
  while (node.firstChild) node.removeChild(node.firstChild);
}

export function renderBanner(app: ConsoleApp, host: HTMLElement): void {
  const { banner } = app.state;
  clear(host);
  if (!banner) {
    host.hidden = true;
    return;
  }
  host.hidden = false;
  host.className = `banner banner-${banner.kind}`;
  host.appendChild(el("span", "banner-message", banner.message));
  if (banner.kind === "conflict") {
    const reopen = el("button", "banner-action", "Re-open case");
    reopen.onclick = () => void app.reopenCurrent();
    host.appendChild(reopen);
  }
  if (banner.retry) {
    const retry = el("button", "banner-action", "Retry");
    retry.onclick = () => void banner.retry!();
    host.appendChild(retry);
  }
  const dismiss = el("button", "banner-dismiss", "x");
  dismiss.onclick = () => app.dismissBanner();
  host.appendChild(dismiss);
}

export function renderProgress(app: ConsoleApp, host: HTMLElement): void {
  const { adjudicated, total } = app.progress();
  host.textContent = `${adjudicated}/${total} adjudicated`;
}

export function renderQueue(app: ConsoleApp, host: HTMLElement): void {
  const state = app.state;
  clear(host);
  for (const item of state.items) {
    const row = el("li", "queue-row" + (item.case_id === state.current?.case_id ? " active" : ""));
    row.appendChild(el("span", "queue-id", item.case_id));
    row.appendChild(el("span", `chip chip-${item.machine_outcome}`, item.machine_outcome));
    row.appendChild(el("span", "queue-status", item.status === "adjudicated"
      ? `-> ${item.human_label}` : "pending"));
    row.onclick = () => void app.open(item.case_id);
    host.appendChild(row);
  }
  if (state.items.length === 0) {
    host.appendChild(el("li", "queue-empty", "queue page is empty"));
  }
}

function renderTallyBar(item: ReviewItem, labels: string[]): HTMLElement {
  const bar = el("div", "tally-bar");
  for (const segment of tallySegments(item, labels)) {
    if (segment.count === 0) continue;
    const part = el("div", `tally-segment tally-${segment.label}`,
      `${segment.label} ${segment.count}`);
    part.style.flexGrow = String(segment.count);
    part.title = `${segment.label}: ${segment.count} vote(s)`;
    bar.appendChild(part);
  }
  if (item.invalid_count > 0) {
    const part = el("div", "tally-segment tally-invalid", `invalid ${item.invalid_count}`);
    part.style.flexGrow = String(item.invalid_count);
    bar.appendChild(part);
  }
  return bar;
}

export function renderCase(app: ConsoleApp, host: HTMLElement): void {
  const state = app.state;
  const labels = app.validLabels;
  clear(host);
  const item = state.current;
  if (!item) {
    host.appendChild(el("p", "case-empty",
      state.stats && state.stats.pending === 0
        ? "Queue clear: nothing pending."
        : "Select a case from the queue."));
    return;
  }

  const head = el("div", "case-head");
  head.appendChild(el("h2", "case-id", item.case_id));
  head.appendChild(el("span", `chip chip-${item.machine_outcome}`,
    `machine: ${item.machine_outcome}`));
  if (item.status === "adjudicated") {
    head.appendChild(el("span", "chip chip-done",
      `adjudicated: ${item.human_label} by ${item.reviewer}`));
  }
  host.appendChild(head);

  host.appendChild(el("blockquote", "report-text", item.report_text));
  host.appendChild(renderTallyBar(item, labels));

  const suspects = disagreeingAgents(item, labels);
  const votes = el("div", "votes");
  for (const vote of item.agent_votes) {
    const card = el("details", "vote-card" + (suspects.has(vote.agent_id) ? " disagrees" : ""));
    const summary = el("summary", "vote-summary");
    summary.appendChild(el("span", "vote-agent", vote.agent_id));
    summary.appendChild(el("span", "vote-raw", vote.raw_category ?? "(invalid)"));
    summary.appendChild(el("span", "vote-final", vote.final_label ?? vote.parse_status));
    if (vote.af_pr !== null) {
      summary.appendChild(el("span", "vote-pr", `p=${vote.af_pr.toFixed(2)}`));
    }
    card.appendChild(summary);
    card.appendChild(el("p", "vote-explanation", vote.explanation || "(no explanation)"));
    votes.appendChild(card);
  }
  host.appendChild(votes);

  const actions = el("div", "actions");
  const shortcuts = shortcutMap(labels);
  const keyOf = new Map<string, string>();
  for (const [key, label] of shortcuts) keyOf.set(label, key);
  for (const label of labels) {
    const button = el("button", "action-label",
      keyOf.has(label) ? `${label} [${keyOf.get(label)}]` : label);
    button.disabled = state.busy;
    button.onclick = () => void app.adjudicate(label);
    actions.appendChild(button);
  }
  const skip = el("button", "action-skip", "Skip [s]");
  skip.disabled = state.busy;
  skip.onclick = () => app.skip();
  actions.appendChild(skip);
  host.appendChild(actions);
}

export function mount(app: ConsoleApp, root: Document = document): void {
  const banner = root.getElementById("banner")!;
  const progress = root.getElementById("progress")!;
  const queue = root.getElementById("queue")!;
  const caseHost = root.getElementById("case")!;
  const reviewerInput = root.getElementById("reviewer") as HTMLInputElement;
  const refreshButton = root.getElementById("refresh")!;
  const filterSelect = root.getElementById("status-filter") as HTMLSelectElement;
  const exportLink = root.getElementById("export-link") as HTMLAnchorElement;

  exportLink.href = "/api/export";
  reviewerInput.onchange = () => app.setReviewer(reviewerInput.value.trim());
  refreshButton.onclick = () => void app.refresh();
  filterSelect.onchange = () =>
    void app.setFilter(filterSelect.value as ConsoleState["statusFilter"], null);

  root.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement | null;
    if (target && (target.tagName === "INPUT" || target.tagName === "TEXTAREA")) return;
    void app.handleKey((event as KeyboardEvent).key);
  });

  app.onChange(() => {
    renderBanner(app, banner);
    renderProgress(app, progress);
    renderQueue(app, queue);
    renderCase(app, caseHost);
  });
}
