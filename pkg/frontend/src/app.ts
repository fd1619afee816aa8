import { ApiError, ConflictError, ReviewApi } from "./api.js";
import type { QueueFilters, QueueStats, ReviewItem } from "./types.js";

// The console is a thin state machine over the API: every user action maps to
// exactly one server call, and all state is reconstructible from the server,
// so a reload loses nothing.

export interface Banner {
  kind: "conflict" | "network" | "info";
  message: string;
  caseId?: string;
  /** Set for network failures; re-runs the failed action. */
  retry?: () => Promise<void>;
}

export interface ConsoleState {
  items: ReviewItem[];
  total: number;
  page: number;
  pageSize: number;
  statusFilter: "pending" | "adjudicated" | "all";
  outcomeFilter: string | null;
  current: ReviewItem | null;
  stats: QueueStats | null;
  banner: Banner | null;
  reviewer: string;
  busy: boolean;
}

export interface TallySegment {
  label: string;
  count: number;
  fraction: number;
}

/** Proportional tally bar data; fractions are over all committee votes. */
export function tallySegments(item: ReviewItem, validLabels: string[]): TallySegment[] {
  const counts = validLabels.map((label) => item.tally_counts[label] ?? 0);
  const totalVotes = counts.reduce((a, b) => a + b, 0) + item.invalid_count;
  return validLabels.map((label, i) => ({
    label,
    count: counts[i],
    fraction: totalVotes === 0 ? 0 : counts[i] / totalVotes,
  }));
}

/** Labels holding the (possibly tied) highest vote count. */
export function pluralityLabels(item: ReviewItem, validLabels: string[]): string[] {
  let best = 0;
  for (const label of validLabels) best = Math.max(best, item.tally_counts[label] ?? 0);
  if (best === 0) return [];
  return validLabels.filter((label) => (item.tally_counts[label] ?? 0) === best);
}

/**
 * Agents worth a closer look: vote differs from the plurality (or never
 * parsed). These are the hallucination suspects a reviewer reads first.
 */
export function disagreeingAgents(item: ReviewItem, validLabels: string[]): Set<string> {
  const plurality = new Set(pluralityLabels(item, validLabels));
  const flagged = new Set<string>();
  for (const vote of item.agent_votes) {
    if (vote.final_label === null || !plurality.has(vote.final_label)) {
      flagged.add(vote.agent_id);
    }
  }
  return flagged;
}

/** Keyboard map: digit per label in server order, plus "s" to skip. */
export function shortcutMap(validLabels: string[]): Map<string, string> {
  const map = new Map<string, string>();
  validLabels.forEach((label, i) => {
    if (i < 9) map.set(String(i + 1), label);
  });
  return map;
}

export class ConsoleApp {
  state: ConsoleState = {
    items: [],
    total: 0,
    page: 1,
    pageSize: 25,
    statusFilter: "pending",
    outcomeFilter: null,
    current: null,
    stats: null,
    banner: null,
    reviewer: "",
    busy: false,
  };

  private listeners: Array<(state: ConsoleState) => void> = [];

  constructor(private api: ReviewApi) {}

  onChange(listener: (state: ConsoleState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  get validLabels(): string[] {
    return this.state.stats?.valid_labels ?? [];
  }

  private async guarded(action: () => Promise<void>, retry: () => Promise<void>): Promise<void> {
    this.state.busy = true;
    this.state.banner = null;
    this.emit();
    try {
      await action();
    } catch (err) {
      if (err instanceof ConflictError) {
        this.state.banner = {
          kind: "conflict",
          message: `${err.detail} The case was adjudicated elsewhere; re-open it to relabel.`,
          caseId: this.state.current?.case_id,
        };
      } else if (err instanceof ApiError) {
        this.state.banner = { kind: "info", message: `${err.error}: ${err.detail}` };
      } else {
        this.state.banner = {
          kind: "network",
          message: `Request failed: ${(err as Error).message}. Nothing was saved.`,
          retry,
        };
      }
    } finally {
      this.state.busy = false;
      this.emit();
    }
  }

  private queueFilters(): QueueFilters {
    return {
      status: this.state.statusFilter === "all" ? undefined : this.state.statusFilter,
      machine_outcome: this.state.outcomeFilter ?? undefined,
      page: this.state.page,
      page_size: this.state.pageSize,
    };
  }

  async init(): Promise<void> {
    await this.guarded(async () => {
      this.state.stats = await this.api.stats();
      await this.loadQueue();
    }, () => this.init());
  }

  private async loadQueue(): Promise<void> {
    const page = await this.api.queue(this.queueFilters());
    this.state.items = page.items;
    this.state.total = page.total;
    if (!this.state.current && page.items.length > 0) {
      this.state.current = page.items[0];
    }
  }

  async refresh(): Promise<void> {
    await this.guarded(async () => {
      this.state.stats = await this.api.stats();
      await this.loadQueue();
      if (this.state.current) {
        // keep the open case in sync with the server
        this.state.current = await this.api.case(this.state.current.case_id);
      }
    }, () => this.refresh());
  }

  async setFilter(status: ConsoleState["statusFilter"], outcome: string | null): Promise<void> {
    this.state.statusFilter = status;
    this.state.outcomeFilter = outcome;
    this.state.page = 1;
    this.state.current = null;
    await this.guarded(() => this.loadQueue(), () => this.loadQueue());
  }

  async goToPage(page: number): Promise<void> {
    this.state.page = Math.max(1, page);
    await this.guarded(() => this.loadQueue(), () => this.loadQueue());
  }

  async open(caseId: string): Promise<void> {
    await this.guarded(async () => {
      this.state.current = await this.api.case(caseId);
    }, () => this.open(caseId));
  }

  /** Advance to the next pending case after the current one, if any. */
  private advance(fromCaseId: string): void {
    const pending = this.state.items.filter(
      (item) => item.status === "pending" && item.case_id !== fromCaseId,
    );
    this.state.current = pending[0] ?? null;
  }

  async adjudicate(label: string): Promise<void> {
    const current = this.state.current;
    if (!current || this.state.busy) return;
    const reviewer = this.state.reviewer || "reviewer";
    await this.guarded(async () => {
      await this.api.adjudicate(current.case_id, label, reviewer);
      this.state.stats = await this.api.stats();
      const page = await this.api.queue(this.queueFilters());
      this.state.items = page.items;
      this.state.total = page.total;
      this.advance(current.case_id);
    }, () => this.adjudicate(label));
  }

  skip(): void {
    const current = this.state.current;
    if (!current) return;
    const pending = this.state.items.filter((item) => item.status === "pending");
    const index = pending.findIndex((item) => item.case_id === current.case_id);
    if (pending.length > 1 && index >= 0) {
      this.state.current = pending[(index + 1) % pending.length];
    }
    this.emit();
  }

  async reopenCurrent(): Promise<void> {
    const caseId = this.state.banner?.caseId ?? this.state.current?.case_id;
    if (!caseId) return;
    await this.guarded(async () => {
      this.state.current = await this.api.reopen(caseId);
      this.state.stats = await this.api.stats();
      await this.loadQueue();
    }, () => this.reopenCurrent());
  }

  setReviewer(name: string): void {
    this.state.reviewer = name;
    this.emit();
  }

  dismissBanner(): void {
    this.state.banner = null;
    this.emit();
  }

  /** Route a keypress; returns true when it was consumed. */
  async handleKey(key: string): Promise<boolean> {
    if (!this.state.current || this.state.busy) return false;
    if (key === "s") {
      this.skip();
      return true;
    }
    const label = shortcutMap(this.validLabels).get(key);
    if (label) {
      await this.adjudicate(label);
      return true;
    }
    return false;
  }

  progress(): { adjudicated: number; total: number } {
    return {
      adjudicated: this.state.stats?.adjudicated ?? 0,
      total: this.state.stats?.total ?? 0,
    };
  }
}
