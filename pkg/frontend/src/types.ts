// Wire types mirroring the review-service API. The console never invents
// labels or counts; everything displayed is a server value.

export interface AgentVoteView {
  agent_id: string;
  raw_category: string | null;
  final_label: string | null;
  parse_status: "ok" | "repaired" | "invalid";
  af_pr: number | null;
  explanation: string;
}

export interface ReviewItem {
  case_id: string;
  report_text: string;
  machine_outcome: string;
  tally_counts: Record<string, number>;
  invalid_count: number;
  agent_votes: AgentVoteView[];
  status: "pending" | "adjudicated";
  human_label: string | null;
  reviewer: string | null;
  adjudicated_at: string | null;
  enqueued_at: string | null;
}

export interface QueuePage {
  items: ReviewItem[];
  total: number;
  page: number;
  page_size: number;
}

export interface QueueStats {
  total: number;
  pending: number;
  adjudicated: number;
  by_machine_outcome: Record<string, number>;
  valid_labels: string[];
  review_label: string;
}

export interface QueueFilters {
  status?: "pending" | "adjudicated";
  machine_outcome?: string;
  page?: number;
  page_size?: number;
}
