/** Wire types mirroring the moderation service's JSON responses. */

export interface Policy {
  gamma: number;
  alpha: number;
  pipeline: string;
  class_method: string;
  reg_method: string;
}

export interface DecisionView {
  id: string;
  action: 'auto_publish' | 'auto_remove' | 'review';
  reasons: string[];
  set_size: number;
  label: number | null;
  interval: [number, number] | null;
}

export interface QueueItem {
  id: string;
  text: string | null;
  decision: DecisionView;
  enqueued_at: string;
  status: 'pending' | 'resolved';
  moderator_label: number | null;
  resolved_at: string | null;
}

export interface QueuePage {
  items: QueueItem[];
  total: number;
  offset: number;
}

export interface RouteCounts {
  auto_publish: number;
  auto_remove: number;
  review: number;
  reason_uncertain: number;
  reason_ambiguous: number;
  [key: string]: number;
}

export interface PreviewSide {
  policy: Policy;
  counts: RouteCounts;
}

export interface PreviewResponse {
  current: PreviewSide;
  candidate: PreviewSide;
  n: number;
}

/** Metrics report; numeric entries may be null when undefined on the data. */
export type MetricsReport = Record<string, number | boolean | null>;

export interface PolicyUpdate {
  gamma?: number;
  alpha?: number;
  class_method?: string;
  reg_method?: string;
}
