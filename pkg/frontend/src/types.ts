// Wire shapes of the annotation service (JSON over HTTP).

export interface BatchItem {
    sample_id: number;
    score: number;
    criterion: number;
    image_url: string | null;
}

export interface BatchPayload {
    iteration: number;
    items: BatchItem[];
}

export interface MetricsRow {
    iteration: number;
    cov: number | null;
    pos: number | null;
    batch_ratio: number;
    f1: number | null;
}

export interface MetricSeries {
    iteration: number[];
    cov: (number | null)[];
    pos: (number | null)[];
    batch_ratio: number[];
    f1: (number | null)[];
}

export interface SessionHandle {
    session_id: string;
    dataset: string;
    strategy: string;
    phase: "ready" | "awaiting_labels" | "finished";
    t: number;
    budget: number;
    max_iterations: number;
}

export interface SessionSummary {
    iterations: number;
    labeled: number;
    discovered: number[];
    series: MetricSeries;
}

export type SessionResponse = SessionHandle & {
    batch?: BatchPayload;
    latest_metrics?: MetricsRow;
    summary?: SessionSummary;
};

export interface StateResponse extends SessionHandle {
    metrics: MetricSeries;
    discovered: number[];
    labeled_count: number;
}

export interface DatasetInfo {
    name: string;
    num_samples: number;
    dim: number;
    num_classes: number;
    pool_size: number;
    has_images: boolean;
}

export interface ApiErrorBody {
    code: string;
    message: string;
    details: Record<string, unknown>;
}

export interface LabelSubmission {
    labels: { sample_id: number; relevant: boolean }[];
}
