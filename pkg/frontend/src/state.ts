// Pure session-view state machine. All transitions are plain functions of
// (view, service response | user toggle), so replaying recorded responses
// reproduces the exact same chart series, and the submitted label set is
// exactly the user's toggles, never more, never less.

import type {
    BatchItem,
    LabelSubmission,
    MetricsRow,
    MetricSeries,
    SessionResponse,
    SessionSummary,
} from "./types.js";

export type Phase = "idle" | "awaiting_labels" | "submitting" | "finished";

export interface SessionView {
    phase: Phase;
    sessionId: string | null;
    iteration: number;
    maxIterations: number;
    batch: BatchItem[];
    toggles: ReadonlyMap<number, boolean>;
    series: MetricSeries;
    summary: SessionSummary | null;
    notice: string | null;
}

export function emptySeries(): MetricSeries {
    return { iteration: [], cov: [], pos: [], batch_ratio: [], f1: [] };
}

export function emptyView(): SessionView {
    return {
        phase: "idle",
        sessionId: null,
        iteration: 0,
        maxIterations: 0,
        batch: [],
        toggles: new Map(),
        series: emptySeries(),
        summary: null,
        notice: null,
    };
}

function appendRow(series: MetricSeries, row: MetricsRow): MetricSeries {
    return {
        iteration: [...series.iteration, row.iteration],
        cov: [...series.cov, row.cov],
        pos: [...series.pos, row.pos],
        batch_ratio: [...series.batch_ratio, row.batch_ratio],
        f1: [...series.f1, row.f1],
    };
}

/** Fold any session response (create or submit) into the view. */
export function applyResponse(view: SessionView,
                              resp: SessionResponse): SessionView {
    const series = resp.latest_metrics
        ? appendRow(view.series, resp.latest_metrics)
        : view.series;
    if (resp.phase === "finished") {
        return {
            ...view,
            phase: "finished",
            sessionId: resp.session_id,
            iteration: resp.t,
            maxIterations: resp.max_iterations,
            batch: [],
            toggles: new Map(),
            series: resp.summary ? resp.summary.series : series,
            summary: resp.summary ?? null,
            notice: null,
        };
    }
    return {
        ...view,
        phase: "awaiting_labels",
        sessionId: resp.session_id,
        iteration: resp.t,
        maxIterations: resp.max_iterations,
        batch: resp.batch ? resp.batch.items : view.batch,
        toggles: new Map(),
        series,
        summary: null,
        notice: null,
    };
}

/** Mark one card; ignored unless the sample is in the outstanding batch. */
export function toggleLabel(view: SessionView, sampleId: number,
                            relevant: boolean): SessionView {
    if (view.phase !== "awaiting_labels") return view;
    if (!view.batch.some((item) => item.sample_id === sampleId)) return view;
    const toggles = new Map(view.toggles);
    toggles.set(sampleId, relevant);
    return { ...view, toggles };
}

export function markAll(view: SessionView, relevant: boolean): SessionView {
    if (view.phase !== "awaiting_labels") return view;
    const toggles = new Map(
        view.batch.map((item) => [item.sample_id, relevant] as const));
    return { ...view, toggles };
}

/** Submit is available only when every batch item carries a toggle. */
export function canSubmit(view: SessionView): boolean {
    return view.phase === "awaiting_labels" &&
        view.batch.length > 0 &&
        view.batch.every((item) => view.toggles.has(item.sample_id));
}

/** The outgoing submission: exactly the user's toggles, batch order. */
export function buildSubmission(view: SessionView): LabelSubmission {
    if (!canSubmit(view)) {
        throw new Error("cannot submit: not every batch item is labeled");
    }
    return {
        labels: view.batch.map((item) => ({
            sample_id: item.sample_id,
            relevant: view.toggles.get(item.sample_id) as boolean,
        })),
    };
}

export function beginSubmit(view: SessionView): SessionView {
    return { ...view, phase: "submitting" };
}

/** A rejected submit leaves everything as it was, plus a notice. */
export function submitFailed(view: SessionView, message: string): SessionView {
    return { ...view, phase: "awaiting_labels", notice: message };
}

/** Replay a recorded response stream; the series must come out identical. */
export function seriesFromResponses(responses: SessionResponse[]): MetricSeries {
    let view = emptyView();
    for (const resp of responses) {
        view = applyResponse(view, resp);
    }
    return view.series;
}
