// Application wiring: create-session form, batch grid, charts, summary.
// One request in flight per session; inputs lock while a submit is pending.

import { ApiClient, ServiceError } from "./api.js";
import { drawChart } from "./charts.js";
import { bindKeyboard, renderBatch } from "./grid.js";
import {
    applyResponse,
    beginSubmit,
    buildSubmission,
    canSubmit,
    emptyView,
    markAll,
    SessionView,
    submitFailed,
    toggleLabel,
} from "./state.js";

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) throw new Error(`missing element #${id}`);
    return node as T;
}

let view: SessionView = emptyView();
let client = new ApiClient(localStorage.getItem("baseUrl") ?? "http://127.0.0.1:8000");
let inFlight = false;

function setView(next: SessionView): void {
    view = next;
    render();
}

function toast(message: string): void {
    const box = el<HTMLDivElement>("toast");
    box.textContent = message;
    box.classList.add("visible");
    setTimeout(() => box.classList.remove("visible"), 4000);
}

function render(): void {
    el<HTMLSpanElement>("phase").textContent =
        view.sessionId === null
            ? "no session"
            : `${view.phase} | iteration ${view.iteration}/${view.maxIterations}`;

    renderBatch(el("grid"), view, (rel) => client.imageUrl(rel), {
        onToggle: (sampleId, relevant) =>
            setView(toggleLabel(view, sampleId, relevant)),
    });

    const submit = el<HTMLButtonElement>("submit");
    submit.disabled = inFlight || !canSubmit(view);
    submit.textContent = view.phase === "submitting" ? "submitting..." :
        `submit ${view.toggles.size}/${view.batch.length}`;

    drawChart(el<HTMLCanvasElement>("chart-cov"), "coverage / discovery", [
        { label: "cov", color: "#4caf50", x: view.series.iteration, y: view.series.cov },
        { label: "pos", color: "#2196f3", x: view.series.iteration, y: view.series.pos },
    ]);
    drawChart(el<HTMLCanvasElement>("chart-ratio"), "batch positive ratio / f1", [
        { label: "ratio", color: "#ff9800", x: view.series.iteration, y: view.series.batch_ratio },
        { label: "f1", color: "#9c27b0", x: view.series.iteration, y: view.series.f1 },
    ]);

    const summary = el<HTMLDivElement>("summary");
    if (view.summary) {
        summary.classList.add("visible");
        summary.textContent =
            `finished after ${view.summary.iterations} iterations; ` +
            `${view.summary.labeled} labeled, ` +
            `${view.summary.discovered.length} relevant found via feedback`;
    } else {
        summary.classList.remove("visible");
        summary.textContent = "";
    }

    if (view.notice) toast(view.notice);
}

async function createSession(): Promise<void> {
    if (inFlight) return;
    inFlight = true;
    try {
        const positives = parseIds(el<HTMLInputElement>("positives").value);
        const negatives = parseIds(el<HTMLInputElement>("negatives").value);
        const resp = await client.createSession({
            dataset: el<HTMLSelectElement>("dataset").value,
            strategy: el<HTMLSelectElement>("strategy").value,
            positive_ids: positives,
            negative_ids: negatives,
        });
        setView(applyResponse(emptyView(), resp));
    } catch (err) {
        toast(describe(err));
    } finally {
        inFlight = false;
        render();
    }
}

async function submitLabels(): Promise<void> {
    if (inFlight || !canSubmit(view) || view.sessionId === null) return;
    inFlight = true;
    const submission = buildSubmission(view);
    setView(beginSubmit(view));
    try {
        const resp = await client.submitLabels(view.sessionId, submission);
        setView(applyResponse(view, resp));
    } catch (err) {
        // server state is unchanged on 4xx; keep toggles so the user can fix
        setView(submitFailed(view, describe(err)));
    } finally {
        inFlight = false;
        render();
    }
}

function parseIds(text: string): number[] {
    return text.split(/[\s,]+/).filter(Boolean).map((token) => {
        const n = Number(token);
        if (!Number.isInteger(n) || n < 0) {
            throw new Error(`bad sample id: ${token}`);
        }
        return n;
    });
}

function describe(err: unknown): string {
    if (err instanceof ServiceError) {
        const details = Object.keys(err.details).length
            ? ` ${JSON.stringify(err.details)}` : "";
        return `${err.status} ${err.code}: ${err.message}${details}`;
    }
    return String(err);
}

async function boot(): Promise<void> {
    const baseInput = el<HTMLInputElement>("base-url");
    baseInput.value = client.baseUrl;
    baseInput.addEventListener("change", () => {
        client = new ApiClient(baseInput.value.replace(/\/$/, ""));
        localStorage.setItem("baseUrl", client.baseUrl);
        void loadDatasets();
    });
    el<HTMLButtonElement>("create").addEventListener("click",
        () => void createSession());
    el<HTMLButtonElement>("submit").addEventListener("click",
        () => void submitLabels());
    el<HTMLButtonElement>("mark-all").addEventListener("click",
        () => setView(markAll(view, true)));
    el<HTMLButtonElement>("clear-all").addEventListener("click",
        () => setView(markAll(view, false)));
    bindKeyboard(document, () => view, {
        toggle: (sampleId, relevant) =>
            setView(toggleLabel(view, sampleId, relevant)),
        markAll: (relevant) => setView(markAll(view, relevant)),
        submit: () => void submitLabels(),
    });
    await loadDatasets();
    render();
}

async function loadDatasets(): Promise<void> {
    const select = el<HTMLSelectElement>("dataset");
    select.textContent = "";
    try {
        const { datasets } = await client.listDatasets();
        for (const info of datasets) {
            const option = document.createElement("option");
            option.value = info.name;
            option.textContent =
                `${info.name} (${info.pool_size} pool, d=${info.dim})`;
            select.appendChild(option);
        }
    } catch (err) {
        toast(describe(err));
    }
}

void boot();
