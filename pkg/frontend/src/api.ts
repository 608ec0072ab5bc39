// Thin typed client for the annotation service. The base URL is the only
// configuration; errors surface as ServiceError carrying the wire envelope.

import type {
    ApiErrorBody,
    DatasetInfo,
    LabelSubmission,
    SessionResponse,
    StateResponse,
} from "./types.js";

export class ServiceError extends Error {
    readonly status: number;
    readonly code: string;
    readonly details: Record<string, unknown>;

    constructor(status: number, body: ApiErrorBody) {
        super(body.message);
        this.status = status;
        this.code = body.code;
        this.details = body.details ?? {};
    }
}

export interface CreateSessionRequest {
    dataset: string;
    strategy: string;
    positive_ids: number[];
    negative_ids: number[];
    target_class?: number;
    config?: { b?: number; T?: number; seed?: number };
}

async function request<T>(base: string, path: string,
                          init?: RequestInit): Promise<T> {
    const resp = await fetch(`${base}${path}`, {
        headers: { "content-type": "application/json" },
        ...init,
    });
    if (!resp.ok) {
        let body: ApiErrorBody;
        try {
            body = (await resp.json()) as ApiErrorBody;
        } catch {
            body = { code: "unreachable", message: resp.statusText, details: {} };
        }
        throw new ServiceError(resp.status, body);
    }
    return (await resp.json()) as T;
}

export class ApiClient {
    constructor(readonly baseUrl: string) {}

    listDatasets(): Promise<{ datasets: DatasetInfo[] }> {
        return request(this.baseUrl, "/v1/datasets");
    }

    createSession(body: CreateSessionRequest): Promise<SessionResponse> {
        return request(this.baseUrl, "/v1/sessions", {
            method: "POST",
            body: JSON.stringify(body),
        });
    }

    getBatch(sessionId: string): Promise<SessionResponse> {
        return request(this.baseUrl, `/v1/sessions/${sessionId}/batch`);
    }

    submitLabels(sessionId: string,
                 submission: LabelSubmission): Promise<SessionResponse> {
        return request(this.baseUrl, `/v1/sessions/${sessionId}/labels`, {
            method: "POST",
            body: JSON.stringify(submission),
        });
    }

    getState(sessionId: string): Promise<StateResponse> {
        return request(this.baseUrl, `/v1/sessions/${sessionId}/state`);
    }

    imageUrl(relative: string | null): string | null {
        return relative === null ? null : `${this.baseUrl}${relative}`;
    }
}
