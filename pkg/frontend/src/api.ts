/** Thin fetch wrappers over the sizing service. */

import type {
    ModelInfo,
    SizingAccepted,
    SizingRecord,
    SizingRequestBody,
    SucDoc,
    ValidationErrorDoc,
} from "./types.js";

export type SizingResponse =
    | { kind: "done"; record: SizingRecord; status: number }
    | { kind: "accepted"; accepted: SizingAccepted }
    | { kind: "error"; payload: ValidationErrorDoc; status: number };

export async function postSizing(body: SizingRequestBody,
                                 base = ""): Promise<SizingResponse> {
    const response = await fetch(`${base}/api/sizings`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
    });
    const payload = await response.json();
    if (response.status === 202) {
        return { kind: "accepted", accepted: payload as SizingAccepted };
    }
    if (response.ok || response.status === 422) {
        // 422 carries a full record whose result is marked infeasible
        return { kind: "done", record: payload as SizingRecord,
                 status: response.status };
    }
    return { kind: "error", payload: payload as ValidationErrorDoc,
             status: response.status };
}

export async function getSizing(id: string, base = ""): Promise<SizingRecord> {
    const response = await fetch(`${base}/api/sizings/${id}`);
    if (!response.ok) throw new Error(`sizing ${id}: HTTP ${response.status}`);
    return await response.json() as SizingRecord;
}

export async function getSuc(base = ""): Promise<SucDoc> {
    const response = await fetch(`${base}/api/suc`);
    return await response.json() as SucDoc;
}

export async function getModels(base = ""): Promise<ModelInfo[]> {
    const response = await fetch(`${base}/api/models`);
    const payload = await response.json() as { models: ModelInfo[] };
    return payload.models;
}
