/**
 * Pure renderers: service response fields in, HTML strings out.
 *
 * Every number shown to the operator is carried verbatim from the response
 * in a data-value attribute; the visible text is only a rounded echo of it.
 */

import type {
    BoundSpec,
    ModelInfo,
    ParetoEntry,
    PolicyDoc,
    QualityName,
    SizingRecord,
    SizingResultDoc,
    ValidationErrorDoc,
} from "./types.js";

const UNITS: Record<QualityName, string> = {
    RLat: "ms", ELat: "ms", ECost: "USD", Throughput: "req/s", Reliability: "",
};

function esc(text: string): string {
    return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}

function cell(value: number, digits = 3): string {
    return `<span class="num" data-value="${String(value)}">` +
        `${value.toFixed(digits)}</span>`;
}

export function renderPolicy(result: SizingResultDoc): string {
    const rows = Object.entries(result.policy.assignments)
        .map(([fn, knobs]) => {
            const memory = knobs["Memory"];
            return `<tr><td>${esc(fn)}</td>` +
                `<td class="size" data-function="${esc(fn)}" ` +
                `data-value="${String(memory)}">${String(memory)} MB</td></tr>`;
        })
        .join("");
    return `<table class="policy"><thead><tr><th>function</th>` +
        `<th>memory</th></tr></thead><tbody>${rows}</tbody></table>`;
}

function boundFor(quality: string, bounds: BoundSpec[]): BoundSpec | undefined {
    return bounds.find((b) => b.quality === quality);
}

function satisfies(value: number, bound: BoundSpec): boolean {
    switch (bound.operator) {
        case "<=": return value <= bound.threshold;
        case "<": return value < bound.threshold;
        case ">=": return value >= bound.threshold;
        case ">": return value > bound.threshold;
    }
}

export function renderPredicted(result: SizingResultDoc,
                                bounds: BoundSpec[]): string {
    const rows = Object.entries(result.predicted).map(([quality, value]) => {
        const bound = boundFor(quality, bounds);
        let verdict = "";
        if (bound !== undefined) {
            const ok = satisfies(value as number, bound);
            verdict = `<span class="${ok ? "ok" : "violated"}">` +
                `${bound.operator} ${bound.threshold}${bound.unit ?? ""}</span>`;
        }
        const unit = UNITS[quality as QualityName] ?? "";
        return `<tr><td>${esc(quality)}</td>` +
            `<td data-quality="${esc(quality)}">${cell(value as number, 4)}` +
            ` ${unit}</td><td>${verdict}</td></tr>`;
    }).join("");
    return `<table class="predicted"><thead><tr><th>quality</th><th>predicted</th>` +
        `<th>bound</th></tr></thead><tbody>${rows}</tbody></table>`;
}

function policyKey(policy: PolicyDoc): string {
    return Object.entries(policy.assignments)
        .map(([fn, knobs]) => `${fn}=${knobs["Memory"]}`)
        .sort()
        .join(",");
}

/** Latency-vs-cost scatter of the front; the chosen policy is highlighted. */
export function renderParetoSvg(front: ParetoEntry[], chosen: PolicyDoc,
                                width = 420, height = 260): string {
    if (front.length === 0) {
        return `<svg class="pareto" width="${width}" height="${height}"></svg>`;
    }
    const lat = front.map((e) => e.predicted.RLat ?? e.predicted.ELat ?? 0);
    const cost = front.map((e) => e.predicted.ECost ?? 0);
    const pad = 34;
    const span = (values: number[]) => {
        const lo = Math.min(...values);
        const hi = Math.max(...values);
        return hi > lo ? [lo, hi] : [lo - 0.5, hi + 0.5];
    };
    const [cLo, cHi] = span(cost);
    const [lLo, lHi] = span(lat);
    const x = (v: number) => pad + ((v - cLo) / (cHi - cLo)) * (width - 2 * pad);
    const y = (v: number) => height - pad
        - ((v - lLo) / (lHi - lLo)) * (height - 2 * pad);
    const chosenKey = policyKey(chosen);
    const points = front.map((entry, i) => {
        const isChosen = policyKey(entry.policy) === chosenKey;
        return `<circle cx="${x(cost[i]).toFixed(1)}" cy="${y(lat[i]).toFixed(1)}"` +
            ` r="${isChosen ? 7 : 4}" class="${isChosen ? "chosen" : "candidate"}"` +
            ` data-zf="${String(entry.zf)}" data-cost="${String(cost[i])}"` +
            ` data-latency="${String(lat[i])}"><title>` +
            `${esc(policyKey(entry.policy))} zf=${entry.zf.toFixed(4)}</title></circle>`;
    }).join("");
    return `<svg class="pareto" width="${width}" height="${height}" ` +
        `viewBox="0 0 ${width} ${height}">` +
        `<text x="${width / 2}" y="${height - 6}" class="axis">cost (USD)</text>` +
        `<text x="10" y="${height / 2}" class="axis" ` +
        `transform="rotate(-90 10 ${height / 2})">latency (ms)</text>` +
        `${points}</svg>`;
}

export function renderInfeasibleBanner(result: SizingResultDoc): string {
    if (!result.infeasible || !result.nearest_miss) return "";
    const bounds = result.nearest_miss.violated_bounds
        .map((b) => `<li class="violated-bound">${esc(b)}</li>`)
        .join("");
    const sizes = Object.entries(result.nearest_miss.policy.assignments)
        .map(([fn, knobs]) => `${esc(fn)}: ${String(knobs["Memory"])} MB`)
        .join(", ");
    return `<div class="banner infeasible"><strong>No feasible policy.</strong>` +
        ` Nearest miss (${sizes}) violates:<ul>${bounds}</ul></div>`;
}

export function renderProgress(perTask: SizingRecord["per_task"],
                               status: string): string {
    const row = (task: string, ms: number) =>
        `<tr><td>${task}</td><td data-task="${task}" data-value="${String(ms)}">` +
        `${(ms / 1000).toFixed(1)} s</td></tr>`;
    return `<table class="progress"><caption>status: ${esc(status)}</caption>` +
        `<tbody>${row("sample", perTask.sample)}${row("model", perTask.model)}` +
        `${row("match", perTask.match)}</tbody></table>`;
}

export function renderError(payload: ValidationErrorDoc, status: number): string {
    const items = (payload.violations ?? [payload.detail ?? "unknown error"])
        .map((v) => `<li>${esc(v)}</li>`)
        .join("");
    return `<div class="banner error">service returned ${status} ` +
        `(${esc(payload.error)})<ul>${items}</ul></div>`;
}

export function renderModels(models: ModelInfo[]): string {
    if (models.length === 0) {
        return `<p class="models">no stored quality models yet</p>`;
    }
    const rows = models.map((m) =>
        `<tr><td>${esc(m.function)}</td><td>${esc(m.workload_class)}</td>` +
        `<td>${esc(m.key)}</td></tr>`).join("");
    return `<table class="models"><thead><tr><th>function</th><th>class</th>` +
        `<th>key</th></tr></thead><tbody>${rows}</tbody></table>`;
}

export function renderSummary(record: SizingRecord): string {
    const result = record.result;
    return `<p class="summary">sizing <code>${esc(record.id)}</code> ` +
        `zf ${cell(result.zf_score, 4)} · sampling cost ` +
        `${cell(record.sampling_cost, 6)} USD · ` +
        `${String(record.platform_invocations)} platform invocations</p>`;
}
