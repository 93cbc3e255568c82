/**
 * What-if session wiring: sliders and bound inputs drive debounced sizing
 * requests; each response re-renders the recommendation, predicted
 * qualities, and the Pareto scatter. Reloading rehydrates from the last
 * sizing id in the URL hash.
 */

import { getModels, getSizing, getSuc, postSizing } from "./api.js";
import {
    RequestTracker,
    WEIGHT_QUALITIES,
    type Weights,
    buildGoal,
    debounce,
    renormalizeWeights,
    weightSum,
} from "./state.js";
import {
    renderError,
    renderInfeasibleBanner,
    renderModels,
    renderParetoSvg,
    renderPredicted,
    renderPolicy,
    renderProgress,
    renderSummary,
} from "./render.js";
import type { BoundSpec, SizingRecord } from "./types.js";

const $ = (selector: string) => document.querySelector(selector) as HTMLElement;

let weights: Weights = { ELat: 0.5, ECost: 0.5, RLat: 0, Reliability: 0 };
const tracker = new RequestTracker();

function currentBounds(): BoundSpec[] {
    const bounds: BoundSpec[] = [];
    const rlat = ($("#bound-rlat") as HTMLInputElement).value.trim();
    if (rlat !== "") {
        bounds.push({ quality: "RLat", operator: "<=",
                      threshold: Number(rlat), unit: "ms" });
    }
    const cost = ($("#bound-ecost") as HTMLInputElement).value.trim();
    if (cost !== "") {
        bounds.push({ quality: "ECost", operator: "<=",
                      threshold: Number(cost), unit: "USD" });
    }
    return bounds;
}

function syncSliders() {
    for (const quality of WEIGHT_QUALITIES) {
        const slider = $(`#w-${quality}`) as HTMLInputElement;
        const value = weights[quality] ?? 0;
        slider.value = String(Math.round(value * 100));
        $(`#wv-${quality}`).textContent = value.toFixed(2);
    }
    $("#weight-sum").textContent = weightSum(weights).toFixed(2);
}

function renderRecord(record: SizingRecord) {
    const bounds = currentBounds();
    $("#summary").innerHTML = renderSummary(record);
    $("#banner").innerHTML = renderInfeasibleBanner(record.result);
    $("#policy").innerHTML = renderPolicy(record.result);
    $("#predicted").innerHTML = renderPredicted(record.result, bounds);
    $("#pareto").innerHTML = renderParetoSvg(record.result.pareto_front,
                                             record.result.policy);
    $("#progress").innerHTML = renderProgress(record.per_task, record.status);
    window.location.hash = record.id;
}

async function requestSizing() {
    const requestId = tracker.begin();
    $("#error").innerHTML = "";
    $("#status").textContent = "sizing…";
    const body = {
        target: { suc: "registered" },
        goal: buildGoal(weights, currentBounds()),
        tactics: { reuse_model: ($("#reuse") as HTMLInputElement).checked },
    };
    try {
        const response = await postSizing(body);
        if (!tracker.isCurrent(requestId)) return;  // stale; a newer request runs
        if (response.kind === "error") {
            $("#error").innerHTML = renderError(response.payload, response.status);
            $("#status").textContent = "rejected";
            return;
        }
        const record = response.kind === "done"
            ? response.record
            : await getSizing(response.accepted.id);
        if (!tracker.isCurrent(requestId)) return;
        renderRecord(record);
        $("#status").textContent = record.result.infeasible
            ? "infeasible" : "done";
    } catch (err) {
        if (tracker.isCurrent(requestId)) {
            $("#status").textContent = `request failed: ${String(err)}`;
        }
    }
}

const requestSoon = debounce(requestSizing, 300);

function wireInputs() {
    for (const quality of WEIGHT_QUALITIES) {
        const slider = $(`#w-${quality}`) as HTMLInputElement;
        slider.addEventListener("input", () => {
            weights = renormalizeWeights(weights, quality,
                                         Number(slider.value) / 100);
            syncSliders();
            requestSoon();
        });
    }
    for (const id of ["#bound-rlat", "#bound-ecost", "#reuse"]) {
        $(id).addEventListener("change", () => requestSoon());
    }
    $("#run").addEventListener("click", () => requestSizing());
}

async function boot() {
    syncSliders();
    wireInputs();
    try {
        const suc = await getSuc();
        $("#suc-name").textContent = suc.name;
        $("#suc-functions").textContent =
            suc.functions.map((f) => f.name).join(", ");
        $("#models").innerHTML = renderModels(await getModels());
        const previous = window.location.hash.slice(1);
        if (previous) renderRecord(await getSizing(previous));
    } catch (err) {
        $("#status").textContent = `service unreachable: ${String(err)}`;
    }
}

boot();
