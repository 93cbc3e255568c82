/**
 * Client-side session state: weight renormalization, request debouncing,
 * and discarding of stale in-flight responses.
 */

import type { GoalSpec, QualityName } from "./types.js";

export const WEIGHT_QUALITIES: QualityName[] = ["ELat", "ECost", "RLat", "Reliability"];

export type Weights = Partial<Record<QualityName, number>>;

/**
 * Move one weight to `value` and proportionally rescale the others so the
 * total stays exactly one. When the others are all zero the remainder is
 * split evenly between them.
 */
export function renormalizeWeights(weights: Weights, changed: QualityName,
                                   value: number): Weights {
    const clamped = Math.min(1, Math.max(0, value));
    const names = Object.keys(weights) as QualityName[];
    const others = names.filter((n) => n !== changed);
    const next: Weights = { [changed]: clamped };
    const remainder = 1 - clamped;
    const otherSum = others.reduce((acc, n) => acc + (weights[n] ?? 0), 0);
    for (const name of others) {
        next[name] = otherSum > 0
            ? ((weights[name] ?? 0) / otherSum) * remainder
            : remainder / others.length;
    }
    return next;
}

export function weightSum(weights: Weights): number {
    return Object.values(weights).reduce((a, b) => a + (b ?? 0), 0);
}

/** Trailing-edge debounce; each call resets the timer. */
export function debounce<A extends unknown[]>(fn: (...args: A) => void,
                                              delayMs = 300) {
    let timer: ReturnType<typeof setTimeout> | undefined;
    const wrapped = (...args: A) => {
        if (timer !== undefined) clearTimeout(timer);
        timer = setTimeout(() => fn(...args), delayMs);
    };
    wrapped.cancel = () => {
        if (timer !== undefined) clearTimeout(timer);
        timer = undefined;
    };
    return wrapped as typeof wrapped & { cancel: () => void };
}

/**
 * At most one sizing request is live per session; responses from an
 * earlier request are discarded by id.
 */
export class RequestTracker {
    private current = 0;

    begin(): number {
        this.current += 1;
        return this.current;
    }

    isCurrent(id: number): boolean {
        return id === this.current;
    }
}

export function buildGoal(weights: Weights, bounds: GoalSpec["bounds"]): GoalSpec {
    const cleaned: Weights = {};
    for (const [name, value] of Object.entries(weights)) {
        if (value && value > 0) cleaned[name as QualityName] = value;
    }
    return { bounds, weights: cleaned };
}
