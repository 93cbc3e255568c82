/**
 * Wire types mirroring the sizing service's JSON schemas.
 * The UI never computes qualities; it only renders these fields.
 */

export type QualityName = "RLat" | "ELat" | "ECost" | "Throughput" | "Reliability";

export interface BoundSpec {
    quality: QualityName;
    operator: "<=" | "<" | ">=" | ">";
    threshold: number;
    unit?: string;
}

export interface GoalSpec {
    bounds: BoundSpec[];
    weights: Partial<Record<QualityName, number>>;
}

export interface PolicyDoc {
    assignments: Record<string, Record<string, number>>;
}

export interface ParetoEntry {
    policy: PolicyDoc;
    predicted: Partial<Record<QualityName, number>>;
    zf: number;
}

export interface NearestMiss {
    policy: PolicyDoc;
    predicted: Partial<Record<QualityName, number>>;
    violated_bounds: string[];
}

export interface SizingResultDoc {
    policy: PolicyDoc;
    predicted: Partial<Record<QualityName, number>>;
    zf_score: number;
    pareto_front: ParetoEntry[];
    search_stats: Record<string, number>;
    provenance: Record<string, unknown>;
    infeasible: boolean;
    nearest_miss: NearestMiss | null;
}

export interface SizingRecord {
    id: string;
    status: string;
    seed: number;
    result: SizingResultDoc;
    per_task: { sample: number; model: number; match: number };
    sampling_cost: number;
    platform_invocations: number;
}

export interface SizingAccepted {
    id: string;
    status: string;
    poll: string;
}

export interface ValidationErrorDoc {
    error: string;
    violations?: string[];
    detail?: string;
}

export interface KnobDoc {
    kind: string;
    domain: number[];
    quality_neutral: boolean;
}

export interface FunctionDoc {
    name: string;
    knobs: KnobDoc[];
    handler_ref: string;
}

export interface SucDoc {
    name: string;
    functions: FunctionDoc[];
    composition: unknown;
}

export interface ModelInfo {
    key: string;
    function: string;
    workload_class: string;
    created_at: number;
    flags: string[];
}

export interface SizingRequestBody {
    target: { suc: string } | { models: string[] };
    goal: GoalSpec;
    tactics: Record<string, unknown>;
    apply?: boolean;
}
