/** Typed client for the triage HTTP API. The UI never computes scores;
 * every number on screen comes from these endpoints. */

export interface GroupRow {
  root_cause: number;
  size: number;
  verdict: string;
  top_score: number;
}

export interface TraceRow {
  seq_no: number;
  score: number;
  root_cause: number;
  flow_line: number;
  label: string;
}

export interface FlowRow {
  line_index: number;
  timestamp: number;
  duration: number;
  protocol: string;
  num_bytes: number;
  num_packets: number;
  src_ip: string;
  dst_ip: string;
  src_port: number | null;
  dst_port: number | null;
  label: string;
}

export interface StateArcIn {
  source: number;
  symbol: string;
  count: number;
}

export interface StateArcOut {
  symbol: string;
  target: number;
  count: number;
}

export interface StateInfo {
  state: number;
  train_count: number;
  final_count: number;
  incoming: StateArcIn[];
  outgoing: StateArcOut[];
}

export interface AlertRow {
  seq_no: number;
  score: number;
  root_cause: number;
}

export type Verdict = "false_positive" | "malicious";

/** What the app needs from the backend; tests substitute a fake. */
export interface Api {
  groups(minScore?: number): Promise<GroupRow[]>;
  groupTraces(rootCause: number, limit?: number): Promise<TraceRow[]>;
  groupFlows(rootCause: number, limit?: number): Promise<FlowRow[]>;
  stateInfo(stateId: number): Promise<StateInfo>;
  alerts(minScore?: number): Promise<AlertRow[]>;
  submitVerdict(rootCause: number, verdict: Verdict, actor?: string): Promise<void>;
}

export class ApiClient implements Api {
  constructor(private readonly base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) {
      throw new Error(`GET ${path} failed: ${resp.status}`);
    }
    return (await resp.json()) as T;
  }

  groups(minScore?: number): Promise<GroupRow[]> {
    const query = minScore === undefined ? "" : `?min_score=${minScore}`;
    return this.getJson(`/groups${query}`);
  }

  groupTraces(rootCause: number, limit = 10): Promise<TraceRow[]> {
    return this.getJson(`/groups/${rootCause}/traces?limit=${limit}`);
  }

  groupFlows(rootCause: number, limit = 10): Promise<FlowRow[]> {
    return this.getJson(`/groups/${rootCause}/flows?limit=${limit}`);
  }

  stateInfo(stateId: number): Promise<StateInfo> {
    return this.getJson(`/model/states/${stateId}`);
  }

  alerts(minScore?: number): Promise<AlertRow[]> {
    const query = minScore === undefined ? "" : `?min_score=${minScore}`;
    return this.getJson(`/alerts${query}`);
  }

  async submitVerdict(rootCause: number, verdict: Verdict, actor = "analyst"): Promise<void> {
    const resp = await fetch(`${this.base}/groups/${rootCause}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ verdict, actor }),
    });
    if (!resp.ok) {
      throw new Error(`POST verdict failed: ${resp.status}`);
    }
  }
}
