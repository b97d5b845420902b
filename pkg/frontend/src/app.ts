/** Triage console: ranked anomaly groups, flow drill-down, verdicts.
 *
 * Plain DOM rendering, one full re-render per state change. Groups are
 * displayed exactly in server order; the client never re-sorts. Data is
 * re-fetched after a verdict mutation, not on a timer.
 */

import type { Api, AlertRow, FlowRow, GroupRow, StateInfo, TraceRow, Verdict } from "./api.js";

const ALERTS_SHOWN = 20;
const DETAIL_LIMIT = 10;

export interface GroupDetail {
  rootCause: number;
  traces: TraceRow[];
  flows: FlowRow[];
  info: StateInfo;
}

export interface AppState {
  groups: GroupRow[] | null;
  alerts: AlertRow[];
  detail: GroupDetail | null;
  error: string | null;
  toast: string | null;
}

function esc(value: unknown): string {
  return String(value)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function sparkline(scores: number[], width = 120, height = 28): string {
  if (scores.length === 0) {
    return `<svg class="sparkline" viewBox="0 0 ${width} ${height}"></svg>`;
  }
  const max = Math.max(...scores);
  const min = Math.min(...scores);
  const span = max - min || 1;
  const step = scores.length > 1 ? width / (scores.length - 1) : 0;
  const points = scores
    .map((s, i) => {
      const x = (i * step).toFixed(1);
      const y = (height - 2 - ((s - min) / span) * (height - 4)).toFixed(1);
      return `${x},${y}`;
    })
    .join(" ");
  return (
    `<svg class="sparkline" viewBox="0 0 ${width} ${height}">` +
    `<polyline fill="none" points="${points}"></polyline></svg>`
  );
}

function groupRow(g: GroupRow): string {
  const dimmed = g.verdict === "false_positive" ? " dimmed" : "";
  const pinned = g.verdict === "malicious" ? " pinned" : "";
  return (
    `<tr class="group-row${dimmed}${pinned}" data-group="${g.root_cause}">` +
    `<td class="root-cause">${g.root_cause}</td>` +
    `<td class="size">${g.size}</td>` +
    `<td class="top-score">${g.top_score.toFixed(2)}</td>` +
    `<td><span class="badge ${esc(g.verdict)}">${esc(g.verdict)}</span></td>` +
    `<td>` +
    `<button class="mark-fp" data-group="${g.root_cause}">false positive</button> ` +
    `<button class="mark-mal" data-group="${g.root_cause}">malicious</button>` +
    `</td></tr>`
  );
}

function groupsSection(groups: GroupRow[]): string {
  if (groups.length === 0) {
    return `<p class="empty-state">No anomaly groups to review.</p>`;
  }
  return (
    `<table class="groups"><thead><tr>` +
    `<th>root cause</th><th>size</th><th>top score</th><th>verdict</th><th></th>` +
    `</tr></thead><tbody>` +
    groups.map(groupRow).join("") +
    `</tbody></table>`
  );
}

function alertsSection(alerts: AlertRow[]): string {
  const shown = alerts.slice(0, ALERTS_SHOWN);
  const items = shown
    .map(
      (a) =>
        `<li class="alert" data-seq="${a.seq_no}">` +
        `trace ${a.seq_no} &middot; score ${a.score.toFixed(2)} &middot; state ${a.root_cause}</li>`
    )
    .join("");
  return (
    `<section class="alerts"><h2>Alert queue (${alerts.length})</h2>` +
    `<ul>${items}</ul></section>`
  );
}

function flowRow(f: FlowRow): string {
  return (
    `<tr class="flow-row">` +
    `<td class="src-ip">${esc(f.src_ip)}</td>` +
    `<td class="dst-ip">${esc(f.dst_ip)}</td>` +
    `<td class="sport">${f.src_port ?? ""}</td>` +
    `<td class="dport">${f.dst_port ?? ""}</td>` +
    `<td class="num-bytes">${f.num_bytes}</td>` +
    `<td class="num-packets">${f.num_packets}</td>` +
    `</tr>`
  );
}

function statePanel(info: StateInfo): string {
  const inbound = info.incoming.map((a) => esc(a.symbol)).join(", ") || "none";
  const outbound = info.outgoing.map((a) => esc(a.symbol)).join(", ") || "none";
  return (
    `<div class="state-panel"><h3>State ${info.state}</h3>` +
    `<p class="train-count">train visits: ${info.train_count}</p>` +
    `<p class="final-count">trace endings: ${info.final_count}</p>` +
    `<p class="incoming">in: ${inbound}</p>` +
    `<p class="outgoing">out: ${outbound}</p></div>`
  );
}

function detailSection(detail: GroupDetail): string {
  return (
    `<section class="detail"><h2>Group ${detail.rootCause}</h2>` +
    sparkline(detail.traces.map((t) => t.score)) +
    `<table class="flows"><thead><tr>` +
    `<th>src_ip</th><th>dst_ip</th><th>sport</th><th>dport</th>` +
    `<th>num_bytes</th><th>num_packets</th>` +
    `</tr></thead><tbody>` +
    detail.flows.map(flowRow).join("") +
    `</tbody></table>` +
    statePanel(detail.info) +
    `</section>`
  );
}

export class TriageApp {
  readonly state: AppState = {
    groups: null,
    alerts: [],
    detail: null,
    error: null,
    toast: null,
  };

  constructor(
    private readonly root: HTMLElement,
    private readonly api: Api
  ) {
    root.addEventListener("click", (ev) => {
      const el = ev.target as HTMLElement;
      if (el.closest(".retry")) {
        void this.refresh();
        return;
      }
      const fp = el.closest(".mark-fp") as HTMLElement | null;
      if (fp) {
        void this.markGroup(Number(fp.dataset.group), "false_positive");
        return;
      }
      const mal = el.closest(".mark-mal") as HTMLElement | null;
      if (mal) {
        void this.markGroup(Number(mal.dataset.group), "malicious");
        return;
      }
      const row = el.closest(".group-row") as HTMLElement | null;
      if (row) {
        void this.openGroup(Number(row.dataset.group));
      }
    });
  }

  /** Reload groups and the alert queue; used at boot and after mutations. */
  async refresh(): Promise<void> {
    try {
      const [groups, alerts] = await Promise.all([this.api.groups(), this.api.alerts()]);
      this.state.groups = groups;
      this.state.alerts = alerts;
      this.state.error = null;
    } catch (err) {
      this.state.error = `Service unreachable: ${String(err)}`;
    }
    this.render();
  }

  async openGroup(rootCause: number): Promise<void> {
    try {
      const [traces, flows, info] = await Promise.all([
        this.api.groupTraces(rootCause, DETAIL_LIMIT),
        this.api.groupFlows(rootCause, DETAIL_LIMIT),
        this.api.stateInfo(rootCause),
      ]);
      this.state.detail = { rootCause, traces, flows, info };
      this.state.toast = null;
    } catch (err) {
      this.state.toast = `Could not load group ${rootCause}: ${String(err)}`;
    }
    this.render();
  }

  /** Optimistically apply the verdict, roll back if the POST fails,
   * re-fetch on success so the queue reflects the server. */
  async markGroup(rootCause: number, verdict: Verdict): Promise<void> {
    const group = this.state.groups?.find((g) => g.root_cause === rootCause);
    if (!group) {
      return;
    }
    const previous = group.verdict;
    group.verdict = verdict;
    this.state.toast = null;
    this.render();
    try {
      await this.api.submitVerdict(rootCause, verdict);
    } catch (err) {
      group.verdict = previous;
      this.state.toast = `Verdict not saved: ${String(err)}`;
      this.render();
      return;
    }
    await this.refresh();
  }

  render(): void {
    const parts: string[] = [`<h1>Flow anomaly triage</h1>`];
    if (this.state.error !== null) {
      parts.push(
        `<div class="banner error">${esc(this.state.error)} ` +
        `<button class="retry">Retry</button></div>`
      );
    } else if (this.state.groups !== null) {
      parts.push(alertsSection(this.state.alerts));
      parts.push(groupsSection(this.state.groups));
      if (this.state.detail !== null) {
        parts.push(detailSection(this.state.detail));
      }
    } else {
      parts.push(`<p class="loading">Loading&hellip;</p>`);
    }
    if (this.state.toast !== null) {
      parts.push(`<div class="toast error">${esc(this.state.toast)}</div>`);
    }
    this.root.innerHTML = parts.join("\n");
  }
}
