/** Typed client for the coadapt session service. All numbers shown anywhere
 * in the UI originate from these payloads; the client never derives them. */

export type Direction = "clockwise" | "counterclockwise";
export type SessionStatus = "active" | "finished";

export interface Capabilities {
  verbal_messages: boolean;
  verbal_commands: boolean;
  state_conveying_utterances: boolean;
}

export interface PolicyInfo {
  id: string;
  variant: string;
  model_hash: string;
  epsilon: number;
  seed: number;
  capabilities: Capabilities;
  gamma: number;
  alpha_grid: number[];
  compliance_grid: number[];
}

export interface BeliefSnapshot {
  joint: number[];
  alpha_marginal: number[];
  compliance_marginal: number[];
}

export interface RobotActionJson {
  kind: "task" | "verbal_command" | "state_conveying";
  mode: number | null;
}

export interface StepResult {
  session_id: string;
  index: number;
  robot_action: RobotActionJson;
  utterance: string | null;
  orientation: number;
  disagreement: boolean;
  table_moved: boolean;
  reward: number;
  terminal: boolean;
  goal: number | null;
  status: SessionStatus;
  belief: BeliefSnapshot;
}

export interface SessionDescriptor {
  id: string;
  variant: string;
  policy_id: string;
  preference: Direction;
  status: SessionStatus;
  orientation: number;
  steps: number;
  terminal: boolean;
  goal: number | null;
  belief: BeliefSnapshot;
  capabilities: Capabilities;
  last_step: StepResult | null;
}

/** Non-2xx response; carries the service's detail message. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the status-line message
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async listPolicies(): Promise<PolicyInfo[]> {
    const body = await this.request<{ policies: PolicyInfo[] }>("/policies");
    return body.policies;
  }

  createSession(body: {
    variant: string;
    policy_id: string;
    preference?: Direction;
  }): Promise<SessionDescriptor> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  getSession(sessionId: string): Promise<SessionDescriptor> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}`);
  }

  step(sessionId: string, direction: Direction): Promise<StepResult> {
    return this.request(`/sessions/${encodeURIComponent(sessionId)}/action`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ direction }),
    });
  }

  async fetchTrace(sessionId: string): Promise<string> {
    const response = await this.fetchFn(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/trace`,
    );
    if (!response.ok) throw new ApiError(response.status, `${response.status} trace fetch failed`);
    return response.text();
  }
}
