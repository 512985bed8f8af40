// Typed client for the conduct service /v1 API.
//
// The dashboard is a thin client: every displayed number comes from these
// responses, never from client-side computation.

export interface PolicyBody {
  kind: 'we_sym' | 'we_asym' | 'cb' | 'fr' | 'ts';
  p?: number;
  kappa?: number;
  a?: number;
  b?: number;
  draws?: number;
  mode?: 'argmax' | 'sample';
}

export interface CreateSessionRequest {
  n_arms: number;
  n_patients: number;
  burn_in: number;
  targets: number[];
  sigmas: number[] | null;
  policy: PolicyBody;
  seed: number;
  free_entry?: boolean;
}

export interface ArmSummary {
  arm: number;
  n: number;
  mean: number | null;
  gain: number | null;
}

export interface TimelineEntry {
  patient: number;
  arm: number;
  value: number;
}

export interface FinalResult {
  best: number;
  second: number;
  pi: number;
  reject: boolean;
  eta: number;
}

export interface SessionView {
  id: string;
  created_at: number;
  config: unknown;
  phase: 'burn_in' | 'adaptive' | 'complete';
  patients_recorded: number;
  timeline: TimelineEntry[];
  arms: ArmSummary[];
  final: FinalResult | null;
}

export interface Recommendation {
  patient: number;
  arm: number;
  gains: number[] | null;
  phase: 'burn_in' | 'adaptive';
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

async function parseError(res: Response): Promise<never> {
  let detail = `${res.status} ${res.statusText}`;
  try {
    const body = await res.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
    else if (body && body.detail) detail = JSON.stringify(body.detail);
  } catch {
    // non-JSON body: keep the status line
  }
  throw new ApiError(res.status, detail);
}

export class ConductClient {
  constructor(
    readonly baseUrl: string = '',
    private readonly fetchImpl: typeof fetch = fetch,
    private readonly token: string | null = null,
  ) {}

  private headers(): Record<string, string> {
    const h: Record<string, string> = { 'Content-Type': 'application/json' };
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!res.ok) await parseError(res);
    return (await res.json()) as T;
  }

  createSession(req: CreateSessionRequest): Promise<{ id: string }> {
    return this.request('POST', '/v1/sessions', req);
  }

  getState(id: string): Promise<SessionView> {
    return this.request('GET', `/v1/sessions/${id}`);
  }

  getRecommendation(id: string): Promise<Recommendation> {
    return this.request('GET', `/v1/sessions/${id}/recommendation`);
  }

  postOutcome(id: string, arm: number, value: number, patientIndex?: number): Promise<SessionView> {
    return this.request('POST', `/v1/sessions/${id}/outcomes`, {
      arm,
      value,
      patient_index: patientIndex ?? null,
    });
  }

  finalize(id: string, eta: number, force = false): Promise<FinalResult> {
    return this.request('POST', `/v1/sessions/${id}/finalize`, { eta, force });
  }
}
