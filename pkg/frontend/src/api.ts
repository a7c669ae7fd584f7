/** Typed client for the annotation service JSON API under /api. */

export type LabelName = 'AGG' | 'PASTE' | 'VOID';
export type StoredLabel = LabelName | 'UNLABELED';

export interface SessionInfo {
  scan_id: string;
  width: number;
  height: number;
  pitch_um: number;
  grid: { rows: number; cols: number };
  labeled: number;
  total: number;
  next_index: number | null;
}

export interface AnnotationEntry {
  index: number;
  row: number;
  col: number;
  x: number;
  y: number;
  label: StoredLabel;
}

export interface PutReply {
  ok: boolean;
  labeled: number;
  next_index: number | null;
}

export interface UndoReply extends PutReply {
  index: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    const body = await response.text();
    if (!response.ok) {
      let detail = body;
      try {
        detail = (JSON.parse(body) as { error?: string }).error ?? body;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(response.status, detail);
    }
    return JSON.parse(body) as T;
  }

  session(): Promise<SessionInfo> {
    return this.request<SessionInfo>('/api/session');
  }

  async annotations(): Promise<AnnotationEntry[]> {
    const reply = await this.request<{ entries: AnnotationEntry[] }>('/api/annotations');
    return reply.entries;
  }

  putLabel(index: number, label: LabelName): Promise<PutReply> {
    return this.request<PutReply>(`/api/annotations/${index}`, {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ label }),
    });
  }

  undo(): Promise<UndoReply> {
    return this.request<UndoReply>('/api/undo', { method: 'POST' });
  }

  /** URL of a lossless crop centered on (cx, cy); center pixel = grid point. */
  tileUrl(cx: number, cy: number, half: number, zoom: number): string {
    return `${this.baseUrl}/api/tile?cx=${cx}&cy=${cy}&half=${half}&zoom=${zoom}`;
  }
}
