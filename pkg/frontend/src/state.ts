/** Session state machine, independent of the DOM.
 *
 * All mutations go through a serialized operation queue: a burst of key
 * presses becomes exactly that many acknowledged writes, in order, each
 * targeting the point that is current once its predecessor has been
 * acknowledged.  The UI never advances optimistically; progress and the
 * next index always come from the service reply, so the displayed state
 * equals the persisted state after quiescence.
 */

import { ApiClient, ApiError, LabelName, StoredLabel } from './api.js';

export interface PointInfo {
  x: number;
  y: number;
  row: number;
  col: number;
}

export interface ViewState {
  scanId: string;
  currentIndex: number;
  zoom: number;
  patchHalf: number;
  labeled: number;
  total: number;
  complete: boolean;
  labels: StoredLabel[];
  lastError: string | null;
  connected: boolean;
}

export const DEFAULT_PATCH_HALF = 250;
export const DEFAULT_ZOOM = 2;

export class Session {
  private state: ViewState | null = null;
  private points: PointInfo[] = [];
  private queue: Promise<void> = Promise.resolve();
  private listeners: Array<(s: ViewState) => void> = [];

  constructor(private readonly client: ApiClient) {}

  onChange(listener: (s: ViewState) => void): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    if (this.state) {
      const snapshot = this.snapshot();
      for (const listener of this.listeners) {
        listener(snapshot);
      }
    }
  }

  snapshot(): ViewState {
    if (!this.state) {
      throw new Error('session not loaded');
    }
    return { ...this.state, labels: [...this.state.labels] };
  }

  point(index: number): PointInfo {
    const info = this.points[index];
    if (!info) {
      throw new Error(`no grid point ${index}`);
    }
    return info;
  }

  /** Initialize from the service; the server is authoritative over any
   * previously cached view.  Jumps to the first unlabeled point. */
  async load(): Promise<ViewState> {
    try {
      const session = await this.client.session();
      const entries = await this.client.annotations();
      this.points = entries.map((e) => ({ x: e.x, y: e.y, row: e.row, col: e.col }));
      this.state = {
        scanId: session.scan_id,
        currentIndex: session.next_index ?? 0,
        zoom: this.state?.zoom ?? DEFAULT_ZOOM,
        patchHalf: this.state?.patchHalf ?? DEFAULT_PATCH_HALF,
        labeled: session.labeled,
        total: session.total,
        complete: session.labeled === session.total,
        labels: entries.map((e) => e.label),
        lastError: null,
        connected: true,
      };
    } catch (err) {
      if (this.state) {
        this.state.connected = false;
        this.state.lastError = String(err);
      } else {
        throw err;
      }
    }
    this.emit();
    return this.snapshot();
  }

  private enqueue(op: () => Promise<void>): Promise<void> {
    const next = this.queue.then(op, op);
    // keep the chain alive after failures; errors land in state.lastError
    this.queue = next.catch(() => undefined);
    return next;
  }

  /** Wait until every queued operation has been acknowledged. */
  quiesce(): Promise<void> {
    return this.queue;
  }

  /** Label the current point; advances only after the service ack. */
  labelCurrent(label: LabelName): Promise<void> {
    return this.enqueue(async () => {
      const state = this.state;
      if (!state) {
        throw new Error('session not loaded');
      }
      const index = state.currentIndex;
      try {
        const reply = await this.client.putLabel(index, label);
        state.labels[index] = label;
        state.labeled = reply.labeled;
        state.complete = reply.next_index === null;
        if (reply.next_index !== null) {
          state.currentIndex = reply.next_index;
        }
        state.lastError = null;
        state.connected = true;
      } catch (err) {
        state.lastError = err instanceof ApiError ? err.message : String(err);
        state.connected = !(err instanceof ApiError && err.status === 0);
      }
      this.emit();
    });
  }

  /** Revert the last acknowledged label and return to that point. */
  undo(): Promise<void> {
    return this.enqueue(async () => {
      const state = this.state;
      if (!state) {
        throw new Error('session not loaded');
      }
      try {
        const reply = await this.client.undo();
        state.labels[reply.index] = 'UNLABELED';
        state.labeled = reply.labeled;
        state.complete = reply.next_index === null;
        state.currentIndex = reply.index;
        state.lastError = null;
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          state.lastError = 'nothing to undo';
        } else {
          state.lastError = err instanceof ApiError ? err.message : String(err);
        }
      }
      this.emit();
    });
  }

  /** Pure client-side navigation (arrow keys); clamped to the grid. */
  navigate(delta: number): void {
    const state = this.state;
    if (!state) {
      return;
    }
    const target = Math.min(state.total - 1, Math.max(0, state.currentIndex + delta));
    if (target !== state.currentIndex) {
      state.currentIndex = target;
      this.emit();
    }
  }

  setZoom(zoom: number): void {
    const state = this.state;
    if (state && zoom >= 1 && zoom <= 8) {
      state.zoom = zoom;
      this.emit();
    }
  }
}
