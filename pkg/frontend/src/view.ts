/** DOM bindings: patch canvas with centered crosshair, progress readout,
 * key handling, error toasts, and a retry banner while disconnected. */

import { Session, ViewState } from './state.js';
import { TileCache } from './tiles.js';
import { DEFAULT_KEYMAP, lookupKey } from './keymap.js';

export class AnnotatorView {
  private readonly image: HTMLImageElement;
  private readonly status: HTMLElement;
  private readonly progress: HTMLElement;
  private readonly toast: HTMLElement;
  private readonly banner: HTMLElement;
  private objectUrl: string | null = null;
  private renderToken = 0;

  constructor(
    private readonly root: HTMLElement,
    private readonly session: Session,
    private readonly tiles: TileCache,
  ) {
    this.root.innerHTML = `
      <div class="banner hidden"></div>
      <div class="patch">
        <img alt="scan patch" draggable="false">
        <div class="crosshair-h"></div>
        <div class="crosshair-v"></div>
      </div>
      <div class="status"></div>
      <div class="progress"></div>
      <div class="toast hidden"></div>
      <div class="help">1 aggregate &middot; 2 paste &middot; 3 void &middot; U undo &middot; &larr;/&rarr; navigate</div>
    `;
    this.image = this.root.querySelector('img')!;
    this.status = this.root.querySelector('.status')!;
    this.progress = this.root.querySelector('.progress')!;
    this.toast = this.root.querySelector('.toast')!;
    this.banner = this.root.querySelector('.banner')!;
    this.session.onChange((state) => void this.render(state));
    document.addEventListener('keydown', (event) => this.onKey(event));
  }

  private onKey(event: KeyboardEvent): void {
    const action = lookupKey(DEFAULT_KEYMAP, event.key);
    if (!action) {
      return;
    }
    event.preventDefault();
    if (action.kind === 'label') {
      void this.session.labelCurrent(action.label);
    } else if (action.kind === 'undo') {
      void this.session.undo();
    } else {
      this.session.navigate(action.delta);
    }
  }

  private async render(state: ViewState): Promise<void> {
    const token = ++this.renderToken;
    const point = this.session.point(state.currentIndex);
    this.status.textContent = state.complete
      ? `${state.scanId}: complete`
      : `${state.scanId}: point ${state.currentIndex + 1} of ${state.total} ` +
        `(row ${point.row}, col ${point.col}) = ${state.labels[state.currentIndex]}`;
    this.progress.textContent = `${state.labeled} / ${state.total} labeled`;
    this.banner.classList.toggle('hidden', state.connected);
    this.banner.textContent = state.connected ? '' : 'service unreachable, retrying on next action';
    this.toast.classList.toggle('hidden', !state.lastError);
    this.toast.textContent = state.lastError ?? '';
    try {
      const blob = await this.tiles.patch(state.currentIndex, point, state.patchHalf, state.zoom);
      if (token !== this.renderToken) {
        return; // a newer point superseded this fetch
      }
      if (this.objectUrl) {
        URL.revokeObjectURL(this.objectUrl);
      }
      this.objectUrl = URL.createObjectURL(blob);
      this.image.src = this.objectUrl;
      this.image.classList.remove('failed');
    } catch {
      if (token === this.renderToken) {
        this.image.removeAttribute('src');
        this.image.classList.add('failed');
      }
    }
  }
}
