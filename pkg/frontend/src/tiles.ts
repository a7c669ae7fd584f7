/** Patch image loader with per-(index, zoom) caching.
 *
 * The service pads tile crops with black beyond the scan border, so the
 * grid point is always the exact center pixel of the returned image and
 * the crosshair never moves, even at corners.
 */

import { ApiClient } from './api.js';
import type { PointInfo } from './state.js';

type BlobFetch = (url: string) => Promise<Blob>;

const defaultBlobFetch: BlobFetch = async (url) => {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`tile fetch failed with status ${response.status}`);
  }
  return response.blob();
};

export class TileCache {
  private cache = new Map<string, Promise<Blob>>();

  constructor(
    private readonly client: ApiClient,
    private readonly fetchBlob: BlobFetch = defaultBlobFetch,
  ) {}

  key(index: number, zoom: number): string {
    return `${index}:${zoom}`;
  }

  /** Fetch (or reuse) the patch for a grid point; failures are evicted so
   * a retry refetches. */
  patch(index: number, point: PointInfo, half: number, zoom: number): Promise<Blob> {
    const key = this.key(index, zoom);
    let pending = this.cache.get(key);
    if (!pending) {
      const url = this.client.tileUrl(point.x, point.y, half, zoom);
      pending = this.fetchBlob(url);
      pending.catch(() => this.cache.delete(key));
      this.cache.set(key, pending);
    }
    return pending;
  }

  get size(): number {
    return this.cache.size;
  }
}
