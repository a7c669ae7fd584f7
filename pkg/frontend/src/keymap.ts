/** Keyboard bindings: the whole task is 10,000 repetitive judgments, so
 * every action must be reachable without the mouse. */

import type { LabelName } from './api.js';

export type KeyAction =
  | { kind: 'label'; label: LabelName }
  | { kind: 'undo' }
  | { kind: 'nav'; delta: number };

export type Keymap = ReadonlyMap<string, KeyAction>;

export function makeKeymap(entries: Iterable<[string, KeyAction]>): Keymap {
  const map = new Map<string, KeyAction>();
  for (const [key, action] of entries) {
    if (map.has(key)) {
      throw new Error(`duplicate key binding: ${key}`);
    }
    map.set(key, action);
  }
  return map;
}

export const DEFAULT_KEYMAP: Keymap = makeKeymap([
  ['1', { kind: 'label', label: 'AGG' }],
  ['2', { kind: 'label', label: 'PASTE' }],
  ['3', { kind: 'label', label: 'VOID' }],
  ['u', { kind: 'undo' }],
  ['ArrowRight', { kind: 'nav', delta: 1 }],
  ['ArrowLeft', { kind: 'nav', delta: -1 }],
]);

export function lookupKey(map: Keymap, key: string): KeyAction | undefined {
  return map.get(key.length === 1 ? key.toLowerCase() : key);
}
