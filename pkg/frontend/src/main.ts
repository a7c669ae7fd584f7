import { ApiClient } from './api.js';
import { Session } from './state.js';
import { TileCache } from './tiles.js';
import { AnnotatorView } from './view.js';

const client = new ApiClient();
const session = new Session(client);
const root = document.getElementById('app');
if (!root) {
  throw new Error('missing #app element');
}
new AnnotatorView(root, session, new TileCache(client));
session.load().catch((err) => {
  root.textContent = `cannot reach the annotation service: ${String(err)} (reload to retry)`;
});
