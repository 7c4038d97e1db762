import { runInBrowser } from './client.js';

const mount = document.getElementById('app');
if (mount) {
  void runInBrowser('', mount); // same-origin server
}
